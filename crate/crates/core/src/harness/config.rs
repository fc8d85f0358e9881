//! Experiment configuration files (TOML).
//!
//! ```toml
//! experiment = "power_sweep"        # convergence | power_sweep | budget_convergence
//! users = 4
//! schemes = ["equal", "importance", "diffusion"]
//! budgets_w = [800, 1200, 1600, 2000, 2400]
//! t_list = [12]
//! epochs = 300
//! seeds = [0, 1, 2, 3, 4]
//! out_dir = "out/power_sweep"
//!
//! [corpus.synthetic]                # or: [corpus] path = "corpus.json"
//! images = 32
//! triplets = 8
//! seed = 123
//!
//! [channel]
//! noise_power = 1e-7
//!
//! [coding]
//! bits_per_triplet = 512
//! correctable_bits = 26
//!
//! [train]
//! batch_size = 32
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::CodingParams;
use crate::corpus::{load_corpus, synth_corpus, Corpus};
use crate::diffusion::TrainConfig;
use crate::error::{Error, Result};
use crate::scenario::ChannelModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Training curves per denoising-step count at a fixed budget.
    Convergence,
    /// Final quality of every scheme across budgets.
    PowerSweep,
    /// Training curves per budget, with convergence-epoch estimates.
    BudgetConvergence,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::PowerSweep => "power_sweep",
            Self::BudgetConvergence => "budget_convergence",
        }
    }
}

/// Allocation schemes, in the order their rows appear in `results.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Equal,
    Importance,
    Diffusion,
    Pg,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Equal => "equal",
            Self::Importance => "importance",
            Self::Diffusion => "diffusion",
            Self::Pg => "pg",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Self::Diffusion | Self::Pg)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticCorpus {
    pub images: usize,
    pub triplets: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        Self {
            images: 32,
            triplets: 8,
            seed: 123,
        }
    }
}

/// Exactly one of `path` (a corpus JSON file, relative to the config file)
/// or `synthetic`. Omitting the table uses the default synthetic corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SyntheticCorpus>,
}

impl CorpusSpec {
    pub fn load(&self) -> Result<Corpus> {
        match (&self.path, &self.synthetic) {
            (Some(_), Some(_)) => Err(Error::Config(
                "corpus: give either `path` or `synthetic`, not both".into(),
            )),
            (Some(path), None) => load_corpus(path),
            (None, Some(s)) => synth_corpus(s.images, s.triplets, s.seed),
            (None, None) => {
                let s = SyntheticCorpus::default();
                synth_corpus(s.images, s.triplets, s.seed)
            }
        }
    }
}

fn default_users() -> usize {
    4
}
fn default_t_list() -> Vec<usize> {
    vec![12]
}
fn default_epochs() -> usize {
    300
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_users")]
    pub users: usize,
    #[serde(default)]
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub coding: CodingParams,
    pub budgets_w: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// Denoising-step counts; only diffusion runs are repeated per entry.
    #[serde(default = "default_t_list")]
    pub t_list: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory, relative to the working directory.
    pub out_dir: Option<PathBuf>,
    /// Also write one checkpoint per trained diffusion policy.
    #[serde(default)]
    pub save_checkpoints: bool,
    /// Network and optimizer settings. `epochs`, `steps` and `seed` are
    /// overridden per job from the sweep dimensions above.
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file; a relative corpus path is
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(corpus) = config.corpus.path.as_mut() {
            if corpus.is_relative() {
                if let Some(dir) = path.parent() {
                    *corpus = dir.join(&*corpus);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.users == 0 {
            return fail("users must be >= 1".into());
        }
        for (name, empty) in [
            ("budgets_w", self.budgets_w.is_empty()),
            ("schemes", self.schemes.is_empty()),
            ("t_list", self.t_list.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return fail(format!("{name} must not be empty"));
            }
        }
        if let Some(b) = self.budgets_w.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return fail(format!("budgets_w: budget must be positive, got {b}"));
        }
        if self.t_list.contains(&0) {
            return fail("t_list: denoising steps must be >= 1".into());
        }
        let mut budgets: Vec<f64> = self.budgets_w.clone();
        budgets.sort_by(f64::total_cmp);
        budgets.dedup();
        if budgets.len() != self.budgets_w.len()
            || self.schemes.iter().collect::<BTreeSet<_>>().len() != self.schemes.len()
            || self.t_list.iter().collect::<BTreeSet<_>>().len() != self.t_list.len()
            || self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len()
        {
            return fail("sweep lists must not contain duplicates".into());
        }
        let has = |s: Scheme| self.schemes.contains(&s);
        match self.experiment {
            ExperimentKind::Convergence if !(has(Scheme::Diffusion) || has(Scheme::Pg)) => {
                return fail("convergence needs `diffusion` or `pg` in schemes".into());
            }
            ExperimentKind::PowerSweep if self.budgets_w.len() < 2 => {
                return fail("power_sweep needs at least two budgets".into());
            }
            ExperimentKind::BudgetConvergence
                if !has(Scheme::Diffusion) || self.budgets_w.len() < 2 =>
            {
                return fail(
                    "budget_convergence needs `diffusion` in schemes and at least two budgets".into(),
                );
            }
            _ => {}
        }
        self.channel.validate()?;
        self.coding.validate()?;
        self.train.validate()
    }

    /// Shifts every seed by `offset`, e.g. to draw fresh replicates.
    pub fn with_seed_offset(mut self, offset: u64) -> Self {
        self.seeds.iter_mut().for_each(|s| *s = s.wrapping_add(offset));
        self
    }
}
