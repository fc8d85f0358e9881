//! A downlink scenario: a corpus served to `U` time-multiplexed users, each
//! with its own link, under one base-station power budget.
//!
//! Record `i` is always delivered to user `i mod U`, and every user gets an
//! equal `1/U` share of the budget for its time slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{softmax, Budget};
use crate::channel::{ChannelParams, CodingParams, Fading};
use crate::corpus::{Corpus, ImageRecord};
use crate::diffusion::env::EnvironmentVector;
use crate::error::{Error, Result};
use crate::quality::{transmission_quality, Allocation};

/// Population-level channel description from which per-user links are
/// drawn. Gains are log-uniform in `[gain_min, gain_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    #[serde(default = "ChannelModel::default_noise")]
    pub noise_power: f64,
    #[serde(default = "ChannelModel::default_gain_min")]
    pub gain_min: f64,
    #[serde(default = "ChannelModel::default_gain_max")]
    pub gain_max: f64,
    #[serde(default = "ChannelModel::default_fading")]
    pub fading: Fading,
}

impl ChannelModel {
    fn default_noise() -> f64 {
        1e-7
    }
    fn default_gain_min() -> f64 {
        2e-9
    }
    fn default_gain_max() -> f64 {
        2e-8
    }
    fn default_fading() -> Fading {
        Fading::Rayleigh
    }

    pub fn validate(&self) -> Result<()> {
        ChannelParams::new(self.noise_power, self.gain_min, self.fading)?;
        if !(self.gain_max >= self.gain_min && self.gain_max.is_finite()) {
            return Err(Error::invalid(format!(
                "gain range [{}, {}] is empty",
                self.gain_min, self.gain_max
            )));
        }
        Ok(())
    }

    /// Draws one link per user, deterministically in `seed`.
    pub fn draw_links(&self, users: usize, seed: u64) -> Result<Vec<ChannelParams>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (self.gain_min.ln(), self.gain_max.ln());
        (0..users)
            .map(|_| {
                let gain = if hi > lo { rng.gen_range(lo..hi).exp() } else { self.gain_min };
                ChannelParams::new(self.noise_power, gain, self.fading)
            })
            .collect()
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            noise_power: Self::default_noise(),
            gain_min: Self::default_gain_min(),
            gain_max: Self::default_gain_max(),
            fading: Self::default_fading(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    corpus: Corpus,
    links: Vec<ChannelParams>,
    coding: CodingParams,
    budget: Budget,
    n_max: usize,
}

impl Scenario {
    pub fn new(
        corpus: Corpus,
        links: Vec<ChannelParams>,
        coding: CodingParams,
        budget: Budget,
        n_max: usize,
    ) -> Result<Self> {
        corpus.validate()?;
        coding.validate()?;
        if links.is_empty() {
            return Err(Error::invalid("scenario needs at least one user"));
        }
        if corpus.records.len() < links.len() {
            return Err(Error::invalid(format!(
                "corpus has {} records for {} users; every user needs at least one image",
                corpus.records.len(),
                links.len()
            )));
        }
        if corpus.max_triplets() > n_max {
            return Err(Error::invalid(format!(
                "corpus has records with {} triplets but N_max is {n_max}",
                corpus.max_triplets()
            )));
        }
        Ok(Self {
            corpus,
            links,
            coding,
            budget,
            n_max,
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn links(&self) -> &[ChannelParams] {
        &self.links
    }

    pub fn coding(&self) -> &CodingParams {
        &self.coding
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn users(&self) -> usize {
        self.links.len()
    }

    pub fn num_records(&self) -> usize {
        self.corpus.records.len()
    }

    pub fn record(&self, idx: usize) -> &ImageRecord {
        &self.corpus.records[idx]
    }

    pub fn link_of(&self, record_idx: usize) -> &ChannelParams {
        &self.links[record_idx % self.links.len()]
    }

    /// Per-user share of the base-station budget.
    pub fn user_budget(&self) -> Budget {
        self.budget
            .split(self.links.len())
            .expect("positive budget split over at least one user")
    }

    pub fn with_budget(&self, budget: Budget) -> Self {
        Self {
            budget,
            ..self.clone()
        }
    }

    /// Conditioning vector for record `idx` on its user's link.
    pub fn env(&self, idx: usize) -> EnvironmentVector {
        EnvironmentVector::encode(
            &self.record(idx).importances(),
            self.link_of(idx),
            &self.coding,
            self.user_budget(),
            self.n_max,
        )
        .expect("scenario invariants guarantee a valid environment")
    }

    /// Maps padded policy logits to powers over the record's `N` triplets.
    pub fn allocation_from_logits(&self, idx: usize, logits: &[f64]) -> Result<Allocation> {
        let n = self.record(idx).len();
        if logits.len() < n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: logits.len(),
            });
        }
        let total = self.user_budget().total_power();
        Allocation::new(softmax(&logits[..n])?.into_iter().map(|w| w * total).collect())
    }

    /// Quality of record `idx` under `alloc`.
    pub fn quality(&self, idx: usize, alloc: &Allocation) -> Result<f64> {
        alloc.check_budget(self.user_budget().total_power())?;
        Ok(transmission_quality(self.record(idx), alloc, self.link_of(idx), &self.coding)?.total)
    }

    /// Mean multi-user quality per transmission round: `U` times the mean
    /// per-image quality over the whole corpus.
    pub fn evaluate(&self, mut allocate: impl FnMut(usize) -> Result<Allocation>) -> Result<f64> {
        let mut sum = 0.0;
        for idx in 0..self.num_records() {
            sum += self.quality(idx, &allocate(idx)?)?;
        }
        Ok(self.users() as f64 * sum / self.num_records() as f64)
    }
}
