//! Experiment runner: config files, seeded sweeps, CSV and SVG output.

pub mod config;
mod output;
mod run;
mod svg;

use std::collections::BTreeMap;
use std::fmt;

pub use config::{CorpusSpec, ExperimentConfig, ExperimentKind, Scheme, SyntheticCorpus};
pub use output::{convergence_csv, emit_outputs, results_csv, CONVERGENCE_HEADER, RESULTS_HEADER};
pub use run::{run_budget_convergence, run_convergence, run_experiment, run_power_sweep};

use crate::diffusion::DiffusionPolicy;

/// Width of the tail averaged by [`convergence_epoch`].
pub const CONVERGENCE_TAIL: usize = 20;
/// Relative band around the tail mean that counts as converged.
pub const CONVERGENCE_BAND: f64 = 0.02;

/// One line of `results.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub scheme: Scheme,
    /// Denoising steps; 0 for schemes without a chain.
    pub t: usize,
    pub budget_w: f64,
    pub seed: u64,
    /// 1-based training epoch for curves, `epochs` for a trained policy's
    /// final evaluation, 0 for static schemes.
    pub epoch: usize,
    pub mean_quality: f64,
}

impl Row {
    fn key(&self) -> (Scheme, usize, u64, u64, usize) {
        (self.scheme, self.t, self.budget_w.to_bits(), self.seed, self.epoch)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub t: usize,
    pub budget_w: f64,
    pub seed: u64,
    pub policy: DiffusionPolicy,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub kind: ExperimentKind,
    pub rows: Vec<Row>,
    /// Trained diffusion policies, when checkpoints were requested.
    pub policies: Vec<TrainedPolicy>,
}

/// Convergence epoch of one training curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceEstimate {
    pub scheme: Scheme,
    pub t: usize,
    pub budget_w: f64,
    pub seed: u64,
    pub epoch: Option<usize>,
}

/// A scheme whose quality dropped as the budget grew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityViolation {
    pub scheme: Scheme,
    pub t: usize,
    pub seed: u64,
    pub lower_budget_w: f64,
    pub higher_budget_w: f64,
    pub drop: f64,
}

impl fmt::Display for MonotonicityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (T={}, seed {}) loses {:.4} quality going from {} W to {} W",
            self.scheme, self.t, self.seed, self.drop, self.lower_budget_w, self.higher_budget_w
        )
    }
}

/// First 1-based epoch whose value lies within 2% of the mean of the last
/// 20 epochs (or of the whole curve if shorter).
pub fn convergence_epoch(curve: &[f64]) -> Option<usize> {
    let tail = &curve[curve.len().saturating_sub(CONVERGENCE_TAIL)..];
    if tail.is_empty() {
        return None;
    }
    let target = tail.iter().sum::<f64>() / tail.len() as f64;
    curve
        .iter()
        .position(|q| (q - target).abs() <= CONVERGENCE_BAND * target.abs())
        .map(|k| k + 1)
}

impl SweepResult {
    /// Canonical row order: scheme, T, budget, seed, epoch.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (a.scheme, a.t)
                .cmp(&(b.scheme, b.t))
                .then(a.budget_w.total_cmp(&b.budget_w))
                .then((a.seed, a.epoch).cmp(&(b.seed, b.epoch)))
        });
        self.policies.sort_by(|a, b| {
            a.t.cmp(&b.t)
                .then(a.budget_w.total_cmp(&b.budget_w))
                .then(a.seed.cmp(&b.seed))
        });
    }

    /// True if no two rows share (scheme, T, budget, seed, epoch).
    pub fn rows_are_unique(&self) -> bool {
        let mut keys: Vec<_> = self.rows.iter().map(Row::key).collect();
        keys.sort_unstable();
        keys.windows(2).all(|w| w[0] != w[1])
    }

    /// Rows of one training curve, grouped by (scheme, T, budget, seed), in
    /// row order. Rows with epoch 0 are not part of any curve.
    pub fn curves(&self) -> Vec<((Scheme, usize, f64, u64), Vec<f64>)> {
        let mut out: Vec<((Scheme, usize, f64, u64), Vec<f64>)> = Vec::new();
        for r in self.rows.iter().filter(|r| r.epoch > 0) {
            let key = (r.scheme, r.t, r.budget_w, r.seed);
            match out.last_mut() {
                Some((k, curve)) if *k == key => curve.push(r.mean_quality),
                _ => out.push((key, vec![r.mean_quality])),
            }
        }
        out
    }

    pub fn convergence_estimates(&self) -> Vec<ConvergenceEstimate> {
        self.curves()
            .into_iter()
            .map(|((scheme, t, budget_w, seed), curve)| ConvergenceEstimate {
                scheme,
                t,
                budget_w,
                seed,
                epoch: convergence_epoch(&curve),
            })
            .collect()
    }

    /// Adjacent-budget decreases of the final quality, per scheme, T and seed.
    pub fn budget_monotonicity_violations(&self) -> Vec<MonotonicityViolation> {
        let mut out = Vec::new();
        // Last epoch of each (scheme, T, budget, seed).
        let mut last: BTreeMap<(Scheme, usize, u64, u64), &Row> = BTreeMap::new();
        for r in &self.rows {
            let slot = last.entry((r.scheme, r.t, r.seed, r.budget_w.to_bits())).or_insert(r);
            if r.epoch > slot.epoch {
                *slot = r;
            }
        }
        let mut finals: Vec<&Row> = last.into_values().collect();
        finals.sort_by(|a, b| {
            (a.scheme, a.t, a.seed)
                .cmp(&(b.scheme, b.t, b.seed))
                .then(a.budget_w.total_cmp(&b.budget_w))
        });
        for w in finals.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if (lo.scheme, lo.t, lo.seed) == (hi.scheme, hi.t, hi.seed)
                && hi.mean_quality < lo.mean_quality
            {
                out.push(MonotonicityViolation {
                    scheme: lo.scheme,
                    t: lo.t,
                    seed: lo.seed,
                    lower_budget_w: lo.budget_w,
                    higher_budget_w: hi.budget_w,
                    drop: lo.mean_quality - hi.mean_quality,
                });
            }
        }
        out
    }
}
