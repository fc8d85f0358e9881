use serde::{Deserialize, Serialize};

use crate::allocator::Budget;
use crate::channel::{ChannelParams, CodingParams};
use crate::error::{Error, Result};

/// Number of non-importance features appended after the padded importances.
pub const ENV_EXTRA_FEATURES: usize = 6;

/// Fixed-width conditioning vector of the policy and critic.
///
/// Layout: `I_1..I_{N_max}` (zero-padded past `N`), then
/// `log10(gain / noise) / 2`, `log10(budget_w) / 3`,
/// `log10(budget_w * gain / (noise * N)) / 2` (mean per-triplet SNR),
/// `N / N_max`, `log2(L_T) / 12`, `L_E / L_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentVector {
    values: Vec<f64>,
    n_triplets: usize,
    n_max: usize,
}

impl EnvironmentVector {
    pub fn dim(n_max: usize) -> usize {
        n_max + ENV_EXTRA_FEATURES
    }

    pub fn encode(
        importances: &[f64],
        link: &ChannelParams,
        coding: &CodingParams,
        budget: Budget,
        n_max: usize,
    ) -> Result<Self> {
        let n = importances.len();
        if n == 0 || n > n_max {
            return Err(Error::invalid(format!(
                "environment needs 1 <= N <= N_max, got N={n} N_max={n_max}"
            )));
        }
        let mut values = Vec::with_capacity(Self::dim(n_max));
        values.extend_from_slice(importances);
        values.resize(n_max, 0.0);
        let gain_ratio = link.pathloss_gain / link.noise_power;
        let watts = budget.total_power();
        values.push(gain_ratio.log10() / 2.0);
        values.push(watts.log10() / 3.0);
        values.push((watts * gain_ratio / n as f64).log10() / 2.0);
        values.push(n as f64 / n_max as f64);
        values.push((coding.bits_per_triplet as f64).log2() / 12.0);
        values.push(coding.correctable_bits as f64 / coding.bits_per_triplet as f64);
        Ok(Self {
            values,
            n_triplets: n,
            n_max,
        })
    }

    /// Wraps a raw feature vector, e.g. for tests against synthetic critics.
    pub fn from_raw(values: Vec<f64>, n_triplets: usize, n_max: usize) -> Result<Self> {
        if values.len() != Self::dim(n_max) {
            return Err(Error::DimensionMismatch {
                expected: Self::dim(n_max),
                actual: values.len(),
            });
        }
        if n_triplets == 0 || n_triplets > n_max {
            return Err(Error::invalid("environment needs 1 <= N <= N_max"));
        }
        Ok(Self {
            values,
            n_triplets,
            n_max,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of real (unpadded) triplets.
    pub fn n_triplets(&self) -> usize {
        self.n_triplets
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }
}
