//! Semantic transmission quality: `sum_j I_j * (1 - P_d_j)` over an image's
//! triplets, and its aggregation across users.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, CodingParams};
use crate::corpus::ImageRecord;
use crate::error::{Error, Result};

/// Per-triplet transmit powers in W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    powers: Vec<f64>,
}

impl Allocation {
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if let Some((j, p)) = powers
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p >= 0.0))
        {
            return Err(Error::invalid(format!(
                "allocation entry {j} must be finite and >= 0, got {p}"
            )));
        }
        Ok(Self { powers })
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.powers.iter().sum()
    }

    /// Fails if the allocation spends more than `total_power` (with a 1e-9
    /// relative slack).
    pub fn check_budget(&self, total_power: f64) -> Result<()> {
        let spent = self.total();
        if spent > total_power * (1.0 + 1e-9) {
            return Err(Error::validation(format!(
                "allocation spends {spent} W over a {total_power} W budget"
            )));
        }
        Ok(())
    }

    pub fn into_powers(self) -> Vec<f64> {
        self.powers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub per_triplet_drop: Vec<f64>,
    pub per_triplet_contrib: Vec<f64>,
    pub total: f64,
}

/// Builds a report from importances and already-computed drop probabilities.
pub fn quality_from_drops(importances: &[f64], drops: &[f64]) -> Result<QualityReport> {
    if importances.len() != drops.len() {
        return Err(Error::DimensionMismatch {
            expected: importances.len(),
            actual: drops.len(),
        });
    }
    let contrib: Vec<f64> = importances
        .iter()
        .zip(drops)
        .map(|(i, d)| i * (1.0 - d))
        .collect();
    Ok(QualityReport {
        total: contrib.iter().sum(),
        per_triplet_drop: drops.to_vec(),
        per_triplet_contrib: contrib,
    })
}

/// Quality of one image sent over `chan` with the given per-triplet powers.
/// A triplet with zero power is still sent, at bit-error probability 0.5.
pub fn transmission_quality(
    record: &ImageRecord,
    alloc: &Allocation,
    chan: &ChannelParams,
    coding: &CodingParams,
) -> Result<QualityReport> {
    if alloc.len() != record.len() {
        return Err(Error::DimensionMismatch {
            expected: record.len(),
            actual: alloc.len(),
        });
    }
    let drops = alloc
        .powers()
        .iter()
        .map(|&p| chan.drop_prob(p, coding))
        .collect::<Result<Vec<_>>>()?;
    quality_from_drops(&record.importances(), &drops)
}

/// Multi-user objective: the plain sum of per-user totals.
pub fn aggregate_users(reports: &[QualityReport]) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty list of reports"));
    }
    Ok(reports.iter().map(|r| r.total).sum())
}

/// `sum_j I_j`, reached only when every triplet gets through.
pub fn quality_upper_bound(record: &ImageRecord) -> f64 {
    record.triplets.iter().map(|t| t.importance).sum()
}
