//! `results.csv`, `convergence.csv`, figure SVGs and optional checkpoints.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::config::{ExperimentKind, Scheme};
use super::svg::{line_chart, Series};
use super::SweepResult;
use crate::diffusion::checkpoint::save_policy;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str = "scheme,T,budget_w,seed,epoch,mean_quality";
pub const CONVERGENCE_HEADER: &str = "scheme,T,budget_w,seed,convergence_epoch";

/// CSV text of all rows in canonical order. Floats use the shortest
/// representation that round-trips.
pub fn results_csv(result: &SweepResult) -> String {
    let mut sorted = result.clone();
    sorted.sort();
    let mut out = String::with_capacity(64 * (sorted.rows.len() + 1));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in &sorted.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.scheme, r.t, r.budget_w, r.seed, r.epoch, r.mean_quality
        );
    }
    out
}

pub fn convergence_csv(result: &SweepResult) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for e in result.convergence_estimates() {
        let epoch = e.epoch.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{epoch}", e.scheme, e.t, e.budget_w, e.seed);
    }
    out
}

fn series_label(scheme: Scheme, t: usize) -> String {
    if scheme == Scheme::Diffusion {
        format!("diffusion T={t}")
    } else {
        scheme.to_string()
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Seed-averaged curves; static schemes become flat reference lines.
fn curve_series(result: &SweepResult, label_budget: bool) -> Vec<Series> {
    let max_epoch = result.rows.iter().map(|r| r.epoch).max().unwrap_or(0).max(1);
    let mut groups: BTreeMap<(Scheme, usize, u64), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in &result.rows {
        groups
            .entry((r.scheme, r.t, r.budget_w.to_bits()))
            .or_default()
            .entry(r.epoch)
            .or_default()
            .push(r.mean_quality);
    }
    groups
        .into_iter()
        .map(|((scheme, t, bits), by_epoch)| {
            let mut label = series_label(scheme, t);
            if label_budget {
                let _ = write!(label, ", {} W", f64::from_bits(bits));
            }
            let points = if scheme.is_learned() {
                by_epoch.iter().map(|(&e, qs)| (e as f64, mean(qs))).collect()
            } else {
                let q = mean(&by_epoch.values().flatten().copied().collect::<Vec<_>>());
                vec![(1.0, q), (max_epoch as f64, q)]
            };
            Series { label, points }
        })
        .collect()
}

/// Seed-averaged final quality against budget, one series per scheme (and T).
fn budget_series(result: &SweepResult) -> Vec<Series> {
    let mut groups: BTreeMap<(Scheme, usize), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in &result.rows {
        groups
            .entry((r.scheme, r.t))
            .or_default()
            .entry(r.budget_w.to_bits())
            .or_default()
            .push(r.mean_quality);
    }
    groups
        .into_iter()
        .map(|((scheme, t), by_budget)| Series {
            label: series_label(scheme, t),
            points: by_budget
                .iter()
                .map(|(&bits, qs)| (f64::from_bits(bits), mean(qs)))
                .collect(),
        })
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `results.csv` and, for non-empty results, the figure SVG
/// (`fig_<experiment>.svg`); curve experiments also get `convergence.csv`.
/// Files are overwritten. Returns the paths written.
pub fn emit_outputs(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![write(dir, "results.csv", &results_csv(result))?];
    if result.rows.is_empty() {
        return Ok(written);
    }
    let y_label = "mean semantic transmission quality";
    let svg = match result.kind {
        ExperimentKind::Convergence => line_chart(
            "Quality versus training epochs",
            "epoch",
            y_label,
            &curve_series(result, false),
        ),
        ExperimentKind::BudgetConvergence => line_chart(
            "Convergence versus power budget",
            "epoch",
            y_label,
            &curve_series(result, true),
        ),
        ExperimentKind::PowerSweep => line_chart(
            "Quality versus total transmit power",
            "total transmit power (W)",
            y_label,
            &budget_series(result),
        ),
    };
    written.push(write(dir, &format!("fig_{}.svg", result.kind.as_str()), &svg)?);
    if result.kind != ExperimentKind::PowerSweep {
        written.push(write(dir, "convergence.csv", &convergence_csv(result))?);
    }
    if !result.policies.is_empty() {
        let ckpt_dir = dir.join("checkpoints");
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
        for p in &result.policies {
            let path = ckpt_dir.join(format!("diffusion_T{}_B{}_seed{}.json", p.t, p.budget_w, p.seed));
            save_policy(&p.policy, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}
