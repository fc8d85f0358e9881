//! Sweep execution: one independent job per (scheme, T, budget, seed).

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::{ExperimentConfig, ExperimentKind, Scheme};
use super::{Row, SweepResult, TrainedPolicy};
use crate::allocator::{equal_allocation, importance_allocation, Budget};
use crate::corpus::Corpus;
use crate::diffusion::pg::pg_baseline_train;
use crate::diffusion::train::{mix_seed, train, TrainConfig};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Job {
    scheme: Scheme,
    /// Denoising steps; 0 for schemes without a chain.
    t: usize,
    budget_w: f64,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Record {
    /// One row per training epoch.
    Curve,
    /// One row with the trained policy's evaluated quality.
    Final,
}

struct JobOutput {
    rows: Vec<Row>,
    policy: Option<TrainedPolicy>,
}

/// Fig. 4 style: training curves for every `T` (and the PG baseline when
/// requested) at the configured budget(s).
pub fn run_convergence(config: &ExperimentConfig, jobs: usize) -> Result<SweepResult> {
    expect_kind(config, ExperimentKind::Convergence)?;
    run_sweep(config, Record::Curve, jobs)
}

/// Fig. 5 style: final quality per scheme and budget, retraining learned
/// schemes independently at each budget.
pub fn run_power_sweep(config: &ExperimentConfig, jobs: usize) -> Result<SweepResult> {
    expect_kind(config, ExperimentKind::PowerSweep)?;
    let result = run_sweep(config, Record::Final, jobs)?;
    for v in result.budget_monotonicity_violations() {
        log::warn!("{v}");
    }
    Ok(result)
}

/// Fig. 6 style: full training curves per budget. Convergence epochs are
/// derived from the result with [`SweepResult::convergence_estimates`].
pub fn run_budget_convergence(config: &ExperimentConfig, jobs: usize) -> Result<SweepResult> {
    expect_kind(config, ExperimentKind::BudgetConvergence)?;
    run_sweep(config, Record::Curve, jobs)
}

/// Dispatches on `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<SweepResult> {
    match config.experiment {
        ExperimentKind::Convergence => run_convergence(config, jobs),
        ExperimentKind::PowerSweep => run_power_sweep(config, jobs),
        ExperimentKind::BudgetConvergence => run_budget_convergence(config, jobs),
    }
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    config.validate()?;
    if config.experiment != kind {
        return Err(Error::Config(format!(
            "config describes a {} experiment, not {}",
            config.experiment.as_str(),
            kind.as_str()
        )));
    }
    Ok(())
}

fn plan(config: &ExperimentConfig) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &scheme in &config.schemes {
        let ts: &[usize] = if scheme == Scheme::Diffusion { &config.t_list } else { &[0] };
        for &t in ts {
            for &budget_w in &config.budgets_w {
                for &seed in &config.seeds {
                    jobs.push(Job {
                        scheme,
                        t,
                        budget_w,
                        seed,
                    });
                }
            }
        }
    }
    jobs
}

fn run_sweep(config: &ExperimentConfig, record: Record, workers: usize) -> Result<SweepResult> {
    let corpus = config.corpus.load()?;
    let n_max = corpus.max_triplets();
    // Per-image quality is at most the image's total importance.
    let bound = config.users as f64
        * corpus
            .records
            .iter()
            .map(|r| r.importances().iter().sum::<f64>())
            .fold(0.0, f64::max);
    let jobs = plan(config);
    log::info!(
        "{}: {} jobs on {} worker(s)",
        config.experiment.as_str(),
        jobs.len(),
        workers.max(1)
    );

    let outputs = run_parallel(&jobs, workers, |job| {
        let out = run_job(config, &corpus, n_max, job, record)?;
        if let Some(row) = out
            .rows
            .iter()
            .find(|r| !(r.mean_quality >= 0.0 && r.mean_quality <= bound * (1.0 + 1e-12)))
        {
            return Err(Error::validation(format!(
                "mean_quality {} outside [0, {bound}] for {} at {} W",
                row.mean_quality, row.scheme, row.budget_w
            )));
        }
        Ok(out)
    })?;

    let mut rows = Vec::new();
    let mut policies = Vec::new();
    for out in outputs {
        rows.extend(out.rows);
        policies.extend(out.policy);
    }
    let mut result = SweepResult {
        kind: config.experiment,
        rows,
        policies,
    };
    result.sort();
    Ok(result)
}

/// Runs `f` over `jobs` on up to `workers` threads and returns outputs in
/// job order, so results never depend on scheduling.
fn run_parallel<T: Send>(
    jobs: &[Job],
    workers: usize,
    f: impl Fn(&Job) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let workers = workers.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let out = f(job);
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|slot| slot.expect("every job ran"))
        .collect()
}

fn run_job(
    config: &ExperimentConfig,
    corpus: &Corpus,
    n_max: usize,
    job: &Job,
    record: Record,
) -> Result<JobOutput> {
    let links = config.channel.draw_links(config.users, job.seed)?;
    let scenario = Scenario::new(
        corpus.clone(),
        links,
        config.coding,
        Budget::new(job.budget_w)?,
        n_max,
    )?;
    let row = |epoch: usize, mean_quality: f64| Row {
        scheme: job.scheme,
        t: job.t,
        budget_w: job.budget_w,
        seed: job.seed,
        epoch,
        mean_quality,
    };
    let train_config = TrainConfig {
        epochs: config.epochs,
        steps: job.t.max(1),
        seed: mix_seed(job.seed, config.train.seed, 11),
        ..config.train.clone()
    };
    let eval_seed = mix_seed(job.seed, 12, 0);
    log::debug!(
        "{} T={} budget={} W seed={}",
        job.scheme,
        job.t,
        job.budget_w,
        job.seed
    );

    let curve_rows = |curve: &[f64]| {
        curve
            .iter()
            .enumerate()
            .map(|(k, &q)| row(k + 1, q))
            .collect::<Vec<_>>()
    };
    let out = match job.scheme {
        Scheme::Equal => JobOutput {
            rows: vec![row(
                0,
                scenario.evaluate(|i| equal_allocation(scenario.record(i).len(), scenario.user_budget()))?,
            )],
            policy: None,
        },
        Scheme::Importance => JobOutput {
            rows: vec![row(
                0,
                scenario.evaluate(|i| {
                    importance_allocation(&scenario.record(i).importances(), scenario.user_budget())
                })?,
            )],
            policy: None,
        },
        Scheme::Diffusion => {
            let outcome = train(&scenario, &train_config)?;
            if outcome.skipped_steps > 0 {
                log::warn!(
                    "diffusion T={} budget={} W seed={}: {} actor steps skipped",
                    job.t,
                    job.budget_w,
                    job.seed,
                    outcome.skipped_steps
                );
            }
            let rows = match record {
                Record::Curve => curve_rows(&outcome.curve),
                Record::Final => vec![row(config.epochs, outcome.policy.evaluate(&scenario, eval_seed)?)],
            };
            let policy = config.save_checkpoints.then(|| TrainedPolicy {
                t: job.t,
                budget_w: job.budget_w,
                seed: job.seed,
                policy: outcome.policy,
            });
            JobOutput { rows, policy }
        }
        Scheme::Pg => {
            let outcome = pg_baseline_train(&scenario, &train_config)?;
            let rows = match record {
                Record::Curve => curve_rows(&outcome.curve),
                Record::Final => vec![row(config.epochs, outcome.evaluate(&scenario)?)],
            };
            JobOutput { rows, policy: None }
        }
    };
    Ok(out)
}
