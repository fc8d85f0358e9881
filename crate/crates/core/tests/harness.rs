use std::path::Path;

use semra_core::corpus::{load_corpus, synth_corpus};
use semra_core::diffusion::load_policy;
use semra_core::harness::{
    emit_outputs, results_csv, run_budget_convergence, run_convergence, run_power_sweep, ExperimentConfig,
    Scheme, RESULTS_HEADER,
};

const SMALL_TRAIN: &str = r#"
[corpus.synthetic]
images = 6
triplets = 4
seed = 2

[train]
batch_size = 4
denoiser_hidden = [8]
critic_hidden = [8]
"#;

fn config(head: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!("{head}\n{SMALL_TRAIN}")).unwrap()
}

#[test]
fn static_power_sweep_needs_no_training() {
    let c = config(
        r#"
experiment = "power_sweep"
users = 3
schemes = ["equal"]
budgets_w = [800, 1200, 1600, 2000, 2400]
seeds = [0, 1, 2]
"#,
    );
    let r = run_power_sweep(&c, 2).unwrap();
    assert_eq!(r.rows.len(), 15);
    assert!(r.rows.iter().all(|row| row.t == 0 && row.epoch == 0));
    assert!(r.budget_monotonicity_violations().is_empty());
}

#[test]
fn row_count_is_the_cartesian_size() {
    let c = config(
        r#"
experiment = "power_sweep"
users = 2
schemes = ["equal", "importance", "diffusion", "pg"]
budgets_w = [500, 900]
t_list = [2, 3]
epochs = 2
seeds = [4, 5]
"#,
    );
    let r = run_power_sweep(&c, 1).unwrap();
    // equal, importance, pg: 2 budgets x 2 seeds; diffusion additionally x 2 T
    assert_eq!(r.rows.len(), 3 * 4 + 2 * 4);
    assert!(r.rows_are_unique());
    let bound = 2.0 * 4.0;
    assert!(r.rows.iter().all(|row| (0.0..=bound).contains(&row.mean_quality)));
}

#[test]
fn convergence_curves_have_one_row_per_epoch() {
    let c = config(
        r#"
experiment = "convergence"
users = 2
schemes = ["diffusion", "pg"]
budgets_w = [2000]
t_list = [2, 5]
epochs = 1
seeds = [0, 1]
"#,
    );
    let r = run_convergence(&c, 1).unwrap();
    // epochs = 1: single-point curves, two rows per (scheme, T, epoch)
    assert_eq!(r.rows.len(), 3 * 2);
    assert!(r.rows.iter().all(|row| row.epoch == 1));
    assert_eq!(r.rows.iter().filter(|row| row.scheme == Scheme::Diffusion && row.t == 5).count(), 2);
    assert_eq!(r.convergence_estimates().len(), 6);
}

#[test]
fn budget_convergence_estimates_are_reproducible() {
    let c = config(
        r#"
experiment = "budget_convergence"
users = 2
schemes = ["diffusion"]
budgets_w = [800, 2400]
t_list = [3]
epochs = 25
seeds = [7]
"#,
    );
    let a = run_budget_convergence(&c, 1).unwrap();
    let b = run_budget_convergence(&c, 2).unwrap();
    let (ea, eb) = (a.convergence_estimates(), b.convergence_estimates());
    assert_eq!(ea.len(), 2);
    assert_eq!(ea, eb);
    assert!(ea.iter().all(|e| e.epoch.map_or(true, |k| (1..=25).contains(&k))));
    assert_eq!(results_csv(&a), results_csv(&b));
}

#[test]
fn seed_offset_moves_the_seed_column() {
    let c = config(
        r#"
experiment = "power_sweep"
users = 2
schemes = ["equal"]
budgets_w = [800, 1600]
seeds = [0]
"#,
    );
    let base = run_power_sweep(&c, 1).unwrap();
    let shifted = run_power_sweep(&c.clone().with_seed_offset(5), 1).unwrap();
    assert!(shifted.rows.iter().all(|r| r.seed == 5));
    let direct = run_power_sweep(
        &ExperimentConfig {
            seeds: vec![5],
            ..c
        },
        1,
    )
    .unwrap();
    assert_eq!(results_csv(&shifted), results_csv(&direct));
    assert_ne!(results_csv(&shifted), results_csv(&base));
}

#[test]
fn outputs_and_checkpoints_are_written() {
    let mut c = config(
        r#"
experiment = "power_sweep"
users = 2
schemes = ["equal", "diffusion"]
budgets_w = [800, 1600]
t_list = [3]
epochs = 2
seeds = [0]
"#,
    );
    c.save_checkpoints = true;
    let r = run_power_sweep(&c, 1).unwrap();
    assert_eq!(r.policies.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    let written = emit_outputs(&r, dir.path()).unwrap();
    let names: Vec<String> = written
        .iter()
        .map(|p| p.strip_prefix(dir.path()).unwrap().display().to_string())
        .collect();
    assert!(names.contains(&"results.csv".to_string()));
    assert!(names.contains(&"fig_power_sweep.svg".to_string()));
    let ckpt = dir.path().join("checkpoints/diffusion_T3_B800_seed0.json");
    let policy = load_policy(&ckpt).unwrap();
    assert_eq!(policy, r.policies[0].policy);

    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(RESULTS_HEADER));
    assert_eq!(csv.lines().count(), 1 + r.rows.len());
}

#[test]
fn corpus_file_source_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    synth_corpus(5, 3, 9).unwrap().save(dir.path().join("c.json")).unwrap();
    let cfg_path = dir.path().join("exp.toml");
    std::fs::write(
        &cfg_path,
        "experiment = \"power_sweep\"\nusers = 5\nschemes = [\"importance\"]\nbudgets_w = [100, 200]\n\n[corpus]\npath = \"c.json\"\n",
    )
    .unwrap();
    let c = ExperimentConfig::load(&cfg_path).unwrap();
    assert_eq!(c.corpus.load().unwrap().records.len(), 5);
    assert_eq!(run_power_sweep(&c, 1).unwrap().rows.len(), 2);
}

#[test]
fn shipped_configs_and_corpus_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let bundled = load_corpus(root.join("data/synthetic_corpus.json")).unwrap();
    assert_eq!(bundled, synth_corpus(32, 8, 123).unwrap());
    for name in [
        "fig4_convergence.toml",
        "fig5_power_sweep.toml",
        "fig6_budget_convergence.toml",
        "smoke.toml",
    ] {
        let c = ExperimentConfig::load(&root.join("configs").join(name)).unwrap();
        c.corpus.load().unwrap();
    }
}

#[test]
fn too_few_records_for_users_is_reported() {
    let c = config(
        r#"
experiment = "power_sweep"
users = 7
schemes = ["equal"]
budgets_w = [800, 1600]
"#,
    );
    let err = run_power_sweep(&c, 1).unwrap_err().to_string();
    assert!(err.contains("7 users"), "{err}");
}
