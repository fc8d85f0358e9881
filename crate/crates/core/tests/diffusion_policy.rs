use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use semra_core::allocator::{grid_oracle, importance_allocation, Budget};
use semra_core::channel::{ChannelParams, CodingParams, Fading};
use semra_core::corpus::{synth_corpus, Corpus, ImageRecord, Provenance, ProvenanceKind, SemanticTriplet};
use semra_core::diffusion::nn::Adam;
use semra_core::diffusion::{
    actor_step, pg_baseline_train, reverse_sample, train, ActionCritic, ActorStep, DenoiserNet,
    EnvironmentVector, NoiseSchedule, TrainConfig,
};
use semra_core::scenario::{ChannelModel, Scenario};

fn corpus(importances: &[&[f64]]) -> Corpus {
    Corpus {
        provenance: Provenance {
            kind: ProvenanceKind::Synthetic,
            note: "test fixture".into(),
        },
        records: importances
            .iter()
            .enumerate()
            .map(|(i, imps)| ImageRecord {
                image_id: format!("img-{i}"),
                triplets: imps
                    .iter()
                    .enumerate()
                    .map(|(j, &importance)| SemanticTriplet {
                        subject: format!("s{j}"),
                        relation: "near".into(),
                        object: format!("o{j}"),
                        importance,
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        steps: 4,
        denoiser_hidden: vec![16, 16],
        critic_hidden: vec![16],
        ..TrainConfig::default()
    }
}

fn scenario(corpus: Corpus, budget: f64) -> Scenario {
    let n_max = corpus.max_triplets();
    let links = ChannelModel::default().draw_links(2, 5).unwrap();
    Scenario::new(corpus, links, CodingParams::default(), Budget::new(budget).unwrap(), n_max).unwrap()
}

#[test]
fn zero_denoiser_chain_matches_closed_form_statistics() {
    let steps = 12;
    let schedule = NoiseSchedule::with_steps(steps).unwrap();
    let net = DenoiserNet::zeroed(3, &[8]);
    let env = EnvironmentVector::from_raw(vec![0.5; EnvironmentVector::dim(3)], 3, 3).unwrap();

    // With eps = 0 each step is x <- x / sqrt(alpha_t) + sigma_t z.
    let mut var = 1.0;
    for t in (1..=steps).rev() {
        var = var / schedule.alpha(t) + schedule.posterior_variance(t);
    }

    let n = 10_000;
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    for seed in 0..n {
        let x = reverse_sample(&env, &net, &schedule, seed).unwrap();
        for j in 0..3 {
            sum[j] += x[j];
            sum_sq[j] += x[j] * x[j];
        }
    }
    let n = n as f64;
    for j in 0..3 {
        let mean = sum[j] / n;
        let sample_var = sum_sq[j] / n - mean * mean;
        assert!(mean.abs() <= 3.0 * (var / n).sqrt(), "coord {j}: mean {mean}");
        // sd of a Gaussian sample variance is var * sqrt(2 / n)
        assert!(
            (sample_var - var).abs() <= 4.0 * var * (2.0 / n).sqrt(),
            "coord {j}: var {sample_var} vs {var}"
        );
    }
}

struct ConstantCritic;

impl ActionCritic for ConstantCritic {
    fn value(&self, _: &EnvironmentVector, _: &[f64]) -> f64 {
        3.0
    }
    fn value_and_action_gradient(&self, _: &EnvironmentVector, logits: &[f64]) -> (f64, Vec<f64>) {
        (3.0, vec![0.0; logits.len()])
    }
}

/// `Q = -|x - target|^2` on the valid coordinates.
struct QuadraticCritic {
    target: Vec<f64>,
}

impl ActionCritic for QuadraticCritic {
    fn value(&self, env: &EnvironmentVector, logits: &[f64]) -> f64 {
        self.value_and_action_gradient(env, logits).0
    }
    fn value_and_action_gradient(&self, env: &EnvironmentVector, logits: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; logits.len()];
        let mut q = 0.0;
        for j in 0..env.n_triplets() {
            let d = logits[j] - self.target[j];
            q -= d * d;
            grad[j] = -2.0 * d;
        }
        (q, grad)
    }
}

#[test]
fn constant_critic_leaves_denoiser_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = DenoiserNet::new(3, &[8, 8], &mut rng);
    let before = net.clone();
    let schedule = NoiseSchedule::with_steps(6).unwrap();
    let mut adam = Adam::new(net.num_params(), 1e-2);
    let envs = vec![EnvironmentVector::from_raw(vec![0.1; EnvironmentVector::dim(3)], 2, 3).unwrap(); 4];
    let step = actor_step(&mut net, &mut adam, &schedule, &ConstantCritic, &envs, &[1, 2, 3, 4]).unwrap();
    assert_eq!(step, ActorStep::Applied { objective: 3.0 });
    assert_eq!(net, before);
}

#[test]
fn quadratic_critic_pulls_samples_to_its_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut net = DenoiserNet::new(3, &[32, 32], &mut rng);
    let schedule = NoiseSchedule::with_steps(6).unwrap();
    let mut adam = Adam::new(net.num_params(), 3e-3);
    let critic = QuadraticCritic {
        target: vec![1.5, -1.0, 0.5],
    };
    let env = EnvironmentVector::from_raw(vec![0.2; EnvironmentVector::dim(3)], 3, 3).unwrap();
    let distance = |net: &DenoiserNet| {
        (1000..1064)
            .map(|s| -critic.value(&env, &reverse_sample(&env, net, &schedule, s).unwrap()))
            .sum::<f64>()
            / 64.0
    };

    let start = distance(&net);
    let mut checkpoints = vec![start];
    for round in 0..4 {
        for k in 0..100u64 {
            let seeds: Vec<u64> = (0..8).map(|i| round * 10_000 + k * 8 + i).collect();
            actor_step(&mut net, &mut adam, &schedule, &critic, &vec![env.clone(); 8], &seeds).unwrap();
        }
        checkpoints.push(distance(&net));
    }
    assert!(
        checkpoints.windows(2).all(|w| w[1] < w[0]),
        "squared distance should keep shrinking: {checkpoints:?}"
    );
    assert!(*checkpoints.last().unwrap() < 0.1 * start, "{checkpoints:?}");
}

#[test]
fn policy_concentrates_on_the_only_important_triplet() {
    // Low power so that every watt moved to the important triplet still
    // lowers its drop probability.
    let c = corpus(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
    let link = ChannelParams::new(1e-7, 1e-8, Fading::Rayleigh).unwrap();
    let s = Scenario::new(
        c,
        vec![link; 2],
        CodingParams::default(),
        Budget::new(100.0).unwrap(),
        3,
    )
    .unwrap();

    // The exhaustive optimum puts everything on the important triplet.
    let (oracle, _) = grid_oracle(s.record(1), s.user_budget(), s.link_of(1), s.coding(), 20).unwrap();
    assert_eq!(oracle.powers()[1], s.user_budget().total_power());

    let config = TrainConfig {
        epochs: 600,
        ..TrainConfig::default()
    };
    let policy = train(&s, &config).unwrap().policy;
    for idx in 0..s.num_records() {
        let target = s.record(idx).importances().iter().position(|&i| i == 1.0).unwrap();
        for seed in 0..5 {
            let alloc = policy.allocate(&s, idx, seed).unwrap();
            let share = alloc.powers()[target] / alloc.total();
            assert!(share >= 0.9, "record {idx} seed {seed}: share {share}");
        }
    }
}

#[test]
fn zero_epochs_returns_untrained_policy() {
    let s = scenario(synth_corpus(4, 3, 0).unwrap(), 400.0);
    let config = small_config(0);
    let out = train(&s, &config).unwrap();
    assert!(out.curve.is_empty());
    assert_eq!(out.policy, semra_core::diffusion::DiffusionPolicy::init(3, &config).unwrap());
}

#[test]
fn curve_length_and_reproducibility() {
    let s = scenario(synth_corpus(6, 4, 1).unwrap(), 600.0);
    let config = small_config(7);
    let a = train(&s, &config).unwrap();
    let b = train(&s, &config).unwrap();
    assert_eq!(a.curve.len(), 7);
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.policy, b.policy);
    let c = train(&s, &TrainConfig { seed: 1, ..config }).unwrap();
    assert_ne!(a.curve, c.curve);
}

#[test]
fn trained_allocations_stay_on_the_budget_simplex() {
    let s = scenario(synth_corpus(6, 4, 2).unwrap(), 1000.0);
    let policy = train(&s, &small_config(5)).unwrap().policy;
    let per_user = s.user_budget().total_power();
    for idx in 0..s.num_records() {
        let alloc = policy.allocate(&s, idx, 9).unwrap();
        assert_eq!(alloc.len(), s.record(idx).len());
        assert!(alloc.powers().iter().all(|&p| p >= 0.0));
        assert!((alloc.total() - per_user).abs() <= 1e-9 * per_user);
    }
}

#[test]
fn pg_with_zero_learning_rate_has_a_flat_curve() {
    let s = scenario(synth_corpus(8, 4, 3).unwrap(), 800.0);
    let config = TrainConfig {
        actor_lr: 0.0,
        batch_size: 256,
        ..small_config(40)
    };
    let out = pg_baseline_train(&s, &config).unwrap();
    assert_eq!(out.curve.len(), 40);
    let first: f64 = out.curve[..20].iter().sum::<f64>() / 20.0;
    let last: f64 = out.curve[20..].iter().sum::<f64>() / 20.0;
    // only sampling noise separates the halves
    assert!((first - last).abs() < 0.05 * first, "{first} vs {last}");
    let again = pg_baseline_train(&s, &config).unwrap();
    assert_eq!(out.policy, again.policy);
}

#[test]
fn pg_on_single_triplet_images_gets_the_full_budget() {
    let c = corpus(&[&[0.7], &[0.4], &[0.9]]);
    let s = scenario(c, 500.0);
    let out = pg_baseline_train(&s, &small_config(20)).unwrap();
    for idx in 0..s.num_records() {
        let alloc = s
            .allocation_from_logits(idx, &out.policy.mean(&s.env(idx)))
            .unwrap();
        assert_eq!(alloc.powers(), &[s.user_budget().total_power()]);
    }
}

#[test]
fn diffusion_beats_importance_at_two_kilowatts() {
    let corpus = synth_corpus(32, 8, 123).unwrap();
    let links = ChannelModel::default().draw_links(4, 0).unwrap();
    let s = Scenario::new(corpus, links, CodingParams::default(), Budget::new(2000.0).unwrap(), 8).unwrap();
    let importance = s
        .evaluate(|i| importance_allocation(&s.record(i).importances(), s.user_budget()))
        .unwrap();
    let out = train(&s, &TrainConfig::default()).unwrap();
    let diffusion = out.policy.evaluate(&s, 0).unwrap();
    assert!(diffusion >= importance, "diffusion {diffusion} < importance {importance}");
}

#[test]
fn awgn_links_train_too() {
    let link = ChannelParams::new(1e-7, 1e-8, Fading::Awgn).unwrap();
    let s = Scenario::new(
        synth_corpus(4, 3, 4).unwrap(),
        vec![link],
        CodingParams::new(64, 3).unwrap(),
        Budget::new(100.0).unwrap(),
        3,
    )
    .unwrap();
    let out = train(&s, &small_config(3)).unwrap();
    assert!(out.curve.iter().all(|q| q.is_finite() && *q >= 0.0));
}
