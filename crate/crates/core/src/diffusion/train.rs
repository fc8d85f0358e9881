//! Actor-critic training of the diffusion policy.
//!
//! Each epoch draws a batch of images, samples allocation logits through the
//! reverse chain, perturbs them with decaying Gaussian exploration noise and
//! scores them with the semantic transmission quality. The critic regresses
//! onto those rewards; the denoiser then ascends `mean Q(e, x^0(theta))`
//! with the gradient taken through every denoising step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::denoiser::{backprop_chain, reverse_sample, reverse_sample_traced, ChainTrace, DenoiserNet};
use super::env::EnvironmentVector;
use super::nn::Adam;
use super::schedule::NoiseSchedule;
use super::value::{critic_loss, ActionCritic, CriticSample, ValueNet};
use crate::error::{Error, Result};
use crate::quality::Allocation;
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Initial std of the exploration noise added to sampled logits;
    /// decays linearly to zero over training.
    pub exploration_std: f64,
    pub seed: u64,
    /// Denoising steps `T`.
    pub steps: usize,
    pub denoiser_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Critic gradient steps per epoch, each over the epoch's batch.
    pub critic_updates: usize,
    /// Chain samples averaged per image when evaluating a trained policy.
    pub eval_samples: usize,
    /// Initial std of the policy-gradient baseline's Gaussian policy.
    pub pg_init_std: f64,
    /// Weight of `mean_j x_j^2` over the valid logits subtracted from the
    /// actor objective. Keeps the softmax out of saturation, where its
    /// Jacobian and hence the actor gradient vanish.
    pub logit_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            exploration_std: 1.0,
            seed: 0,
            steps: 12,
            denoiser_hidden: vec![128, 128, 128],
            critic_hidden: vec![128, 128],
            critic_updates: 5,
            eval_samples: 4,
            pg_init_std: 0.5,
            logit_penalty: 1e-2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("critic_updates", self.critic_updates),
            ("eval_samples", self.eval_samples),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("train.{name} must be >= 1")));
        }
        let rates = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("logit_penalty", self.logit_penalty),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("train.{name} must be >= 0, got {v}")));
        }
        if !(self.exploration_std >= 0.0 && self.pg_init_std > 0.0) {
            return Err(Error::invalid(
                "exploration_std must be >= 0 and pg_init_std > 0",
            ));
        }
        if self.denoiser_hidden.is_empty() || self.critic_hidden.is_empty() {
            return Err(Error::invalid("networks need at least one hidden layer"));
        }
        Ok(())
    }

    pub(crate) fn exploration_at(&self, epoch: usize) -> f64 {
        self.exploration_std * (1.0 - epoch as f64 / self.epochs.max(1) as f64)
    }
}

/// `Q(e, x) - lambda * mean_j x_j^2` over the valid coordinates.
pub struct PenalizedCritic<'a, C: ?Sized> {
    pub critic: &'a C,
    pub lambda: f64,
}

impl<C: ActionCritic + ?Sized> ActionCritic for PenalizedCritic<'_, C> {
    fn value(&self, env: &EnvironmentVector, logits: &[f64]) -> f64 {
        let n = env.n_triplets();
        let sq: f64 = logits[..n].iter().map(|x| x * x).sum();
        self.critic.value(env, logits) - self.lambda * sq / n as f64
    }

    fn value_and_action_gradient(&self, env: &EnvironmentVector, logits: &[f64]) -> (f64, Vec<f64>) {
        let n = env.n_triplets();
        let (q, mut grad) = self.critic.value_and_action_gradient(env, logits);
        let mut sq = 0.0;
        for (g, x) in grad.iter_mut().zip(logits).take(n) {
            sq += x * x;
            *g -= 2.0 * self.lambda * x / n as f64;
        }
        (q - self.lambda * sq / n as f64, grad)
    }
}

/// Outcome of one actor update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActorStep {
    Applied { objective: f64 },
    /// The gradient had a non-finite entry; parameters were left untouched.
    Skipped { objective: f64 },
}

/// `mean_i Q(e_i, x^0_i)` over recorded chains and its gradient w.r.t. the
/// denoiser parameters.
pub fn actor_gradient<C: ActionCritic + ?Sized>(
    denoiser: &DenoiserNet,
    critic: &C,
    envs: &[&EnvironmentVector],
    traces: &[ChainTrace],
) -> Result<(f64, Vec<f64>)> {
    if envs.is_empty() || envs.len() != traces.len() {
        return Err(Error::invalid(
            "actor update needs matching, non-empty env and chain batches",
        ));
    }
    let scale = 1.0 / envs.len() as f64;
    let mut grads = vec![0.0; denoiser.num_params()];
    let mut objective = 0.0;
    for (env, trace) in envs.iter().zip(traces) {
        let (q, d_x0) = critic.value_and_action_gradient(env, trace.x0());
        objective += q * scale;
        let d_x0: Vec<f64> = d_x0.iter().map(|g| g * scale).collect();
        backprop_chain(denoiser, trace, &d_x0, &mut grads);
    }
    Ok((objective, grads))
}

fn apply_actor_update(
    denoiser: &mut DenoiserNet,
    adam: &mut Adam,
    objective: f64,
    mut grads: Vec<f64>,
) -> ActorStep {
    if grads.iter().any(|g| !g.is_finite()) {
        log::warn!("non-finite actor gradient; skipping update");
        return ActorStep::Skipped { objective };
    }
    // Adam descends, the actor ascends Q.
    grads.iter_mut().for_each(|g| *g = -*g);
    adam.step(denoiser.mlp_mut().params_mut(), &grads);
    ActorStep::Applied { objective }
}

/// One gradient-ascent step of the denoiser on `mean Q(e, reverse_sample(e))`
/// with chain noise drawn from `seeds`.
pub fn actor_step<C: ActionCritic + ?Sized>(
    denoiser: &mut DenoiserNet,
    adam: &mut Adam,
    schedule: &NoiseSchedule,
    critic: &C,
    envs: &[EnvironmentVector],
    seeds: &[u64],
) -> Result<ActorStep> {
    if envs.len() != seeds.len() {
        return Err(Error::invalid("one chain seed per environment required"));
    }
    let traces = envs
        .iter()
        .zip(seeds)
        .map(|(e, &s)| reverse_sample_traced(e, denoiser, schedule, s))
        .collect::<Result<Vec<_>>>()?;
    let env_refs: Vec<&EnvironmentVector> = envs.iter().collect();
    let (objective, grads) = actor_gradient(denoiser, critic, &env_refs, &traces)?;
    Ok(apply_actor_update(denoiser, adam, objective, grads))
}

/// Deterministic per-call seed derived from a base seed and two indices.
pub(crate) fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over a simple combination
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A trained (or freshly initialised) diffusion allocation policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPolicy {
    pub denoiser: DenoiserNet,
    pub value: ValueNet,
    pub schedule: NoiseSchedule,
    pub config: TrainConfig,
}

impl DiffusionPolicy {
    pub fn init(n_max: usize, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            denoiser: DenoiserNet::new(n_max, &config.denoiser_hidden, &mut rng),
            value: ValueNet::new(n_max, &config.critic_hidden, &mut rng),
            schedule: NoiseSchedule::with_steps(config.steps)?,
            config: config.clone(),
        })
    }

    pub fn logits(&self, env: &EnvironmentVector, seed: u64) -> Result<Vec<f64>> {
        reverse_sample(env, &self.denoiser, &self.schedule, seed)
    }

    pub fn allocate(&self, scenario: &Scenario, idx: usize, seed: u64) -> Result<Allocation> {
        let logits = self.logits(&scenario.env(idx), seed)?;
        scenario.allocation_from_logits(idx, &logits)
    }

    /// Mean multi-user quality over the corpus, averaging `eval_samples`
    /// chain draws per image.
    pub fn evaluate(&self, scenario: &Scenario, seed: u64) -> Result<f64> {
        let samples = self.config.eval_samples;
        let mut sum = 0.0;
        for idx in 0..scenario.num_records() {
            for k in 0..samples {
                let alloc = self.allocate(scenario, idx, mix_seed(seed, idx as u64, k as u64))?;
                sum += scenario.quality(idx, &alloc)?;
            }
        }
        Ok(scenario.users() as f64 * sum / (scenario.num_records() * samples) as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: DiffusionPolicy,
    /// Per epoch: `U` times the batch's mean reward (the behaviour policy's
    /// mean multi-user quality).
    pub curve: Vec<f64>,
    pub critic_loss: Vec<f64>,
    pub skipped_steps: usize,
}

/// Trains a diffusion policy on `scenario`. Fully deterministic in
/// `config.seed`.
pub fn train(scenario: &Scenario, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut policy = DiffusionPolicy::init(scenario.n_max(), config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 1, 0));
    let mut actor_opt = Adam::new(policy.denoiser.num_params(), config.actor_lr);
    let mut critic_opt = Adam::new(policy.value.num_params(), config.critic_lr);
    let envs: Vec<EnvironmentVector> = (0..scenario.num_records()).map(|i| scenario.env(i)).collect();
    let users = scenario.users() as f64;

    let mut curve = Vec::with_capacity(config.epochs);
    let mut losses = Vec::with_capacity(config.epochs);
    let mut skipped = 0;
    for epoch in 0..config.epochs {
        let std = config.exploration_at(epoch);
        let picks: Vec<usize> = (0..config.batch_size)
            .map(|_| rng.gen_range(0..scenario.num_records()))
            .collect();
        let mut traces = Vec::with_capacity(picks.len());
        let mut samples = Vec::with_capacity(picks.len());
        let mut reward_sum = 0.0;
        for &idx in &picks {
            let env = &envs[idx];
            let trace = reverse_sample_traced(env, &policy.denoiser, &policy.schedule, rng.gen())?;
            let mut action = trace.x0().to_vec();
            for a in action.iter_mut().take(env.n_triplets()) {
                let z: f64 = rng.sample(StandardNormal);
                *a += std * z;
            }
            let reward = scenario.quality(idx, &scenario.allocation_from_logits(idx, &action)?)?;
            reward_sum += reward;
            samples.push(CriticSample {
                env: env.clone(),
                logits: action,
                reward,
            });
            traces.push(trace);
        }
        curve.push(users * reward_sum / picks.len() as f64);

        let mut last_loss = 0.0;
        for _ in 0..config.critic_updates {
            let (loss, grads) = critic_loss(&policy.value, &samples)?;
            last_loss = loss;
            if grads.iter().all(|g| g.is_finite()) {
                critic_opt.step(policy.value.mlp_mut().params_mut(), &grads);
            } else {
                log::warn!("non-finite critic gradient at epoch {epoch}; skipping update");
            }
        }
        losses.push(last_loss);

        let env_refs: Vec<&EnvironmentVector> = picks.iter().map(|&i| &envs[i]).collect();
        let critic = PenalizedCritic {
            critic: &policy.value,
            lambda: config.logit_penalty,
        };
        let (objective, grads) = actor_gradient(&policy.denoiser, &critic, &env_refs, &traces)?;
        if let ActorStep::Skipped { .. } =
            apply_actor_update(&mut policy.denoiser, &mut actor_opt, objective, grads)
        {
            skipped += 1;
        }
    }
    Ok(TrainOutcome {
        policy,
        curve,
        critic_loss: losses,
        skipped_steps: skipped,
    })
}
