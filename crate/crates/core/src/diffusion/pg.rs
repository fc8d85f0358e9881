//! Gaussian policy-gradient baseline (REINFORCE with a moving-average
//! baseline) over the same logits action space, reward and curve contract as
//! the diffusion trainer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::env::EnvironmentVector;
use super::nn::{Adam, Mlp};
use super::train::{mix_seed, TrainConfig};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Weight of the newest batch in the moving-average reward baseline.
const BASELINE_RATE: f64 = 0.1;

/// `a ~ N(mu(e), diag(exp(log_std))^2)` on the first `N` logits; padding
/// coordinates are fixed at zero and carry no probability mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    n_max: usize,
    mean_net: Mlp,
    log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(n_max: usize, hidden: &[usize], init_std: f64, rng: &mut R) -> Self {
        let mut sizes = vec![EnvironmentVector::dim(n_max)];
        sizes.extend_from_slice(hidden);
        sizes.push(n_max);
        let mut mean_net = Mlp::new(&sizes, rng);
        mean_net.scale_output_layer(0.1);
        Self {
            n_max,
            mean_net,
            log_std: vec![init_std.ln(); n_max],
        }
    }

    pub fn num_params(&self) -> usize {
        self.mean_net.num_params() + self.n_max
    }

    /// Mean-net parameters followed by the per-coordinate log std.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mean_net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        let (net, std) = params.split_at(self.mean_net.num_params());
        self.mean_net.params_mut().copy_from_slice(net);
        self.log_std.copy_from_slice(std);
        Ok(())
    }

    pub fn mean(&self, env: &EnvironmentVector) -> Vec<f64> {
        let mut mu = self.mean_net.forward(env.values());
        mu[env.n_triplets()..].iter_mut().for_each(|v| *v = 0.0);
        mu
    }

    pub fn sample<R: Rng + ?Sized>(&self, env: &EnvironmentVector, rng: &mut R) -> Vec<f64> {
        let mut a = self.mean(env);
        for (j, v) in a.iter_mut().enumerate().take(env.n_triplets()) {
            let z: f64 = rng.sample(StandardNormal);
            *v += self.log_std[j].exp() * z;
        }
        a
    }

    pub fn log_prob(&self, env: &EnvironmentVector, action: &[f64]) -> f64 {
        let mu = self.mean(env);
        (0..env.n_triplets())
            .map(|j| {
                let s = self.log_std[j];
                let u = (action[j] - mu[j]) / s.exp();
                -0.5 * u * u - s - 0.5 * LN_2PI
            })
            .sum()
    }

    /// `log pi(a | e)` and its gradient in the layout of [`Self::params`].
    pub fn log_prob_gradient(&self, env: &EnvironmentVector, action: &[f64]) -> (f64, Vec<f64>) {
        let n = env.n_triplets();
        let (mu, cache) = self.mean_net.forward_cached(env.values());
        let mut grads = vec![0.0; self.num_params()];
        let mut d_mu = vec![0.0; self.n_max];
        let mut logp = 0.0;
        let offset = self.mean_net.num_params();
        for j in 0..n {
            let s = self.log_std[j];
            let var = (2.0 * s).exp();
            let diff = action[j] - mu[j];
            logp += -0.5 * diff * diff / var - s - 0.5 * LN_2PI;
            d_mu[j] = diff / var;
            grads[offset + j] = diff * diff / var - 1.0;
        }
        self.mean_net
            .backward(&cache, &d_mu, &mut grads[..offset]);
        (logp, grads)
    }
}

#[derive(Debug, Clone)]
pub struct PgOutcome {
    pub policy: GaussianPolicy,
    /// Same contract as the diffusion curve: `U` times the batch mean reward.
    pub curve: Vec<f64>,
}

impl PgOutcome {
    /// Mean multi-user quality when acting with the policy mean.
    pub fn evaluate(&self, scenario: &Scenario) -> Result<f64> {
        scenario.evaluate(|idx| {
            scenario.allocation_from_logits(idx, &self.policy.mean(&scenario.env(idx)))
        })
    }
}

/// REINFORCE on `scenario` with the diffusion trainer's batch size, epoch
/// count, seed and actor learning rate.
pub fn pg_baseline_train(scenario: &Scenario, config: &TrainConfig) -> Result<PgOutcome> {
    config.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 2, 0));
    let mut policy = GaussianPolicy::new(
        scenario.n_max(),
        &config.critic_hidden,
        config.pg_init_std,
        &mut init_rng,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 3, 0));
    let mut opt = Adam::new(policy.num_params(), config.actor_lr);
    let envs: Vec<EnvironmentVector> = (0..scenario.num_records()).map(|i| scenario.env(i)).collect();
    let mut baseline: Option<f64> = None;
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let idx = rng.gen_range(0..scenario.num_records());
            let action = policy.sample(&envs[idx], &mut rng);
            let reward = scenario.quality(idx, &scenario.allocation_from_logits(idx, &action)?)?;
            batch.push((idx, action, reward));
        }
        let mean_reward = batch.iter().map(|b| b.2).sum::<f64>() / batch.len() as f64;
        curve.push(scenario.users() as f64 * mean_reward);
        let b = *baseline.get_or_insert(mean_reward);

        // Descend the negated surrogate -mean((r - b) log pi).
        let mut grads = vec![0.0; policy.num_params()];
        let scale = 1.0 / batch.len() as f64;
        for (idx, action, reward) in &batch {
            let (_, g) = policy.log_prob_gradient(&envs[*idx], action);
            let weight = -(reward - b) * scale;
            grads.iter_mut().zip(&g).for_each(|(acc, gi)| *acc += weight * gi);
        }
        if grads.iter().all(|g| g.is_finite()) {
            let mut params = policy.params();
            opt.step(&mut params, &grads);
            policy.set_params(&params)?;
        } else {
            log::warn!("non-finite policy gradient at epoch {epoch}; skipping update");
        }
        baseline = Some((1.0 - BASELINE_RATE) * b + BASELINE_RATE * mean_reward);
    }
    Ok(PgOutcome { policy, curve })
}
