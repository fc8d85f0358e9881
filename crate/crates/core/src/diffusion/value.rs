//! Critic `Q_nu(e, x^0)` and its regression loss.
//!
//! Rounds are one-step episodes (an image is sent once and scored), so the
//! Bellman target is the observed reward itself and the critic is fitted by
//! mean squared error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::EnvironmentVector;
use super::nn::{Mlp, MlpCache};
use crate::allocator::softmax;
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-6;
const LOG_SCALE: f64 = 8.0;

/// Anything that scores an action (padded logits) in an environment and
/// can differentiate that score w.r.t. the action.
pub trait ActionCritic {
    fn value(&self, env: &EnvironmentVector, logits: &[f64]) -> f64;

    /// Value and `dQ/d logits`.
    fn value_and_action_gradient(&self, env: &EnvironmentVector, logits: &[f64]) -> (f64, Vec<f64>);
}

/// MLP over `[e, w, ln(w + 1e-6) / 8]` where `w` is the masked softmax of
/// the logits, i.e. the fraction of the user's budget given to each triplet.
/// Both action blocks are zero on padding. The log block is linear in each
/// triplet's log-SNR, where the drop probability has its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    n_max: usize,
    mlp: Mlp,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(n_max: usize, hidden: &[usize], rng: &mut R) -> Self {
        Self {
            n_max,
            mlp: Mlp::new(&Self::layer_sizes(n_max, hidden), rng),
        }
    }

    pub fn from_mlp(n_max: usize, mlp: Mlp) -> Result<Self> {
        let expected = EnvironmentVector::dim(n_max) + 2 * n_max;
        if mlp.input_dim() != expected || mlp.output_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected,
                actual: mlp.input_dim(),
            });
        }
        Ok(Self { n_max, mlp })
    }

    fn layer_sizes(n_max: usize, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![EnvironmentVector::dim(n_max) + 2 * n_max];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        sizes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn num_params(&self) -> usize {
        self.mlp.num_params()
    }

    fn fractions(env: &EnvironmentVector, logits: &[f64]) -> Vec<f64> {
        let n = env.n_triplets();
        let mut w = softmax(&logits[..n]).unwrap_or_else(|_| vec![1.0 / n as f64; n]);
        w.resize(env.n_max(), 0.0);
        w
    }

    fn input(env: &EnvironmentVector, fractions: &[f64]) -> Vec<f64> {
        let n = env.n_triplets();
        let mut input = Vec::with_capacity(env.values().len() + 2 * fractions.len());
        input.extend_from_slice(env.values());
        input.extend_from_slice(fractions);
        input.extend(
            fractions
                .iter()
                .enumerate()
                .map(|(j, w)| if j < n { (w + LOG_FLOOR).ln() / LOG_SCALE } else { 0.0 }),
        );
        input
    }

    fn forward_cached(&self, env: &EnvironmentVector, logits: &[f64]) -> (f64, MlpCache, Vec<f64>) {
        let w = Self::fractions(env, logits);
        let (out, cache) = self.mlp.forward_cached(&Self::input(env, &w));
        (out[0], cache, w)
    }

    /// Backpropagates `d_value` to the parameters (accumulated into `grads`)
    /// and returns the gradient w.r.t. the logits.
    fn backward(
        &self,
        env: &EnvironmentVector,
        cache: &MlpCache,
        fractions: &[f64],
        d_value: f64,
        grads: &mut [f64],
    ) -> Vec<f64> {
        let d_input = self.mlp.backward(cache, &[d_value], grads);
        let offset = env.values().len();
        let n = env.n_triplets();
        let d_w: Vec<f64> = (0..self.n_max)
            .map(|j| {
                let direct = d_input[offset + j];
                if j < n {
                    direct + d_input[offset + self.n_max + j] / (LOG_SCALE * (fractions[j] + LOG_FLOOR))
                } else {
                    direct
                }
            })
            .collect();
        // Softmax Jacobian: d z_i = w_i (d w_i - sum_k w_k d w_k).
        let mean: f64 = (0..n).map(|k| fractions[k] * d_w[k]).sum();
        let mut d_logits = vec![0.0; self.n_max];
        for i in 0..n {
            d_logits[i] = fractions[i] * (d_w[i] - mean);
        }
        d_logits
    }
}

impl ActionCritic for ValueNet {
    fn value(&self, env: &EnvironmentVector, logits: &[f64]) -> f64 {
        let w = Self::fractions(env, logits);
        self.mlp.forward(&Self::input(env, &w))[0]
    }

    fn value_and_action_gradient(&self, env: &EnvironmentVector, logits: &[f64]) -> (f64, Vec<f64>) {
        let (q, cache, w) = self.forward_cached(env, logits);
        let mut scratch = vec![0.0; self.mlp.num_params()];
        let d_logits = self.backward(env, &cache, &w, 1.0, &mut scratch);
        (q, d_logits)
    }
}

/// One observed round: environment, the logits actually played, and the
/// quality they achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticSample {
    pub env: EnvironmentVector,
    pub logits: Vec<f64>,
    pub reward: f64,
}

/// Mean squared error of `Q_nu` against observed rewards, with its gradient
/// w.r.t. the critic parameters.
pub fn critic_loss(value_net: &ValueNet, batch: &[CriticSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::invalid("critic_loss needs a non-empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = vec![0.0; value_net.num_params()];
    let mut loss = 0.0;
    for sample in batch {
        if sample.logits.len() != value_net.n_max {
            return Err(Error::DimensionMismatch {
                expected: value_net.n_max,
                actual: sample.logits.len(),
            });
        }
        let (q, cache, w) = value_net.forward_cached(&sample.env, &sample.logits);
        let residual = q - sample.reward;
        loss += residual * residual * scale;
        value_net.backward(&sample.env, &cache, &w, 2.0 * residual * scale, &mut grads);
    }
    Ok((loss, grads))
}
