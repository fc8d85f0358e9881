//! Noise-prediction network and the ancestral reverse chain it drives.
//!
//! The chain runs over `N_max` logit coordinates. Coordinates past the
//! environment's `N` are held at zero throughout, so padding never leaks
//! into the real triplets' logits or gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::env::EnvironmentVector;
use super::nn::{Mlp, MlpCache};
use super::schedule::{NoiseSchedule, ReverseCoefficients};
use crate::error::{Error, Result};

/// Width of the sinusoidal timestep embedding.
pub const TIME_EMBED_DIM: usize = 16;

/// Sinusoidal embedding `[sin(t w_i), cos(t w_i)]` with geometric
/// frequencies `w_i = 10000^(-i / (dim/2))`.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out.push((t as f64 * freq).sin());
    }
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out.push((t as f64 * freq).cos());
    }
    out
}

/// `eps_theta(x^t, t, e)`: an MLP over `[x^t, embed(t), e]` predicting the
/// noise in `x^t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserNet {
    n_max: usize,
    env_dim: usize,
    mlp: Mlp,
}

impl DenoiserNet {
    pub fn new<R: Rng + ?Sized>(n_max: usize, hidden: &[usize], rng: &mut R) -> Self {
        let env_dim = EnvironmentVector::dim(n_max);
        let mut mlp = Mlp::new(&Self::layer_sizes(n_max, env_dim, hidden), rng);
        // Start near the zero predictor so the untrained chain is close to
        // the analytic linear-Gaussian one.
        mlp.scale_output_layer(0.1);
        Self { n_max, env_dim, mlp }
    }

    /// All-zero parameters: predicts zero noise everywhere.
    pub fn zeroed(n_max: usize, hidden: &[usize]) -> Self {
        let env_dim = EnvironmentVector::dim(n_max);
        Self {
            n_max,
            env_dim,
            mlp: Mlp::zeros(&Self::layer_sizes(n_max, env_dim, hidden)),
        }
    }

    pub fn from_mlp(n_max: usize, mlp: Mlp) -> Result<Self> {
        let env_dim = EnvironmentVector::dim(n_max);
        let expected_in = n_max + TIME_EMBED_DIM + env_dim;
        if mlp.input_dim() != expected_in {
            return Err(Error::DimensionMismatch {
                expected: expected_in,
                actual: mlp.input_dim(),
            });
        }
        if mlp.output_dim() != n_max {
            return Err(Error::DimensionMismatch {
                expected: n_max,
                actual: mlp.output_dim(),
            });
        }
        Ok(Self { n_max, env_dim, mlp })
    }

    fn layer_sizes(n_max: usize, env_dim: usize, hidden: &[usize]) -> Vec<usize> {
        let mut sizes = vec![n_max + TIME_EMBED_DIM + env_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_max);
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

    fn input(&self, x: &[f64], t: usize, env: &EnvironmentVector) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.mlp.input_dim());
        input.extend_from_slice(x);
        input.extend(timestep_embedding(t, TIME_EMBED_DIM));
        input.extend_from_slice(env.values());
        input
    }

    pub fn check_env(&self, env: &EnvironmentVector) -> Result<()> {
        if env.n_max() != self.n_max || env.values().len() != self.env_dim {
            return Err(Error::DimensionMismatch {
                expected: self.env_dim,
                actual: env.values().len(),
            });
        }
        Ok(())
    }

    /// Predicted noise at step `t`.
    pub fn predict(&self, x: &[f64], t: usize, env: &EnvironmentVector) -> Vec<f64> {
        self.mlp.forward(&self.input(x, t, env))
    }
}

/// Everything the backward pass needs from one step of the chain.
#[derive(Debug, Clone)]
struct StepTrace {
    coeffs: ReverseCoefficients,
    cache: MlpCache,
}

/// A recorded reverse chain, from `x^T` down to `x^0`.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    /// Steps in execution order (`t = T` first).
    steps: Vec<StepTrace>,
    n_triplets: usize,
    x0: Vec<f64>,
}

impl ChainTrace {
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// Number of denoising updates applied.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

fn draw_noise(rng: &mut ChaCha8Rng, n: usize, n_triplets: usize) -> Vec<f64> {
    // Draw all N_max coordinates so the stream does not depend on N.
    let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    z[n_triplets..].iter_mut().for_each(|v| *v = 0.0);
    z
}

fn run_chain(
    env: &EnvironmentVector,
    net: &DenoiserNet,
    schedule: &NoiseSchedule,
    seed: u64,
    record: bool,
) -> Result<(Vec<f64>, Vec<StepTrace>)> {
    net.check_env(env)?;
    let n = net.n_max;
    let valid = env.n_triplets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = draw_noise(&mut rng, n, valid);
    let mut steps = Vec::with_capacity(if record { schedule.steps() } else { 0 });
    for t in (1..=schedule.steps()).rev() {
        let coeffs = schedule.reverse_coefficients(t);
        let input = net.input(&x, t, env);
        let eps = if record {
            let (eps, cache) = net.mlp.forward_cached(&input);
            steps.push(StepTrace { coeffs, cache });
            eps
        } else {
            net.mlp.forward(&input)
        };
        let z = draw_noise(&mut rng, n, valid);
        for j in 0..valid {
            x[j] = coeffs.scale * (x[j] - coeffs.eps_coef * eps[j]) + coeffs.sigma * z[j];
        }
    }
    Ok((x, steps))
}

/// Ancestral sampling from `x^T ~ N(0, I)` through `T` denoising updates.
/// Returns padded `x^0` logits; deterministic in `seed`.
pub fn reverse_sample(
    env: &EnvironmentVector,
    net: &DenoiserNet,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(run_chain(env, net, schedule, seed, false)?.0)
}

/// [`reverse_sample`] that also records activations for backpropagation.
pub fn reverse_sample_traced(
    env: &EnvironmentVector,
    net: &DenoiserNet,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<ChainTrace> {
    let (x0, steps) = run_chain(env, net, schedule, seed, true)?;
    Ok(ChainTrace {
        steps,
        n_triplets: env.n_triplets(),
        x0,
    })
}

/// Backpropagates `d_x0` (gradient w.r.t. the sampled `x^0`) through the
/// whole chain with the sampled noise held fixed. Parameter gradients are
/// added into `grads`; the gradient w.r.t. `x^T` is returned.
pub fn backprop_chain(
    net: &DenoiserNet,
    trace: &ChainTrace,
    d_x0: &[f64],
    grads: &mut [f64],
) -> Vec<f64> {
    let n = net.n_max;
    let valid = trace.n_triplets;
    let mut g = d_x0.to_vec();
    g[valid..].iter_mut().for_each(|v| *v = 0.0);
    for step in trace.steps.iter().rev() {
        let c = step.coeffs;
        let d_eps: Vec<f64> = g.iter().map(|gi| -c.scale * c.eps_coef * gi).collect();
        let d_input = net.mlp.backward(&step.cache, &d_eps, grads);
        let mut next = vec![0.0; n];
        for j in 0..valid {
            next[j] = c.scale * g[j] + d_input[j];
        }
        g = next;
    }
    g
}
