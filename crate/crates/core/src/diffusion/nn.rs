//! Dense multilayer perceptron with hand-written backpropagation and an
//! Adam optimizer, all over a single flat `f64` parameter vector.
//!
//! Hidden layers use SiLU (`x * sigmoid(x)`), which is smooth and keeps
//! finite-difference gradient checks meaningful. The output layer is linear.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Layer widths, input first: `[in, h1, ..., out]`.
    sizes: Vec<usize>,
    /// Per layer: weights `out x in` row-major, then bias `out`.
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_cached`] for one input.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    preacts: Vec<Vec<f64>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Mlp {
    /// He-style normal initialisation scaled by fan-in, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        assert!(sizes.iter().all(|&s| s > 0), "layer widths must be positive");
        let mut params = Vec::with_capacity(Self::count_params(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (1.0 / fan_in as f64).sqrt()).expect("valid std");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(rng)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::count_params(sizes)],
        }
    }

    /// Rebuilds a network from stored widths and flat parameters.
    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> crate::Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(crate::Error::invalid(
                "an MLP needs at least two positive layer widths",
            ));
        }
        let expected = Self::count_params(&sizes);
        if params.len() != expected {
            return Err(crate::Error::DimensionMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self { sizes, params })
    }

    fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Scales the last layer's weights and bias, e.g. to start a network
    /// close to the zero function.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let n = self.sizes.len();
        let (fan_in, fan_out) = (self.sizes[n - 2], self.sizes[n - 1]);
        let len = fan_in * fan_out + fan_out;
        let start = self.params.len() - len;
        self.params[start..].iter_mut().for_each(|p| *p *= factor);
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "MLP input width");
        let last = self.sizes.len() - 2;
        let mut h = x.to_vec();
        for (l, (off, fan_in, fan_out)) in self.layers().enumerate() {
            let (w, b) = self.params[off..off + fan_in * fan_out + fan_out].split_at(fan_in * fan_out);
            let mut z: Vec<f64> = (0..fan_out)
                .map(|o| b[o] + dot(&w[o * fan_in..(o + 1) * fan_in], &h))
                .collect();
            if l != last {
                z.iter_mut().for_each(|v| *v = silu(*v));
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        assert_eq!(x.len(), self.input_dim(), "MLP input width");
        let last = self.sizes.len() - 2;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.sizes.len() - 1),
            preacts: Vec::with_capacity(last),
        };
        let mut h = x.to_vec();
        for (l, (off, fan_in, fan_out)) in self.layers().enumerate() {
            let (w, b) = self.params[off..off + fan_in * fan_out + fan_out].split_at(fan_in * fan_out);
            let z: Vec<f64> = (0..fan_out)
                .map(|o| b[o] + dot(&w[o * fan_in..(o + 1) * fan_in], &h))
                .collect();
            cache.inputs.push(h);
            if l != last {
                h = z.iter().map(|&v| silu(v)).collect();
                cache.preacts.push(z);
            } else {
                h = z;
            }
        }
        (h, cache)
    }

    /// Backpropagates `d_out` (gradient w.r.t. the output) through the pass
    /// recorded in `cache`. Parameter gradients are *added* into `grads`;
    /// the gradient w.r.t. the input is returned.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(d_out.len(), self.output_dim(), "MLP output gradient width");
        assert_eq!(grads.len(), self.params.len(), "gradient buffer length");
        let layers: Vec<_> = self.layers().collect();
        let last = layers.len() - 1;
        let mut delta = d_out.to_vec();
        for (l, &(off, fan_in, fan_out)) in layers.iter().enumerate().rev() {
            if l != last {
                for (d, &z) in delta.iter_mut().zip(&cache.preacts[l]) {
                    *d *= silu_grad(z);
                }
            }
            let input = &cache.inputs[l];
            let w = &self.params[off..off + fan_in * fan_out];
            let (gw, gb) = grads[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
            let mut d_in = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = o * fan_in..(o + 1) * fan_in;
                for (g, x) in gw[row.clone()].iter_mut().zip(input) {
                    *g += d * x;
                }
                for (di, wi) in d_in.iter_mut().zip(&w[row]) {
                    *di += d * wi;
                }
            }
            delta = d_in;
        }
        delta
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps as i32);
        let c2 = 1.0 - self.beta2.powi(self.steps as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::gradcheck::{assert_gradients_match, central_difference};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 5, 2], &mut rng);
        assert_eq!(net.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
        assert_eq!(net.forward(&[0.1, 0.2, 0.3]).len(), 2);
        let zero = Mlp::zeros(&[3, 4, 1]);
        assert_eq!(zero.forward(&[1.0, -2.0, 3.0]), vec![0.0]);
    }

    #[test]
    fn cached_forward_matches_plain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 6, 6, 3], &mut rng);
        let x = [0.3, -1.2, 0.5, 2.0];
        assert_eq!(net.forward(&x), net.forward_cached(&x).0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = Mlp::new(&[3, 4, 2], &mut rng);
            // Non-zero biases exercise every parameter.
            for p in net.params_mut() {
                *p += rng.gen_range(-0.3..0.3);
            }
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let weights = [0.7, -1.3];
            let loss = |n: &Mlp, x: &[f64]| -> f64 {
                n.forward(x).iter().zip(&weights).map(|(o, w)| w * o).sum()
            };

            let (_, cache) = net.forward_cached(&x);
            let mut grads = vec![0.0; net.num_params()];
            let d_in = net.backward(&cache, &weights, &mut grads);

            let numeric = central_difference(net.params().to_vec(), |p| {
                let mut n = net.clone();
                n.params_mut().copy_from_slice(p);
                loss(&n, &x)
            });
            assert_gradients_match(&grads, &numeric, 1e-4);
            let numeric_in = central_difference(x.clone(), |xi| loss(&net, xi));
            assert_gradients_match(&d_in, &numeric_in, 1e-4);
        }
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut params = vec![3.0, -2.0];
        let mut adam = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let grads: Vec<f64> = params.iter().map(|p| 2.0 * (p - 1.0)).collect();
            adam.step(&mut params, &grads);
        }
        assert!(params.iter().all(|p| (p - 1.0).abs() < 1e-3), "{params:?}");
        assert_eq!(adam.steps(), 2000);
    }
}
