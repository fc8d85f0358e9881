use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.2;

/// Variance schedule of a `T`-step diffusion chain.
///
/// Steps are indexed `1..=T`; `alpha_bar(t)` is the cumulative product
/// `prod_{s <= t} (1 - beta_s)` and `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linearly spaced betas from `beta_start` to `beta_end`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("noise schedule needs T >= 1"));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn with_steps(steps: usize) -> Result<Self> {
        Self::linear(steps, DEFAULT_BETA_START, DEFAULT_BETA_END)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("noise schedule needs T >= 1"));
        }
        if betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) || betas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(
                "betas must lie in (0, 1) and be non-decreasing",
            ));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Number of denoising steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Variance of the reverse-step posterior `q(x^{t-1} | x^t, x^0)`; zero
    /// at `t = 1`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))
    }

    /// Coefficients of one ancestral update
    /// `x^{t-1} = scale * (x^t - eps_coef * eps_hat) + sigma * z`.
    pub fn reverse_coefficients(&self, t: usize) -> ReverseCoefficients {
        ReverseCoefficients {
            scale: 1.0 / self.alpha(t).sqrt(),
            eps_coef: self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt(),
            sigma: self.posterior_variance(t).sqrt(),
        }
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!(
                "diffusion step {t} outside 1..={}",
                self.steps()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseCoefficients {
    pub scale: f64,
    pub eps_coef: f64,
    pub sigma: f64,
}

/// Closed-form forward marginal
/// `x^t = sqrt(alpha_bar_t) x^0 + sqrt(1 - alpha_bar_t) noise`.
pub fn forward_noising(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    noise: &[f64],
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if noise.len() != x0.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            actual: noise.len(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let (keep, mix) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(noise).map(|(x, n)| keep * x + mix * n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn linear_schedule_invariants() {
        for t in [1, 6, 12, 20] {
            let s = NoiseSchedule::with_steps(t).unwrap();
            assert_eq!(s.steps(), t);
            assert!(s.betas().windows(2).all(|w| w[0] <= w[1]));
            assert!((1..t).all(|i| s.alpha_bar(i + 1) < s.alpha_bar(i)));
            assert_eq!(s.posterior_variance(1), 0.0);
            assert_eq!(s.beta(1), DEFAULT_BETA_START);
        }
        let s = NoiseSchedule::with_steps(12).unwrap();
        assert!((s.beta(12) - DEFAULT_BETA_END).abs() < 1e-15);
        assert!(NoiseSchedule::with_steps(0).is_err());
        assert!(NoiseSchedule::linear(3, 0.5, 0.1).is_err());
        assert!(NoiseSchedule::from_betas(vec![0.1, 1.0]).is_err());
    }

    #[test]
    fn forward_noising_limits() {
        let x0 = [1.5, -0.5, 2.0];
        let noise = [0.3, 0.1, -0.7];
        // Nearly no noise at t = 1 of a tiny-beta schedule.
        let s = NoiseSchedule::from_betas(vec![1e-12]).unwrap();
        let xt = forward_noising(&x0, 1, &s, &noise).unwrap();
        for (a, b) in xt.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-5);
        }
        // alpha_bar close to zero leaves pure noise.
        let s = NoiseSchedule::from_betas(vec![0.999_999_9; 3]).unwrap();
        let xt = forward_noising(&x0, 3, &s, &noise).unwrap();
        for (a, b) in xt.iter().zip(&noise) {
            assert!((a - b).abs() < 1e-9);
        }
        let s = NoiseSchedule::with_steps(6).unwrap();
        assert!(forward_noising(&x0, 0, &s, &noise).is_err());
        assert!(forward_noising(&x0, 7, &s, &noise).is_err());
        assert!(forward_noising(&x0, 2, &s, &noise[..2]).is_err());
    }

    #[test]
    fn forward_noising_is_reproducible() {
        let s = NoiseSchedule::with_steps(12).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
            forward_noising(&[0.1, 0.2, 0.3, 0.4], 5, &s, &noise).unwrap()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }
}
