//! Link model: SNR from transmit power, BPSK bit-error probability and the
//! binomial-tail probability that a coded triplet is lost.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    /// Coherent BPSK over additive white Gaussian noise.
    Awgn,
    /// BPSK averaged over Rayleigh block fading.
    Rayleigh,
}

/// Parameters of one user's downlink. Users are time-division multiplexed,
/// so there is no interference term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Noise floor after bandwidth integration, in W.
    pub noise_power: f64,
    /// Composite path loss and shadowing gain (linear).
    pub pathloss_gain: f64,
    pub fading: Fading,
}

impl ChannelParams {
    pub fn new(noise_power: f64, pathloss_gain: f64, fading: Fading) -> Result<Self> {
        if !(noise_power > 0.0 && noise_power.is_finite()) {
            return Err(Error::invalid(format!(
                "noise_power must be positive, got {noise_power}"
            )));
        }
        if !(pathloss_gain > 0.0 && pathloss_gain.is_finite()) {
            return Err(Error::invalid(format!(
                "pathloss_gain must be positive, got {pathloss_gain}"
            )));
        }
        Ok(Self {
            noise_power,
            pathloss_gain,
            fading,
        })
    }

    /// Drop probability of a triplet sent with `power` watts.
    pub fn drop_prob(&self, power: f64, coding: &CodingParams) -> Result<f64> {
        let snr = snr(power, self)?;
        triplet_drop_prob(bit_error_prob(snr, self.fading), coding)
    }
}

/// Codeword length `L_T` and correction capability `L_E` of one triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodingParams {
    pub bits_per_triplet: u32,
    pub correctable_bits: u32,
}

impl CodingParams {
    pub fn new(bits_per_triplet: u32, correctable_bits: u32) -> Result<Self> {
        let coding = Self {
            bits_per_triplet,
            correctable_bits,
        };
        coding.validate()?;
        Ok(coding)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits_per_triplet == 0 || self.correctable_bits >= self.bits_per_triplet {
            return Err(Error::invalid(format!(
                "coding needs 0 <= L_E < L_T and L_T >= 1, got L_T={} L_E={}",
                self.bits_per_triplet, self.correctable_bits
            )));
        }
        Ok(())
    }
}

impl Default for CodingParams {
    fn default() -> Self {
        Self {
            bits_per_triplet: 512,
            correctable_bits: 26,
        }
    }
}

/// Linear (not dB) signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LinkSnr(f64);

impl LinkSnr {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0) {
            return Err(Error::invalid(format!("snr must be >= 0, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn snr(power: f64, params: &ChannelParams) -> Result<LinkSnr> {
    if !(power >= 0.0) {
        return Err(Error::invalid(format!(
            "transmit power must be >= 0, got {power}"
        )));
    }
    LinkSnr::new(power * params.pathloss_gain / params.noise_power)
}

/// BPSK bit-error probability. Equals 0.5 at zero SNR and decreases
/// strictly towards 0.
pub fn bit_error_prob(snr: LinkSnr, fading: Fading) -> f64 {
    let s = snr.0;
    match fading {
        // Q(sqrt(2 s)) = erfc(sqrt(s)) / 2
        Fading::Awgn => 0.5 * libm::erfc(s.sqrt()),
        Fading::Rayleigh => {
            // 1 - sqrt(s/(1+s)) rewritten to avoid cancellation at high SNR.
            let r = (s / (1.0 + s)).sqrt();
            0.5 / ((1.0 + s) * (1.0 + r))
        }
    }
}

/// Probability that more than `L_E` of the `L_T` bits are in error,
/// `sum_{k > L_E} C(L_T, k) ber^k (1 - ber)^(L_T - k)`.
///
/// Terms are generated in log space by the ratio recurrence starting from
/// whichever end of the distribution is summed, and the side with the
/// smaller mass is summed directly, so the result stays accurate for
/// codewords of many thousand bits.
pub fn triplet_drop_prob(ber: f64, coding: &CodingParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&ber) {
        return Err(Error::invalid(format!("ber must lie in [0, 1], got {ber}")));
    }
    coding.validate()?;
    let n = coding.bits_per_triplet as u64;
    let e = coding.correctable_bits as u64;
    if ber == 0.0 {
        return Ok(0.0);
    }
    if ber == 1.0 {
        return Ok(1.0);
    }
    // The upper tail is the small side when the mean sits at or below L_E.
    let mean = n as f64 * ber;
    if mean <= e as f64 + 0.5 {
        Ok(upper_tail(n, e + 1, ber).min(1.0))
    } else {
        Ok((1.0 - lower_tail(n, e, ber)).clamp(0.0, 1.0))
    }
}

/// `P(X >= k0)` summed downward from `k = n`.
fn upper_tail(n: u64, k0: u64, p: f64) -> f64 {
    let log_odds = p.ln() - (-p).ln_1p();
    let mut log_term = n as f64 * p.ln();
    let mut acc = log_term.exp();
    let mut k = n;
    while k > k0 {
        // pmf(k-1) = pmf(k) * k / (n - k + 1) * (1-p)/p
        log_term += (k as f64 / (n - k + 1) as f64).ln() - log_odds;
        acc += log_term.exp();
        k -= 1;
    }
    acc
}

/// `P(X <= k1)` summed upward from `k = 0`.
fn lower_tail(n: u64, k1: u64, p: f64) -> f64 {
    let log_odds = p.ln() - (-p).ln_1p();
    let mut log_term = n as f64 * (-p).ln_1p();
    let mut acc = log_term.exp();
    for k in 0..k1 {
        // pmf(k+1) = pmf(k) * (n - k) / (k + 1) * p/(1-p)
        log_term += ((n - k) as f64 / (k + 1) as f64).ln() + log_odds;
        acc += log_term.exp();
    }
    acc
}

/// Monte Carlo estimate of [`triplet_drop_prob`]: the fraction of
/// `Binomial(L_T, ber)` draws exceeding `L_E`.
pub fn mc_drop_prob(ber: f64, coding: &CodingParams, trials: u64, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("mc_drop_prob needs at least one trial"));
    }
    if !(0.0..=1.0).contains(&ber) {
        return Err(Error::invalid(format!("ber must lie in [0, 1], got {ber}")));
    }
    coding.validate()?;
    let dist = Binomial::new(coding.bits_per_triplet as u64, ber)
        .map_err(|e| Error::invalid(format!("binomial: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = coding.correctable_bits as u64;
    let dropped = (0..trials)
        .filter(|_| dist.sample(&mut rng) > limit)
        .count();
    Ok(dropped as f64 / trials as f64)
}
