//! Versioned JSON checkpoints of a trained diffusion policy.
//!
//! ```json
//! {
//!   "format": "semra-diffusion-policy",
//!   "version": 1,
//!   "n_max": 8,
//!   "betas": [0.0001, ...],
//!   "denoiser": { "sizes": [...], "params": [...] },
//!   "value": { "sizes": [...], "params": [...] },
//!   "train": { ...TrainConfig... }
//! }
//! ```
//!
//! Floats are written with round-trip precision, so a loaded policy samples
//! bit-identical allocations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::denoiser::DenoiserNet;
use super::nn::Mlp;
use super::schedule::NoiseSchedule;
use super::train::{DiffusionPolicy, TrainConfig};
use super::value::ValueNet;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "semra-diffusion-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct StoredMlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl From<&Mlp> for StoredMlp {
    fn from(mlp: &Mlp) -> Self {
        Self {
            sizes: mlp.sizes().to_vec(),
            params: mlp.params().to_vec(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    n_max: usize,
    betas: Vec<f64>,
    denoiser: StoredMlp,
    value: StoredMlp,
    train: TrainConfig,
}

pub fn policy_to_json(policy: &DiffusionPolicy) -> Result<String> {
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        n_max: policy.denoiser.n_max(),
        betas: policy.schedule.betas().to_vec(),
        denoiser: policy.denoiser.mlp().into(),
        value: policy.value.mlp().into(),
        train: policy.config.clone(),
    };
    Ok(serde_json::to_string(&ckpt)?)
}

pub fn policy_from_json(text: &str) -> Result<DiffusionPolicy> {
    let ckpt: Checkpoint = serde_json::from_str(text)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::validation(format!(
            "format: expected {CHECKPOINT_FORMAT:?}, got {:?}",
            ckpt.format
        )));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::validation(format!(
            "version: unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    let denoiser = DenoiserNet::from_mlp(
        ckpt.n_max,
        Mlp::from_parts(ckpt.denoiser.sizes, ckpt.denoiser.params)?,
    )?;
    let value = ValueNet::from_mlp(ckpt.n_max, Mlp::from_parts(ckpt.value.sizes, ckpt.value.params)?)?;
    if !(denoiser.mlp().is_finite() && value.mlp().is_finite()) {
        return Err(Error::validation("params: non-finite network weight"));
    }
    ckpt.train.validate()?;
    Ok(DiffusionPolicy {
        denoiser,
        value,
        schedule: NoiseSchedule::from_betas(ckpt.betas)?,
        config: ckpt.train,
    })
}

pub fn save_policy(policy: &DiffusionPolicy, path: &Path) -> Result<()> {
    let mut text = policy_to_json(policy)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_policy(path: &Path) -> Result<DiffusionPolicy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    policy_from_json(&text)
}
