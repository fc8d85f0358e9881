//! Conditional diffusion allocation policy: noise schedule, denoiser and
//! reverse chain, critic, actor-critic training, and the Gaussian
//! policy-gradient baseline it is compared against.

pub mod checkpoint;
pub mod denoiser;
pub mod env;
pub mod gradcheck;
pub mod nn;
pub mod pg;
pub mod schedule;
pub mod train;
pub mod value;

pub use checkpoint::{load_policy, policy_from_json, policy_to_json, save_policy};
pub use denoiser::{reverse_sample, reverse_sample_traced, DenoiserNet};
pub use env::EnvironmentVector;
pub use schedule::{forward_noising, NoiseSchedule};
pub use train::{actor_step, train, ActorStep, DiffusionPolicy, PenalizedCritic, TrainConfig, TrainOutcome};
pub use pg::{pg_baseline_train, GaussianPolicy, PgOutcome};
pub use value::{critic_loss, ActionCritic, CriticSample, ValueNet};
