//! Semantic-aware downlink power allocation.
//!
//! Images are reduced to subject-relation-object triplets, each weighted by
//! an importance score. The base station splits its power across an image's
//! triplets; a triplet is lost when its bit errors exceed the code's
//! correction capability, and the quality of an image is the importance
//! mass that gets through. This crate models that link, evaluates
//! allocations, and learns allocations with a conditional diffusion policy.

pub mod allocator;
pub mod channel;
pub mod corpus;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod quality;
pub mod scenario;

pub use error::{Error, Result};
