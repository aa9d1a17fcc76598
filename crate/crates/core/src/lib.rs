//! Event-driven retrieval control for collision avoidance.
//!
//! A kinematic world with adversarial intruders produces event lists; a
//! permutation-invariant encoder maps them to latent codes; a knowledge bank
//! retrieves stored maneuvers, which are filtered by a contractive latent
//! energy test, clustered by direction and fused into one action.

pub mod audit;
pub mod bank;
pub mod controller;
pub mod dynamics;
pub mod encoder;
pub mod error;
pub mod event;
pub mod harness;
pub mod kv;
pub mod math;
pub mod seed;
pub mod sim;

pub use error::{EraError, Result};
pub use math::Vec3;
