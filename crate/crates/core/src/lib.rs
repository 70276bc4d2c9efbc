//! Two-agent cooperative transport: a deterministic kinematic simulator, the
//! 12-map catalog, evaluation metrics, a small dense-network engine, scripted
//! and cloned policies, and the behavior augmentation / latent simulation /
//! action selection pipeline built on top of them.

pub mod bass;
pub mod data_io;
pub mod env;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod maps;
pub mod metrics;
pub mod nav;
pub mod nn;
pub mod physics;
pub mod policies;
pub mod rollout;
pub mod scripted;

pub use error::{Error, Result};
