//! Reinforcement learning with rewards shaped by an internal model trained on
//! state-only expert demonstrations.
//!
//! The pipeline: record demonstrations ([`trajectories`]), fit a next-state
//! predictor on them ([`internal_model`]), turn its prediction error into a
//! dense reward ([`shaping`]), and train an off-policy agent on that reward
//! ([`rl`]) inside the experiment driver ([`harness`]).

pub mod envs;
pub mod error;
pub mod harness;
pub mod internal_model;
pub mod io;
pub mod numerics;
pub mod rl;
pub mod shaping;
pub mod trajectories;

pub use error::{Error, Result};
