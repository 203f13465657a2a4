//! Learning effective one-step models for the slow variables of multiscale
//! stochastic systems.
//!
//! The crate covers the full numerical pipeline:
//!
//! - [`system`]: benchmark slow-fast SDE systems and their conditioned
//!   fast-variable stationary laws.
//! - [`integrate`]: fine-step Euler-Maruyama integration recording the slow
//!   block on a coarse lag grid.
//! - [`dataset`]: assembly of one-step `(x0, x1)` training pairs from short
//!   burst trajectories, with per-coordinate standardization.
//! - [`net`]: a minimal dense tanh network with exact reverse-mode gradients
//!   and MADE-style autoregressive masks.
//! - [`flow`]: conditional masked affine autoregressive flows with exact
//!   sampling, inversion, and log-density.
//! - [`train`]: maximum-likelihood training with Adam and a cyclic
//!   learning-rate schedule.
//! - [`stats`]: autoregressive rollouts and ensemble statistics for
//!   validation against ground truth.
//!
//! Everything is `f64`, seeded, and deterministic: the same inputs produce
//! bit-identical outputs on every platform (transcendentals go through
//! `libm`, not the platform math library). The crate is `no_std` + `alloc`;
//! file formats, plotting, and the command-line front end live in the
//! companion `slowflow` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod affine;
pub mod dataset;
pub mod error;
pub mod flow;
pub mod integrate;
pub mod net;
pub mod rng;
pub mod stats;
pub mod system;
pub mod train;

pub use affine::Affine;
pub use dataset::PairDataset;
pub use error::Error;
pub use flow::{ConditionerMode, FlowConfig, FlowModel};
pub use integrate::{SimGrid, Trajectory};
pub use net::Mlp;
pub use stats::{ComparisonReport, EnsembleStats};
pub use system::{Preset, SlowFastSystem, System};
pub use train::{TrainConfig, TrainReport};

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
