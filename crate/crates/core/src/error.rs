//! Error type shared by all pipeline stages.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::flow::FlowModel;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (bad intervals, non-commensurate time steps,
    /// non-positive counts, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector or grid dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The integrator produced a non-finite state.
    #[error("integration blew up at t = {time} (trajectory {trajectory:?}): state {state:?}")]
    IntegrationBlowup {
        time: f64,
        state: Vec<f64>,
        trajectory: Option<usize>,
    },

    /// A dataset coordinate carries no variance; it cannot be standardized.
    #[error("degenerate data: coordinate {coordinate} has zero spread")]
    DegenerateData { coordinate: usize },

    /// A flow layer produced a non-finite transform parameter.
    #[error("numerical instability in flow layer {layer}")]
    NumericalInstability { layer: usize },

    /// Training loss stayed non-finite or exploded; the last model that
    /// still evaluated cleanly is carried along.
    #[error("training diverged at iteration {iteration}")]
    TrainingDiverged {
        iteration: u64,
        last_good: Box<FlowModel>,
    },

    /// An autoregressive rollout left the finite range.
    #[error("rollout diverged at step {step}")]
    RolloutDiverged { step: usize },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
