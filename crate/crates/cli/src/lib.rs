//! IO, file formats, plotting, and command orchestration for the
//! `slowflow` pipeline.
//!
//! The numerical work lives in `slowflow-core`; this crate adds everything
//! that touches the filesystem: the binary dataset/model/trajectory
//! containers, CSV and JSON reports, SVG figures, provenance sidecars, and
//! the five CLI subcommands (`generate`, `train`, `rollout`, `validate`,
//! `replay`). Every output embeds the exact configuration and seeds that
//! produced it, and `replay` re-executes a sidecar and byte-compares the
//! numerical payloads.

pub mod commands;
pub mod config;
pub mod error;
pub mod fnv;
pub mod format;
pub mod svg;
pub mod threads;

pub use error::{exit_code, AppError};

pub type Result<T> = std::result::Result<T, AppError>;
