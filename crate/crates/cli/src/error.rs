//! Error type and the stable exit-code contract.

use slowflow_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("replay mismatch: {0}")]
    ReplayMismatch(String),

    #[error("self-test failed: {0}")]
    SelfTest(String),
}

impl AppError {
    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        AppError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// Exit codes: 0 success, 2 configuration error, 3 numerical or simulation
/// failure, 4 training divergence.
pub fn exit_code(err: &AppError) -> i32 {
    match err {
        AppError::Core(core) => match core {
            CoreError::Config(_)
            | CoreError::Shape(_)
            | CoreError::DegenerateData { .. } => 2,
            CoreError::IntegrationBlowup { .. }
            | CoreError::NumericalInstability { .. }
            | CoreError::RolloutDiverged { .. } => 3,
            CoreError::TrainingDiverged { .. } => 4,
        },
        AppError::Config(_) | AppError::Io { .. } | AppError::Format { .. } => 2,
        AppError::ReplayMismatch(_) | AppError::SelfTest(_) => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(exit_code(&AppError::config("x")), 2);
        assert_eq!(
            exit_code(&AppError::Core(CoreError::RolloutDiverged { step: 3 })),
            3
        );
        let model = slowflow_core::FlowModel::zeroed(
            slowflow_core::FlowConfig::new(1),
            slowflow_core::Affine::identity(1),
        )
        .unwrap();
        assert_eq!(
            exit_code(&AppError::Core(CoreError::TrainingDiverged {
                iteration: 1,
                last_good: Box::new(model),
            })),
            4
        );
    }
}
