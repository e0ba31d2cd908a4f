//! Confusion counts, threshold sweeps (MaxF, AP), dataset reports, overlays
//! and the RFU-count ablation harness.
//!
//! Conventions: a pixel is predicted road when its probability is at least
//! the threshold; any `0/0` ratio evaluates to 0; dataset metrics pool pixel
//! counts over all images rather than averaging per-image scores.

mod ablation;
mod confusion;
mod overlay;
mod report;
mod sweep;

use thiserror::Error;

use crate::network::NetworkError;
use crate::training::TrainError;

pub use ablation::{ablation_report, AblationReport, AblationRow, AblationSpec, AblationRun};
pub use confusion::{basic_metrics, confusion, BasicMetrics, ConfusionCounts};
pub use overlay::render_overlay;
pub use report::{
    confusion_at_threshold, evaluate_dataset, evaluate_predictions, predict_prepared, report_from_sweep, DatasetAccumulator,
    MetricsReport, DECISION_THRESHOLD,
};
pub use sweep::{
    average_precision, max_f, sweep_thresholds, MaxFResult, ThresholdSweep, AP_RECALL_LEVELS, DEFAULT_THRESHOLDS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sample `{0}` has no ground truth")]
    MissingLabels(String),
    #[error("no configurations to ablate")]
    EmptyAblation,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Train(#[from] Box<TrainError>),
}

impl From<TrainError> for EvalError {
    fn from(e: TrainError) -> Self {
        EvalError::Train(Box::new(e))
    }
}

pub(crate) fn check_shapes(dims: &[(usize, usize)]) -> Result<(), EvalError> {
    match dims.split_first() {
        Some((first, rest)) if rest.iter().any(|d| d != first) => {
            Err(EvalError::ShapeMismatch(format!("array shapes differ: {dims:?}")))
        }
        _ => Ok(()),
    }
}
