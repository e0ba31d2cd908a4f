use thiserror::Error;

use crate::evaluation::EvalError;
use crate::geometry::GeometryError;
use crate::kitti_io::KittiError;
use crate::network::NetworkError;
use crate::training::TrainError;

pub type Result<T> = std::result::Result<T, Error>;

/// Top-level error for callers that drive the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kitti(#[from] KittiError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}
