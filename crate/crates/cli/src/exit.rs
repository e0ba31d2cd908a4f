//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use roadfuse::evaluation::EvalError;
use roadfuse::geometry::GeometryError;
use roadfuse::kitti_io::KittiError;
use roadfuse::network::NetworkError;
use roadfuse::training::TrainError;

use crate::config::ConfigError;

pub const SUCCESS: u8 = 0;
pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const NUMERICAL: u8 = 3;

fn network_code(e: &NetworkError) -> u8 {
    match e {
        NetworkError::InvalidConfig(_) | NetworkError::CheckpointMismatch(_) => USAGE,
        _ => DATA,
    }
}

fn train_code(e: &TrainError) -> u8 {
    match e {
        TrainError::NonFiniteLoss { .. } => NUMERICAL,
        TrainError::InvalidConfig(_) | TrainError::OverlappingGroups(_) => USAGE,
        TrainError::Network(n) => network_code(n),
        TrainError::Eval(e) => eval_code(e),
        _ => DATA,
    }
}

fn eval_code(e: &EvalError) -> u8 {
    match e {
        EvalError::EmptyAblation => USAGE,
        EvalError::Network(n) => network_code(n),
        EvalError::Train(t) => train_code(t),
        _ => DATA,
    }
}

fn library_code(e: &roadfuse::Error) -> u8 {
    match e {
        roadfuse::Error::Kitti(_) | roadfuse::Error::Geometry(_) => DATA,
        roadfuse::Error::Network(n) => network_code(n),
        roadfuse::Error::Train(t) => train_code(t),
        roadfuse::Error::Eval(e) => eval_code(e),
    }
}

/// Exit code for a failed command, from the first recognised error in the
/// chain. Unrecognised errors (plain I/O and the like) are data errors.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return train_code(e);
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return eval_code(e);
        }
        if let Some(e) = cause.downcast_ref::<NetworkError>() {
            return network_code(e);
        }
        if cause.is::<KittiError>() || cause.is::<GeometryError>() {
            return DATA;
        }
        if let Some(e) = cause.downcast_ref::<roadfuse::Error>() {
            return library_code(e);
        }
    }
    DATA
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_by_kind() {
        let code = |e: anyhow::Error| exit_code(&e);
        assert_eq!(code(ConfigError("x".into()).into()), USAGE);
        assert_eq!(code(TrainError::NonFiniteLoss { step: 3 }.into()), NUMERICAL);
        assert_eq!(code(EvalError::from(TrainError::NonFiniteLoss { step: 3 }).into()), NUMERICAL);
        assert_eq!(code(KittiError::MissingFrame("a".into()).into()), DATA);
        assert_eq!(code(NetworkError::CheckpointMismatch("n_rfu".into()).into()), USAGE);
        assert_eq!(code(TrainError::EmptyTrainSet.into()), DATA);
        assert_eq!(code(anyhow::Error::from(KittiError::MissingFrame("a".into())).context("loading")), DATA);
        assert_eq!(
            code(anyhow::Error::from(TrainError::NonFiniteLoss { step: 1 }).context("training")),
            NUMERICAL
        );
    }
}
