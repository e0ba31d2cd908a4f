//! Augmentation, masked cross-entropy, grouped SGD and the training loop.

mod augment;
mod log;
mod loss;
mod optimizer;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::EvalError;
use crate::geometry::{DensifyConfig, GeometryError, DEFAULT_D_MAX};
use crate::kitti_io::{ImageSize, KittiError};
use crate::network::NetworkError;

pub use augment::{
    augment, normalize_image, prepare_sample, resize_image_bilinear, resize_mask_nearest, PreparedSample,
    IMAGENET_MEAN,
};
pub use log::{read_metric_log, MetricLog, MetricRecord, Split};
pub use loss::{label_tensors, masked_cross_entropy};
pub use optimizer::{make_optimizer, optimizer_for, Sgd, SgdGroup};
pub use trainer::{
    prepare_all, train, train_prepared, TrainOutcome, BEST_CHECKPOINT, FINAL_CHECKPOINT, METRICS_FILE,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("sample `{id}` lacks {field}")]
    MissingField { id: String, field: &'static str },
    #[error("loss is undefined: no valid pixels in the batch")]
    EmptyValidRegion,
    #[error("parameter `{0}` appears in more than one optimizer group")]
    OverlappingGroups(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Kitti(#[from] KittiError),
    #[error(transparent)]
    Eval(#[from] Box<EvalError>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<candle_core::Error> for TrainError {
    fn from(e: candle_core::Error) -> Self {
        TrainError::Network(NetworkError::Candle(e))
    }
}

impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        TrainError::Eval(Box::new(e))
    }
}

/// Named default sets for [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// The published recipe at full KITTI resolution.
    Paper,
    /// Small resolution and budget for CPU runs on synthetic data.
    Toy,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Toy => "toy",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "toy" => Ok(Profile::Toy),
            other => Err(format!("unknown profile `{other}` (expected paper or toy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub profile: Profile,
    pub batch_size: usize,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<u64>,
    pub target_size: ImageSize,
    pub flip_prob: f64,
    pub seed: u64,
    /// Validate every this many epochs (the last epoch always validates).
    pub val_every: usize,
    pub d_max: f64,
    /// Bilateral hole filling of LiDAR maps before they enter the network.
    pub densify: Option<DensifyConfig>,
    /// Feed all-zero LiDAR maps (camera-only ablation).
    pub zero_lidar: bool,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            batch_size: 4,
            lr_encoder: 5e-4,
            lr_decoder: 5e-3,
            momentum: 0.9,
            weight_decay: 1e-5,
            epochs: 2000,
            max_steps: None,
            target_size: ImageSize::new(384, 1248),
            flip_prob: 0.5,
            seed: 0,
            val_every: 1,
            d_max: DEFAULT_D_MAX,
            densify: None,
            zero_lidar: false,
        }
    }

    pub fn toy() -> Self {
        Self {
            profile: Profile::Toy,
            lr_encoder: 2e-3,
            lr_decoder: 2e-2,
            epochs: 250,
            max_steps: Some(500),
            target_size: ImageSize::new(64, 160),
            val_every: 25,
            ..Self::paper()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Paper => Self::paper(),
            Profile::Toy => Self::toy(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for (name, v) in [("lr_encoder", self.lr_encoder), ("lr_decoder", self.lr_decoder)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a positive rate, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad(format!("flip_prob must lie in [0, 1], got {}", self.flip_prob));
        }
        if self.target_size.pixels() == 0 || !self.target_size.divisible_by(32) {
            return bad(format!("target size {} is not divisible by 32", self.target_size));
        }
        if self.val_every == 0 {
            return bad("val_every must be positive".into());
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return bad(format!("d_max must be positive, got {}", self.d_max));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_recipe_values() {
        let c = TrainConfig::paper();
        assert_eq!((c.batch_size, c.epochs), (4, 2000));
        assert_eq!((c.lr_encoder, c.lr_decoder), (5e-4, 5e-3));
        assert_eq!((c.momentum, c.weight_decay), (0.9, 1e-5));
        assert_eq!(c.target_size, ImageSize::new(384, 1248));
        assert_eq!(c.flip_prob, 0.5);
        c.validate().unwrap();
        TrainConfig::toy().validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = TrainConfig::toy();
        c.target_size = ImageSize::new(65, 160);
        assert!(c.validate().is_err());
        let mut c = TrainConfig::toy();
        c.lr_decoder = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::toy();
        c.flip_prob = 1.5;
        assert!(c.validate().is_err());
    }
}
