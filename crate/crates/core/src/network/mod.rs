//! Residual encoder, LiDAR processing block, chained residual pooling and the
//! refined fusion unit (RFU) decoder.
//!
//! All tensors are NCHW. Images enter mean-subtracted; LiDAR maps enter as
//! three channels (depth / d_max, intensity, occupancy).

mod backbone;
mod checkpoint;
mod decoder;
mod layers;
mod model;
mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backbone::{Encoder, FeaturePyramid};
pub use checkpoint::{
    encoder_weights, load_checkpoint, load_pretrained_backbone, read_manifest, read_weight_store, save_checkpoint,
    write_weight_store, CheckpointManifest, PretrainedReport,
};
pub use decoder::{Crp, Decoder, LidarBlock, Rfu, RFU_SCHEDULE};
pub use layers::{
    bilinear_matrix, log_softmax_channels, max_pool_same, resize_bilinear, softmax_channels, BatchNorm, Conv2d,
    MIN_BATCH_FOR_BN_STATS,
};
pub use model::{FusionNet, ModelConfig, Precision, SegmentationOutput};
pub use params::{Init, ParamEntry, ParamGroup, ParamKind, ParamStore, Scope};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("tensor backend: {0}")]
    Candle(#[from] candle_core::Error),
    #[error("bad input shape: {0}")]
    BadShape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("checkpoint does not match model: {0}")]
    CheckpointMismatch(String),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Encoder variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// 50-layer bottleneck residual network.
    Res50,
    /// 101-layer bottleneck residual network.
    Res101,
    /// Four basic residual blocks, widths 16..128, for CPU-scale runs.
    Toy,
}

impl Backbone {
    /// Channel counts of the 1/4, 1/8, 1/16 and 1/32 stage outputs.
    pub fn channels(self) -> [usize; 4] {
        match self {
            Backbone::Res50 | Backbone::Res101 => [256, 512, 1024, 2048],
            Backbone::Toy => [16, 32, 64, 128],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Backbone::Res50 => "res50",
            Backbone::Res101 => "res101",
            Backbone::Toy => "toy",
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backbone {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "res50" | "resnet50" | "50" => Ok(Backbone::Res50),
            "res101" | "resnet101" | "101" => Ok(Backbone::Res101),
            "toy" => Ok(Backbone::Toy),
            other => Err(NetworkError::InvalidConfig(format!("unknown backbone `{other}`"))),
        }
    }
}

/// Internal dimensions of every RFU in the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfuConfig {
    /// Fusion width D.
    pub fusion_channels: usize,
    pub crp_stages: usize,
    pub crp_pool_window: usize,
    pub lidar_block_layers: usize,
}

impl Default for RfuConfig {
    fn default() -> Self {
        Self {
            fusion_channels: 256,
            crp_stages: 2,
            crp_pool_window: 5,
            lidar_block_layers: 2,
        }
    }
}

impl RfuConfig {
    pub fn toy() -> Self {
        Self {
            fusion_channels: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let fields = [
            ("fusion_channels", self.fusion_channels),
            ("crp_stages", self.crp_stages),
            ("crp_pool_window", self.crp_pool_window),
            ("lidar_block_layers", self.lidar_block_layers),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(NetworkError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
