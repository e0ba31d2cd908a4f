//! Road segmentation by fusing camera images with LiDAR in the decoder.
//!
//! The crate is organised along the processing pipeline:
//!
//! - [`kitti_io`]: KITTI ROAD file formats, dataset splits and a synthetic
//!   scene generator for desk-scale runs.
//! - [`geometry`]: point projection, multi-scale reprojection with scaled
//!   intrinsics, z-buffered LiDAR maps and optional bilateral densification.
//! - [`network`]: residual encoder, LiDAR processing block, chained residual
//!   pooling and the refined fusion unit (RFU) decoder.
//! - [`training`]: augmentation, masked cross-entropy, grouped SGD and the
//!   training loop.
//! - [`evaluation`]: confusion counts, MaxF/AP/IoU/accuracy, overlays and the
//!   RFU ablation harness.

pub mod evaluation;
pub mod geometry;
pub mod kitti_io;
pub mod network;
pub mod training;

mod error;

pub use error::{Error, Result};
pub use evaluation::{ConfusionCounts, MetricsReport};
pub use geometry::{LidarMap, LidarMapPyramid, PyramidScale};
pub use kitti_io::{CalibrationSet, CameraIntrinsics, ImageSize, PointCloud, RigidTransform, Sample};
pub use network::{Backbone, FusionNet, RfuConfig};
pub use training::TrainConfig;
