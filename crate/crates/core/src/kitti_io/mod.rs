//! KITTI ROAD on-disk formats, dataset splits and synthetic scenes.

mod calib;
mod dataset;
mod ground_truth;
mod split;
mod synthetic;
mod velodyne;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Vector3};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calib::{format_calibration, parse_calibration};
pub use dataset::{load_rgb_image, FrameFiles, KittiDataset, Split};
pub use ground_truth::{encode_ground_truth, load_ground_truth};
pub use split::split_dataset;
pub use synthetic::{make_synthetic_sample, SYNTH_GROUND_Z};
pub use velodyne::{encode_point_cloud, load_point_cloud};

/// Binary per-pixel mask (`true` = set).
pub type Mask = Array2<bool>;

#[derive(Debug, Error)]
pub enum KittiError {
    #[error("calibration key `{0}` is missing")]
    MissingKey(String),
    #[error("calibration entry `{key}` is malformed: {reason}")]
    MalformedMatrix { key: String, reason: String },
    #[error("rotation is not rigid (orthonormality error {error:.3e})")]
    NonRigid { error: f64 },
    #[error("velodyne payload of {0} bytes is not a multiple of 16")]
    TruncatedFile(usize),
    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("image size {height}x{width} is not divisible by 32")]
    BadSize { height: usize, width: usize },
    #[error("frame `{0}` not found")]
    MissingFrame(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub height: usize,
    pub width: usize,
}

impl ImageSize {
    pub const fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    /// `(round(λ·H), round(λ·W))`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            height: (factor * self.height as f64).round() as usize,
            width: (factor * self.width as f64).round() as usize,
        }
    }

    pub fn pixels(self) -> usize {
        self.height * self.width
    }

    pub fn divisible_by(self, n: usize) -> bool {
        self.height % n == 0 && self.width % n == 0
    }
}

impl fmt::Display for ImageSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// A single LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Reflectance in `[0, 1]`.
    pub intensity: f64,
}

impl LidarPoint {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<LidarPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl From<Vec<LidarPoint>> for PointCloud {
    fn from(points: Vec<LidarPoint>) -> Self {
        PointCloud::new(points)
    }
}

/// Pinhole intrinsics. `skew` couples the y coordinate into u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, KittiError> {
        Self::with_skew(fx, fy, cx, cy, 0.0)
    }

    pub fn with_skew(fx: f64, fy: f64, cx: f64, cy: f64, skew: f64) -> Result<Self, KittiError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(KittiError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if ![fx, fy, cx, cy, skew].iter().all(|v| v.is_finite()) {
            return Err(KittiError::InvalidIntrinsics("non-finite entry".into()));
        }
        Ok(Self { fx, fy, cx, cy, skew })
    }

    /// Pseudo intrinsics `diag(λ, λ, 1)·K`: every pixel-unit entry scales by λ.
    pub fn scaled(&self, factor: f64) -> Self {
        self.rescaled(factor, factor)
    }

    /// Anisotropic rescale used when an image is resized to a new geometry.
    /// Horizontal entries (fx, skew, cx) follow `sx`, vertical ones follow `sy`.
    pub fn rescaled(&self, sx: f64, sy: f64) -> Self {
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            skew: self.skew * sx,
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.skew, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }
}

/// Orthonormality tolerance for a valid rotation.
pub const RIGID_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting rotations that are not in SO(3) within
    /// [`RIGID_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, KittiError> {
        let error = rotation_error(&rotation);
        if error > RIGID_TOLERANCE || !translation.iter().all(|v| v.is_finite()) {
            return Err(KittiError::NonRigid { error });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// The 4×4 homogeneous matrix `[R t; 0 1]`.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Largest deviation of `RᵀR` from identity, or of `det R` from one.
pub fn rotation_error(r: &Matrix3<f64>) -> f64 {
    let gram = r.transpose() * r - Matrix3::identity();
    let ortho = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let det = (r.determinant() - 1.0).abs();
    let e = ortho.max(det);
    if e.is_finite() {
        e
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSet {
    pub intrinsics: CameraIntrinsics,
    pub lidar_to_cam: RigidTransform,
    pub image_size: ImageSize,
}

impl CalibrationSet {
    /// Calibration for the same sensors after resizing the image to `target`.
    pub fn resized(&self, target: ImageSize) -> Self {
        let sx = target.width as f64 / self.image_size.width as f64;
        let sy = target.height as f64 / self.image_size.height as f64;
        Self {
            intrinsics: self.intrinsics.rescaled(sx, sy),
            lidar_to_cam: self.lidar_to_cam,
            image_size: target,
        }
    }
}

/// KITTI ROAD scene categories plus synthetic scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "UM")]
    Um,
    #[serde(rename = "UMM")]
    Umm,
    #[serde(rename = "UU")]
    Uu,
    #[serde(rename = "SYNTH")]
    Synth,
}

impl Category {
    /// Filename prefix used in the KITTI layout (`um_000000.png`).
    pub fn prefix(self) -> &'static str {
        match self {
            Category::Um => "um",
            Category::Umm => "umm",
            Category::Uu => "uu",
            Category::Synth => "synth",
        }
    }

    pub fn from_frame_id(id: &str) -> Option<Self> {
        let prefix = id.rsplit_once('_').map(|(p, _)| p).unwrap_or(id);
        prefix.parse().ok()
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "um" => Ok(Category::Um),
            "umm" => Ok(Category::Umm),
            "uu" => Ok(Category::Uu),
            "synth" => Ok(Category::Synth),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.prefix().to_ascii_uppercase())
    }
}

/// Road and evaluation-region masks of an annotated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub road: Mask,
    pub valid: Mask,
}

impl GroundTruth {
    /// Fails unless both masks share a shape and road ⊆ valid.
    pub fn new(road: Mask, valid: Mask) -> Result<Self, KittiError> {
        if road.dim() != valid.dim() {
            return Err(KittiError::ShapeMismatch(format!(
                "road mask {:?} vs valid mask {:?}",
                road.dim(),
                valid.dim()
            )));
        }
        if road.iter().zip(valid.iter()).any(|(&r, &v)| r && !v) {
            return Err(KittiError::ShapeMismatch(
                "road pixels must lie inside the valid region".into(),
            ));
        }
        Ok(Self { road, valid })
    }

    pub fn size(&self) -> ImageSize {
        let (h, w) = self.road.dim();
        ImageSize::new(h, w)
    }
}

/// One frame: color image, LiDAR sweep, calibration and optional labels.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: image::RgbImage,
    pub cloud: PointCloud,
    pub calib: CalibrationSet,
    pub ground_truth: Option<GroundTruth>,
    pub category: Category,
}

impl Sample {
    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.image.height() as usize, self.image.width() as usize)
    }
}
