//! LiDAR-to-image projection and LiDAR map construction.
//!
//! Points are projected with `p_img = K·T·p_lidar`. Coarser maps are not
//! pooled from the finest one: each scale is reprojected directly with the
//! pseudo intrinsics `diag(λ, λ, 1)·K`, so every map keeps exact point
//! positions at its own resolution.

mod densify;
mod map_io;
mod projection;
mod pyramid;
mod raster;

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kitti_io::ImageSize;

pub use densify::{densify_bilateral, DensifyConfig};
pub use map_io::{read_lidar_map, render_depth_preview, write_lidar_map};
pub use projection::{project_points, reproject_scaled, transform_points, ProjectedPoint, Z_MIN};
pub use pyramid::{build_pyramid, LidarMapPyramid};
pub use raster::rasterize;

/// Depth normalisation constant (effective LiDAR range, meters).
pub const DEFAULT_D_MAX: f64 = 80.0;

pub const DEPTH_CHANNEL: usize = 0;
pub const INTENSITY_CHANNEL: usize = 1;
pub const MASK_CHANNEL: usize = 2;
pub const MAP_CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("scale factor {0} is outside (0, 1]")]
    BadScale(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed LiDAR map container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scales at which LiDAR maps are generated, relative to the network input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PyramidScale {
    #[serde(rename = "1/4")]
    Quarter,
    #[serde(rename = "1/8")]
    Eighth,
    #[serde(rename = "1/16")]
    Sixteenth,
    #[serde(rename = "1/32")]
    ThirtySecond,
}

impl PyramidScale {
    pub const ALL: [PyramidScale; 4] = [
        PyramidScale::Quarter,
        PyramidScale::Eighth,
        PyramidScale::Sixteenth,
        PyramidScale::ThirtySecond,
    ];

    /// The three scales used by the decoder by default.
    pub const DEFAULT: [PyramidScale; 3] = [
        PyramidScale::Quarter,
        PyramidScale::Eighth,
        PyramidScale::Sixteenth,
    ];

    pub fn divisor(self) -> usize {
        match self {
            PyramidScale::Quarter => 4,
            PyramidScale::Eighth => 8,
            PyramidScale::Sixteenth => 16,
            PyramidScale::ThirtySecond => 32,
        }
    }

    pub fn factor(self) -> f64 {
        1.0 / self.divisor() as f64
    }

    pub fn from_divisor(d: usize) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.divisor() == d)
    }
}

impl fmt::Display for PyramidScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "1/{}", self.divisor())
    }
}

impl FromStr for PyramidScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let d = s.trim().trim_start_matches("1/");
        d.parse::<usize>()
            .ok()
            .and_then(Self::from_divisor)
            .ok_or_else(|| format!("unsupported scale `{s}` (expected 1/4, 1/8, 1/16 or 1/32)"))
    }
}

/// A rasterized LiDAR image: depth/d_max, intensity and occupancy channels.
///
/// Empty cells are all-zero; occupied cells have mask 1 and depth in
/// `(0, 1]` after normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarMap {
    /// `(H, W, 3)`.
    pub grid: Array3<f32>,
    pub scale: f64,
    pub base_size: ImageSize,
    pub d_max: f64,
}

impl LidarMap {
    pub fn zeros(size: ImageSize, scale: f64, base_size: ImageSize, d_max: f64) -> Self {
        Self {
            grid: Array3::zeros((size.height, size.width, MAP_CHANNELS)),
            scale,
            base_size,
            d_max,
        }
    }

    pub fn size(&self) -> ImageSize {
        let (h, w, _) = self.grid.dim();
        ImageSize::new(h, w)
    }

    pub fn occupancy(&self) -> Array2<bool> {
        self.grid.slice(s![.., .., MASK_CHANNEL]).mapv(|m| m > 0.5)
    }

    pub fn occupied_cells(&self) -> usize {
        self.grid
            .slice(s![.., .., MASK_CHANNEL])
            .iter()
            .filter(|&&m| m > 0.5)
            .count()
    }

    pub fn occupancy_fraction(&self) -> f64 {
        let n = self.size().pixels();
        if n == 0 {
            0.0
        } else {
            self.occupied_cells() as f64 / n as f64
        }
    }

    /// Depth in meters at an occupied cell.
    pub fn depth_meters(&self, row: usize, col: usize) -> Option<f64> {
        (self.grid[(row, col, MASK_CHANNEL)] > 0.5)
            .then(|| self.grid[(row, col, DEPTH_CHANNEL)] as f64 * self.d_max)
    }

    /// Left-right mirror image of the map.
    pub fn flipped_horizontally(&self) -> Self {
        Self {
            grid: self.grid.slice(s![.., ..;-1, ..]).to_owned(),
            ..self.clone()
        }
    }

    /// Same geometry with every channel cleared.
    pub fn zeroed(&self) -> Self {
        Self {
            grid: Array3::zeros(self.grid.raw_dim()),
            ..self.clone()
        }
    }

    /// Channel-major `(3, H, W)` copy as used by the network.
    pub fn to_chw(&self) -> Vec<f32> {
        let (h, w, c) = self.grid.dim();
        let mut out = Vec::with_capacity(h * w * c);
        for ch in 0..c {
            out.extend(self.grid.slice(s![.., .., ch]).iter().copied());
        }
        out
    }
}
