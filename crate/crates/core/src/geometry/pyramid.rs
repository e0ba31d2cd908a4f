use crate::kitti_io::{CalibrationSet, ImageSize, PointCloud};

use super::{rasterize, reproject_scaled, GeometryError, LidarMap, PyramidScale};

/// LiDAR maps of one frame at several scales, stored coarse to fine.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarMapPyramid {
    entries: Vec<(PyramidScale, LidarMap)>,
}

impl LidarMapPyramid {
    pub fn scales(&self) -> impl Iterator<Item = PyramidScale> + '_ {
        self.entries.iter().map(|(s, _)| *s)
    }

    pub fn maps(&self) -> impl Iterator<Item = &LidarMap> {
        self.entries.iter().map(|(_, m)| m)
    }

    pub fn get(&self, scale: PyramidScale) -> Option<&LidarMap> {
        self.entries.iter().find(|(s, _)| *s == scale).map(|(_, m)| m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn base_size(&self) -> Option<ImageSize> {
        self.entries.first().map(|(_, m)| m.base_size)
    }

    pub fn flipped_horizontally(&self) -> Self {
        self.map_each(LidarMap::flipped_horizontally)
    }

    pub fn zeroed(&self) -> Self {
        self.map_each(LidarMap::zeroed)
    }

    pub fn map_each(&self, f: impl Fn(&LidarMap) -> LidarMap) -> Self {
        Self {
            entries: self.entries.iter().map(|(s, m)| (*s, f(m))).collect(),
        }
    }
}

/// Reprojects `cloud` independently at every requested scale of an image of
/// `base_size`.
///
/// Intrinsics are first rescaled from the calibration's image size to
/// `base_size`, so a resized frame keeps a consistent projection.
pub fn build_pyramid(
    cloud: &PointCloud,
    calib: &CalibrationSet,
    base_size: ImageSize,
    scales: &[PyramidScale],
    d_max: f64,
) -> Result<LidarMapPyramid, GeometryError> {
    let calib = if calib.image_size == base_size {
        *calib
    } else {
        calib.resized(base_size)
    };
    let mut ordered: Vec<PyramidScale> = scales.to_vec();
    ordered.sort_by(|a, b| b.cmp(a));
    ordered.dedup();
    let entries = ordered
        .into_iter()
        .map(|scale| {
            let factor = scale.factor();
            let points = reproject_scaled(&calib.intrinsics, factor, &calib.lidar_to_cam, cloud, base_size)?;
            let size = base_size.scaled(factor);
            let mut map = rasterize(&points, size.height, size.width, d_max);
            map.scale = factor;
            map.base_size = base_size;
            Ok((scale, map))
        })
        .collect::<Result<Vec<_>, GeometryError>>()?;
    Ok(LidarMapPyramid { entries })
}
