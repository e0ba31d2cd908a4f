use crate::kitti_io::{CameraIntrinsics, ImageSize, LidarPoint, PointCloud, RigidTransform};

use super::GeometryError;

/// Near plane in meters; points at or behind it are dropped.
pub const Z_MIN: f64 = 0.1;

/// A LiDAR return on the image plane. `depth` is the camera-frame z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
    pub intensity: f64,
}

/// Applies `p ↦ R·p + t` to every point, keeping intensities.
pub fn transform_points(transform: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    cloud
        .points
        .iter()
        .map(|p| {
            let q = transform.apply(&p.position());
            LidarPoint::new(q.x, q.y, q.z, p.intensity)
        })
        .collect::<Vec<_>>()
        .into()
}

fn project_with(
    k: &CameraIntrinsics,
    transform: &RigidTransform,
    cloud: &PointCloud,
    bounds: ImageSize,
) -> Vec<ProjectedPoint> {
    let (w, h) = (bounds.width as f64, bounds.height as f64);
    cloud
        .points
        .iter()
        .filter_map(|p| {
            let c = transform.apply(&p.position());
            if c.z <= Z_MIN {
                return None;
            }
            let (a, b) = (c.x / c.z, c.y / c.z);
            let u = k.fx * a + k.skew * b + k.cx;
            let v = k.fy * b + k.cy;
            ((0.0..w).contains(&u) && (0.0..h).contains(&v)).then_some(ProjectedPoint {
                u,
                v,
                depth: c.z,
                intensity: p.intensity,
            })
        })
        .collect()
}

/// Projects a cloud into an image of `image_size`, dropping points behind the
/// near plane or outside `[0, W) × [0, H)`.
pub fn project_points(
    intrinsics: &CameraIntrinsics,
    transform: &RigidTransform,
    cloud: &PointCloud,
    image_size: ImageSize,
) -> Vec<ProjectedPoint> {
    project_with(intrinsics, transform, cloud, image_size)
}

/// Projects directly at scale `λ` with pseudo intrinsics `diag(λ, λ, 1)·K`
/// into bounds `(round(λ·H₀), round(λ·W₀))`.
pub fn reproject_scaled(
    intrinsics: &CameraIntrinsics,
    scale: f64,
    transform: &RigidTransform,
    cloud: &PointCloud,
    base_size: ImageSize,
) -> Result<Vec<ProjectedPoint>, GeometryError> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(GeometryError::BadScale(scale));
    }
    Ok(project_with(
        &intrinsics.scaled(scale),
        transform,
        cloud,
        base_size.scaled(scale),
    ))
}
