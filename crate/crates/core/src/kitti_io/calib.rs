//! KITTI calibration text files (`KEY: v1 v2 ...` per line).

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use super::{
    rotation_error, CalibrationSet, CameraIntrinsics, ImageSize, KittiError, RigidTransform,
    RIGID_TOLERANCE,
};

/// Projection matrix of the left color camera (camera 2).
const PROJECTION_KEY: &str = "P2";
const RECTIFICATION_KEYS: &[&str] = &["R0_rect", "R_rect"];
const VELO_TO_CAM_KEYS: &[&str] = &["Tr_velo_to_cam", "Tr_velo_cam"];

/// Rotations within this error are snapped back onto SO(3).
const REORTHONORMALIZE_LIMIT: f64 = 1e-3;

/// Parses a KITTI calib file for the camera-2 image of size `image_size`.
///
/// Intrinsics come from the left 3×3 block of `P2`. The LiDAR-to-camera
/// transform is `R0_rect ∘ Tr_velo_to_cam`, followed by the camera-2 offset
/// `K⁻¹·P2[:, 3]` encoded in the projection's last column.
pub fn parse_calibration(text: &str, image_size: ImageSize) -> Result<CalibrationSet, KittiError> {
    if image_size.height == 0 || image_size.width == 0 {
        return Err(KittiError::ShapeMismatch(format!(
            "image size {image_size} must be positive"
        )));
    }
    let entries: HashMap<&str, &str> = text
        .lines()
        .filter_map(|line| line.split_once(':'))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();

    let projection = read_matrix(&entries, &[PROJECTION_KEY], 12)?;
    let rect = read_matrix(&entries, RECTIFICATION_KEYS, 9)?;
    let velo = read_matrix(&entries, VELO_TO_CAM_KEYS, 12)?;

    let k = Matrix3::new(
        projection[0], projection[1], projection[2], //
        projection[4], projection[5], projection[6], //
        projection[8], projection[9], projection[10],
    );
    let offset = Vector3::new(projection[3], projection[7], projection[11]);
    if k[(1, 0)].abs() > 1e-9 || k[(2, 0)].abs() > 1e-9 || k[(2, 1)].abs() > 1e-9 {
        return Err(KittiError::MalformedMatrix {
            key: PROJECTION_KEY.into(),
            reason: "left 3x3 block is not upper triangular".into(),
        });
    }
    if (k[(2, 2)] - 1.0).abs() > 1e-9 {
        return Err(KittiError::MalformedMatrix {
            key: PROJECTION_KEY.into(),
            reason: format!("expected P[2][2] = 1, found {}", k[(2, 2)]),
        });
    }
    let intrinsics = CameraIntrinsics::with_skew(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)], k[(0, 1)])
        .map_err(|e| KittiError::MalformedMatrix {
            key: PROJECTION_KEY.into(),
            reason: e.to_string(),
        })?;
    let camera_offset = k
        .try_inverse()
        .map(|inv| inv * offset)
        .ok_or_else(|| KittiError::MalformedMatrix {
            key: PROJECTION_KEY.into(),
            reason: "singular intrinsic block".into(),
        })?;

    let rect_rotation = Matrix3::from_row_slice(&rect);
    let velo_rotation = Matrix3::new(
        velo[0], velo[1], velo[2], //
        velo[4], velo[5], velo[6], //
        velo[8], velo[9], velo[10],
    );
    let velo_translation = Vector3::new(velo[3], velo[7], velo[11]);

    let rotation = snap_rotation(rect_rotation * velo_rotation)?;
    let translation = rect_rotation * velo_translation + camera_offset;
    let lidar_to_cam = RigidTransform::new(rotation, translation)?;

    Ok(CalibrationSet {
        intrinsics,
        lidar_to_cam,
        image_size,
    })
}

fn read_matrix(
    entries: &HashMap<&str, &str>,
    keys: &[&str],
    expected: usize,
) -> Result<Vec<f64>, KittiError> {
    let (key, raw) = keys
        .iter()
        .find_map(|k| entries.get(k).map(|v| (*k, *v)))
        .ok_or_else(|| KittiError::MissingKey(keys[0].to_string()))?;
    let values = raw
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| KittiError::MalformedMatrix {
                    key: key.into(),
                    reason: format!("`{tok}` is not a finite number"),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(KittiError::MalformedMatrix {
            key: key.into(),
            reason: format!("expected {expected} values, found {}", values.len()),
        });
    }
    Ok(values)
}

fn snap_rotation(r: Matrix3<f64>) -> Result<Matrix3<f64>, KittiError> {
    let error = rotation_error(&r);
    if error <= RIGID_TOLERANCE {
        return Ok(r);
    }
    if error >= REORTHONORMALIZE_LIMIT {
        return Err(KittiError::NonRigid { error });
    }
    let svd = r.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(KittiError::NonRigid { error }),
    };
    let snapped = u * v_t;
    if snapped.determinant() < 0.0 {
        return Err(KittiError::NonRigid { error });
    }
    Ok(snapped)
}

/// Writes a calibration in the KITTI layout read by [`parse_calibration`].
///
/// `P0`..`P3` all carry `[K | 0]`, `R0_rect` is identity and
/// `Tr_velo_to_cam` holds the full LiDAR-to-camera transform.
pub fn format_calibration(calib: &CalibrationSet) -> String {
    let k = calib.intrinsics.matrix();
    let projection: Vec<f64> = (0..3)
        .flat_map(|r| [k[(r, 0)], k[(r, 1)], k[(r, 2)], 0.0])
        .collect();
    let rot = calib.lidar_to_cam.rotation();
    let t = calib.lidar_to_cam.translation();
    let velo: Vec<f64> = (0..3)
        .flat_map(|r| [rot[(r, 0)], rot[(r, 1)], rot[(r, 2)], t[r]])
        .collect();
    let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

    let mut out = String::new();
    for name in ["P0", "P1", "P2", "P3"] {
        write_row(&mut out, name, &projection);
    }
    write_row(&mut out, "R0_rect", &identity);
    write_row(&mut out, "Tr_velo_to_cam", &velo);
    out
}

fn write_row(out: &mut String, key: &str, values: &[f64]) {
    let _ = write!(out, "{key}:");
    for v in values {
        // `{:e}` prints the shortest round-tripping representation
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
}
