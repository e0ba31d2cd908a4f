//! Velodyne sweeps: consecutive little-endian `f32` quadruplets `(x, y, z, r)`.

use super::{KittiError, LidarPoint, PointCloud};

const POINT_BYTES: usize = 16;

/// Decodes a raw velodyne `.bin` payload. Intensities are clamped to `[0, 1]`.
pub fn load_point_cloud(bytes: &[u8]) -> Result<PointCloud, KittiError> {
    if bytes.len() % POINT_BYTES != 0 {
        return Err(KittiError::TruncatedFile(bytes.len()));
    }
    bytes
        .chunks_exact(POINT_BYTES)
        .enumerate()
        .map(|(index, chunk)| {
            let f = |i: usize| {
                let b: [u8; 4] = chunk[4 * i..4 * i + 4].try_into().expect("4-byte slice");
                f32::from_le_bytes(b) as f64
            };
            let (x, y, z, r) = (f(0), f(1), f(2), f(3));
            if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                return Err(KittiError::NonFinitePoint { index });
            }
            let intensity = if r.is_nan() { 0.0 } else { r.clamp(0.0, 1.0) };
            Ok(LidarPoint::new(x, y, z, intensity))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(PointCloud::new)
}

/// Encodes a cloud as a velodyne `.bin` payload (values narrowed to `f32`).
pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_payload() {
        assert!(load_point_cloud(&[]).unwrap().is_empty());
    }

    #[test]
    fn truncated_payload() {
        assert!(matches!(
            load_point_cloud(&[0u8; 17]),
            Err(KittiError::TruncatedFile(17))
        ));
    }

    #[test]
    fn intensity_is_clamped() {
        let mut bytes = Vec::new();
        for v in [0.0f32, 0.0, 0.0, 7.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(load_point_cloud(&bytes).unwrap().points[0].intensity, 1.0);
    }

    #[test]
    fn nan_coordinate_rejected() {
        let mut bytes = Vec::new();
        for v in [0.0f32, f32::NAN, 0.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(
            load_point_cloud(&bytes),
            Err(KittiError::NonFinitePoint { index: 0 })
        ));
    }
}
