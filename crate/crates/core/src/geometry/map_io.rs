//! LiDAR map container and depth previews.
//!
//! Container layout, all fields little-endian:
//!
//! | offset | type     | field                        |
//! |--------|----------|------------------------------|
//! | 0      | `[u8;4]` | magic `LMAP`                 |
//! | 4      | `u32`    | format version (1)           |
//! | 8      | `u32`    | H                            |
//! | 12     | `u32`    | W                            |
//! | 16     | `u32`    | C (3)                        |
//! | 20     | `f32`    | λ                            |
//! | 24     | `f32`    | d_max (meters)               |
//! | 28     | `u32`    | H₀ (base image height)       |
//! | 32     | `u32`    | W₀ (base image width)        |
//! | 36     | `f32`    | H·W·C values, row-major HWC  |

use std::io::{Read, Write};

use image::{GrayImage, Luma};
use ndarray::Array3;

use crate::kitti_io::ImageSize;

use super::{GeometryError, LidarMap, DEPTH_CHANNEL, MAP_CHANNELS, MASK_CHANNEL};

const MAGIC: &[u8; 4] = b"LMAP";
const VERSION: u32 = 1;

pub fn write_lidar_map<W: Write>(mut out: W, map: &LidarMap) -> Result<(), GeometryError> {
    let (h, w, c) = map.grid.dim();
    out.write_all(MAGIC)?;
    for v in [VERSION, h as u32, w as u32, c as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&(map.scale as f32).to_le_bytes())?;
    out.write_all(&(map.d_max as f32).to_le_bytes())?;
    out.write_all(&(map.base_size.height as u32).to_le_bytes())?;
    out.write_all(&(map.base_size.width as u32).to_le_bytes())?;
    let mut body = Vec::with_capacity(h * w * c * 4);
    for v in map.grid.iter() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&body)?;
    Ok(())
}

pub fn read_lidar_map<R: Read>(mut input: R) -> Result<LidarMap, GeometryError> {
    let mut header = [0u8; 36];
    input.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(GeometryError::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes"));
    let f32_at = |o: usize| f32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(4) != VERSION {
        return Err(GeometryError::Format(format!("unsupported version {}", u32_at(4))));
    }
    let (h, w, c) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
    if c != MAP_CHANNELS {
        return Err(GeometryError::Format(format!("expected 3 channels, found {c}")));
    }
    let mut body = vec![0u8; h * w * c * 4];
    input.read_exact(&mut body)?;
    let values: Vec<f32> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let grid = Array3::from_shape_vec((h, w, c), values)
        .map_err(|e| GeometryError::Format(e.to_string()))?;
    Ok(LidarMap {
        grid,
        scale: f32_at(20) as f64,
        d_max: f32_at(24) as f64,
        base_size: ImageSize::new(u32_at(28) as usize, u32_at(32) as usize),
    })
}

/// Grayscale depth preview: near returns bright, empty cells black.
pub fn render_depth_preview(map: &LidarMap) -> GrayImage {
    let (h, w, _) = map.grid.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        if map.grid[(r, c, MASK_CHANNEL)] > 0.5 {
            let d = map.grid[(r, c, DEPTH_CHANNEL)].clamp(0.0, 1.0);
            Luma([(255.0 - 235.0 * d).round() as u8])
        } else {
            Luma([0])
        }
    })
}
