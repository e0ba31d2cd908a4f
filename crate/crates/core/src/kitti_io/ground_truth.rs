//! Ground-truth color encoding of the KITTI ROAD devkit.
//!
//! Red marks the evaluated region and red+blue (magenta) marks road; black
//! pixels are ignored. The devkit tests channels against zero, which agrees
//! with the `== 255` reading on the lossless 0/255 PNGs shipped with the data.

use image::{DynamicImage, Rgb, RgbImage};
use ndarray::Array2;

use super::{GroundTruth, KittiError};

const ROAD: Rgb<u8> = Rgb([255, 0, 255]);
const NON_ROAD: Rgb<u8> = Rgb([255, 0, 0]);
const IGNORED: Rgb<u8> = Rgb([0, 0, 0]);

/// Splits a ground-truth image into `(road, valid)` masks.
pub fn load_ground_truth(gt_image: &DynamicImage) -> Result<GroundTruth, KittiError> {
    if gt_image.color().channel_count() < 3 {
        return Err(KittiError::ShapeMismatch(format!(
            "ground truth must have 3 color channels, found {:?}",
            gt_image.color()
        )));
    }
    let rgb = gt_image.to_rgb8();
    let (w, h) = rgb.dimensions();
    let mut road = Array2::from_elem((h as usize, w as usize), false);
    let mut valid = Array2::from_elem((h as usize, w as usize), false);
    for (x, y, px) in rgb.enumerate_pixels() {
        let [r, _, b] = px.0;
        let idx = (y as usize, x as usize);
        valid[idx] = r > 0;
        road[idx] = r > 0 && b > 0;
    }
    GroundTruth::new(road, valid)
}

/// Inverse of [`load_ground_truth`].
pub fn encode_ground_truth(gt: &GroundTruth) -> RgbImage {
    let (h, w) = gt.road.dim();
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let idx = (y as usize, x as usize);
        match (gt.road[idx], gt.valid[idx]) {
            (true, _) => ROAD,
            (false, true) => NON_ROAD,
            (false, false) => IGNORED,
        }
    })
}
