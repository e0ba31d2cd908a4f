use image::{Rgb, RgbImage};
use ndarray::Array2;

use super::{check_shapes, EvalError};

const GREEN: [u8; 3] = [0, 255, 0];
const RED: [u8; 3] = [255, 0, 0];
const BLUE: [u8; 3] = [0, 0, 255];

fn blend(base: &Rgb<u8>, tint: [u8; 3]) -> Rgb<u8> {
    Rgb(std::array::from_fn(|i| ((base[i] as u16 + tint[i] as u16 + 1) / 2) as u8))
}

/// Tints true positives green, false negatives red and false positives blue
/// (50% blend) inside the valid region; every other pixel is copied.
pub fn render_overlay(
    image: &RgbImage,
    pred: &Array2<bool>,
    road: &Array2<bool>,
    valid: &Array2<bool>,
) -> Result<RgbImage, EvalError> {
    let size = (image.height() as usize, image.width() as usize);
    check_shapes(&[size, pred.dim(), road.dim(), valid.dim()])?;
    let mut out = image.clone();
    for ((r, c), &v) in valid.indexed_iter() {
        if !v {
            continue;
        }
        let tint = match (pred[(r, c)], road[(r, c)]) {
            (true, true) => GREEN,
            (false, true) => RED,
            (true, false) => BLUE,
            (false, false) => continue,
        };
        let px = out.get_pixel_mut(c as u32, r as u32);
        *px = blend(px, tint);
    }
    Ok(out)
}
