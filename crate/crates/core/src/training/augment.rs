use image::RgbImage;
use ndarray::{s, Array2, Array3};
use rand::Rng;

use crate::geometry::{build_pyramid, densify_bilateral, DensifyConfig, LidarMapPyramid, PyramidScale};
use crate::kitti_io::{Category, GroundTruth, ImageSize, Mask, Sample};

use super::{TrainConfig, TrainError};

/// Per-channel RGB means of the ImageNet-pretrained backbones, on `[0, 1]`.
pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];

/// A sample at network resolution: normalised CHW image, LiDAR pyramid and
/// (for annotated frames) resized masks.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSample {
    pub id: String,
    pub category: Category,
    /// `(3, H, W)`, scaled to `[0, 1]` with [`IMAGENET_MEAN`] subtracted.
    pub image: Array3<f32>,
    pub pyramid: LidarMapPyramid,
    pub labels: Option<GroundTruth>,
}

impl PreparedSample {
    pub fn size(&self) -> ImageSize {
        let (_, h, w) = self.image.dim();
        ImageSize::new(h, w)
    }

    /// Mirrors image, masks and every LiDAR map left-right together.
    pub fn flipped(&self) -> Self {
        Self {
            id: self.id.clone(),
            category: self.category,
            image: self.image.slice(s![.., .., ..;-1]).to_owned(),
            pyramid: self.pyramid.flipped_horizontally(),
            labels: self.labels.as_ref().map(|gt| GroundTruth {
                road: gt.road.slice(s![.., ..;-1]).to_owned(),
                valid: gt.valid.slice(s![.., ..;-1]).to_owned(),
            }),
        }
    }

    /// Same sample with all LiDAR maps cleared.
    pub fn without_lidar(&self) -> Self {
        Self {
            pyramid: self.pyramid.zeroed(),
            ..self.clone()
        }
    }
}

/// Source index pairs and weights for half-pixel-centred linear resampling.
fn linear_taps(input: usize, output: usize) -> Vec<(usize, usize, f32)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

/// Bilinear resize to `target`, returning `(3, H, W)` values on `[0, 255]`.
pub fn resize_image_bilinear(image: &RgbImage, target: ImageSize) -> Array3<f32> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let cols = linear_taps(w, target.width);
    let rows = linear_taps(h, target.height);
    let mut horizontal = Array3::<f32>::zeros((3, h, target.width));
    for y in 0..h {
        for (x, &(c0, c1, f)) in cols.iter().enumerate() {
            let a = image.get_pixel(c0 as u32, y as u32);
            let b = image.get_pixel(c1 as u32, y as u32);
            for ch in 0..3 {
                horizontal[(ch, y, x)] = a[ch] as f32 * (1.0 - f) + b[ch] as f32 * f;
            }
        }
    }
    let mut out = Array3::<f32>::zeros((3, target.height, target.width));
    for (y, &(r0, r1, f)) in rows.iter().enumerate() {
        for ch in 0..3 {
            for x in 0..target.width {
                out[(ch, y, x)] = horizontal[(ch, r0, x)] * (1.0 - f) + horizontal[(ch, r1, x)] * f;
            }
        }
    }
    out
}

/// Nearest-neighbour resize sampling the source pixel under each target centre.
pub fn resize_mask_nearest(mask: &Mask, target: ImageSize) -> Mask {
    let (h, w) = mask.dim();
    let pick = |o: usize, input: usize, output: usize| {
        (((o as f64 + 0.5) * input as f64 / output as f64).floor() as usize).min(input - 1)
    };
    Array2::from_shape_fn((target.height, target.width), |(r, c)| {
        mask[(pick(r, h, target.height), pick(c, w, target.width))]
    })
}

/// Scales `[0, 255]` values to `[0, 1]` and subtracts the channel means.
pub fn normalize_image(mut image: Array3<f32>) -> Array3<f32> {
    for (ch, mean) in IMAGENET_MEAN.iter().enumerate() {
        image.slice_mut(s![ch, .., ..]).mapv_inplace(|v| v / 255.0 - mean);
    }
    image
}

/// Deterministic part of augmentation: resize, normalise and reproject the
/// LiDAR pyramid with intrinsics rescaled to `target`.
pub fn prepare_sample(
    sample: &Sample,
    target: ImageSize,
    scales: &[PyramidScale],
    d_max: f64,
    densify: Option<&DensifyConfig>,
) -> Result<PreparedSample, TrainError> {
    if sample.calib.image_size != sample.size() {
        return Err(TrainError::MissingField {
            id: sample.id.clone(),
            field: "a calibration matching the image size",
        });
    }
    let image = normalize_image(resize_image_bilinear(&sample.image, target));
    let mut pyramid = build_pyramid(&sample.cloud, &sample.calib, target, scales, d_max)?;
    if let Some(cfg) = densify {
        pyramid = pyramid.map_each(|m| densify_bilateral(m, cfg));
    }
    let labels = sample.ground_truth.as_ref().map(|gt| GroundTruth {
        road: resize_mask_nearest(&gt.road, target),
        valid: resize_mask_nearest(&gt.valid, target),
    });
    Ok(PreparedSample {
        id: sample.id.clone(),
        category: sample.category,
        image,
        pyramid,
        labels,
    })
}

/// Full training-time augmentation: [`prepare_sample`] then a random
/// horizontal flip with probability `config.flip_prob`.
pub fn augment<R: Rng>(
    sample: &Sample,
    scales: &[PyramidScale],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<PreparedSample, TrainError> {
    if sample.ground_truth.is_none() {
        return Err(TrainError::MissingField {
            id: sample.id.clone(),
            field: "ground truth",
        });
    }
    let prepared = prepare_sample(sample, config.target_size, scales, config.d_max, config.densify.as_ref())?;
    Ok(if rng.random::<f64>() < config.flip_prob {
        prepared.flipped()
    } else {
        prepared
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti_io::make_synthetic_sample;
    use image::Rgb;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_resize_is_exact() {
        let img = RgbImage::from_fn(7, 5, |x, y| Rgb([(x * 30) as u8, (y * 40) as u8, 9]));
        let out = resize_image_bilinear(&img, ImageSize::new(5, 7));
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(out[(0, y, x)], (x * 30) as f32);
                assert_eq!(out[(1, y, x)], (y * 40) as f32);
            }
        }
    }

    #[test]
    fn kitti_frame_resizes_to_network_size() {
        let img = RgbImage::new(1242, 375);
        let out = resize_image_bilinear(&img, ImageSize::new(384, 1248));
        assert_eq!(out.dim(), (3, 384, 1248));
        let mask = Array2::from_elem((375, 1242), true);
        assert_eq!(resize_mask_nearest(&mask, ImageSize::new(384, 1248)).dim(), (384, 1248));
    }

    #[test]
    fn normalisation_subtracts_means() {
        let mut img = Array3::<f32>::zeros((3, 1, 1));
        img[(0, 0, 0)] = 255.0;
        let n = normalize_image(img);
        assert!((n[(0, 0, 0)] - (1.0 - 0.485)).abs() < 1e-6);
        assert!((n[(2, 0, 0)] + 0.406).abs() < 1e-6);
    }

    #[test]
    fn double_flip_is_identity() {
        let s = make_synthetic_sample(3, (64, 160)).unwrap();
        let p = prepare_sample(&s, ImageSize::new(64, 160), &PyramidScale::DEFAULT, 80.0, None).unwrap();
        assert_eq!(p.flipped().flipped(), p);
        assert_ne!(p.flipped(), p);
    }

    #[test]
    fn flipped_occupancy_is_mirrored() {
        let s = make_synthetic_sample(4, (64, 160)).unwrap();
        let p = prepare_sample(&s, ImageSize::new(64, 160), &PyramidScale::DEFAULT, 80.0, None).unwrap();
        let f = p.flipped();
        for (a, b) in p.pyramid.maps().zip(f.pyramid.maps()) {
            let occ = a.occupancy();
            let mirrored = occ.slice(s![.., ..;-1]).to_owned();
            assert_eq!(b.occupancy(), mirrored);
        }
    }

    #[test]
    fn augment_requires_labels() {
        let mut s = make_synthetic_sample(1, (64, 160)).unwrap();
        s.ground_truth = None;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            augment(&s, &PyramidScale::DEFAULT, &TrainConfig::toy(), &mut rng),
            Err(TrainError::MissingField { .. })
        ));
    }

    #[test]
    fn flip_probability_extremes() {
        let s = make_synthetic_sample(2, (64, 160)).unwrap();
        let base = prepare_sample(&s, ImageSize::new(64, 160), &PyramidScale::DEFAULT, 80.0, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = TrainConfig::toy();
        cfg.flip_prob = 0.0;
        assert_eq!(augment(&s, &PyramidScale::DEFAULT, &cfg, &mut rng).unwrap(), base);
        cfg.flip_prob = 1.0;
        assert_eq!(augment(&s, &PyramidScale::DEFAULT, &cfg, &mut rng).unwrap(), base.flipped());
    }
}
