//! KITTI ROAD directory layout:
//! `<root>/training/{image_2, gt_image_2, calib, velodyne}` and
//! `<root>/testing/{image_2, calib, velodyne}`.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use super::{
    encode_ground_truth, encode_point_cloud, format_calibration, load_ground_truth,
    load_point_cloud, parse_calibration, Category, ImageSize, KittiError, Sample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Training,
    Testing,
}

impl Split {
    fn dir(self) -> &'static str {
        match self {
            Split::Training => "training",
            Split::Testing => "testing",
        }
    }
}

/// File paths belonging to one frame.
#[derive(Debug, Clone)]
pub struct FrameFiles {
    pub image: PathBuf,
    pub calib: PathBuf,
    pub velodyne: PathBuf,
    /// Only meaningful for the training split.
    pub ground_truth: PathBuf,
}

#[derive(Debug, Clone)]
pub struct KittiDataset {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KittiError + '_ {
    move |source| KittiError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> KittiError + '_ {
    move |source| KittiError::Image {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_rgb_image(path: &Path) -> Result<RgbImage, KittiError> {
    Ok(image::open(path).map_err(image_err(path))?.to_rgb8())
}

impl KittiDataset {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Creates the (possibly empty) directory tree for both splits.
    pub fn create_layout(&self) -> Result<(), KittiError> {
        for split in [Split::Training, Split::Testing] {
            let mut subdirs = vec!["image_2", "calib", "velodyne"];
            if split == Split::Training {
                subdirs.push("gt_image_2");
            }
            for sub in subdirs {
                let dir = self.root.join(split.dir()).join(sub);
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            }
        }
        Ok(())
    }

    pub fn frame_files(&self, split: Split, id: &str) -> FrameFiles {
        let base = self.root.join(split.dir());
        let gt_name = match id.rsplit_once('_') {
            Some((prefix, number)) => format!("{prefix}_road_{number}.png"),
            None => format!("{id}_road.png"),
        };
        FrameFiles {
            image: base.join("image_2").join(format!("{id}.png")),
            calib: base.join("calib").join(format!("{id}.txt")),
            velodyne: base.join("velodyne").join(format!("{id}.bin")),
            ground_truth: base.join("gt_image_2").join(gt_name),
        }
    }

    /// Frame ids in a split, sorted; a missing split directory yields none.
    pub fn list_frames(&self, split: Split) -> Result<Vec<String>, KittiError> {
        let dir = self.root.join(split.dir()).join("image_2");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn load_sample(&self, split: Split, id: &str) -> Result<Sample, KittiError> {
        let files = self.frame_files(split, id);
        if !files.image.exists() {
            return Err(KittiError::MissingFrame(id.to_string()));
        }
        let image = load_rgb_image(&files.image)?;
        let size = ImageSize::new(image.height() as usize, image.width() as usize);
        let calib_text = fs::read_to_string(&files.calib).map_err(io_err(&files.calib))?;
        let calib = parse_calibration(&calib_text, size)?;
        let bytes = fs::read(&files.velodyne).map_err(io_err(&files.velodyne))?;
        let cloud = load_point_cloud(&bytes)?;
        let ground_truth = if split == Split::Training && files.ground_truth.exists() {
            let gt_img = image::open(&files.ground_truth).map_err(image_err(&files.ground_truth))?;
            let gt = load_ground_truth(&gt_img)?;
            if gt.size() != size {
                return Err(KittiError::ShapeMismatch(format!(
                    "ground truth {} vs image {size} for `{id}`",
                    gt.size()
                )));
            }
            Some(gt)
        } else {
            None
        };
        Ok(Sample {
            id: id.to_string(),
            image,
            cloud,
            calib,
            ground_truth,
            category: Category::from_frame_id(id).unwrap_or(Category::Synth),
        })
    }

    /// Writes image, calibration, velodyne sweep and (if present) ground truth.
    pub fn write_sample(&self, split: Split, sample: &Sample) -> Result<FrameFiles, KittiError> {
        let files = self.frame_files(split, &sample.id);
        for path in [&files.image, &files.calib, &files.velodyne] {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
        }
        sample.image.save(&files.image).map_err(image_err(&files.image))?;
        fs::write(&files.calib, format_calibration(&sample.calib)).map_err(io_err(&files.calib))?;
        fs::write(&files.velodyne, encode_point_cloud(&sample.cloud))
            .map_err(io_err(&files.velodyne))?;
        if let (Split::Training, Some(gt)) = (split, &sample.ground_truth) {
            if let Some(parent) = files.ground_truth.parent() {
                fs::create_dir_all(parent).map_err(io_err(parent))?;
            }
            encode_ground_truth(gt)
                .save(&files.ground_truth)
                .map_err(image_err(&files.ground_truth))?;
        }
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti_io::make_synthetic_sample;

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let ds = KittiDataset::new(dir.path());
        ds.create_layout().unwrap();
        let sample = make_synthetic_sample(2, (64, 128)).unwrap();
        ds.write_sample(Split::Training, &sample).unwrap();
        assert_eq!(ds.list_frames(Split::Training).unwrap(), vec!["synth_000002"]);

        let back = ds.load_sample(Split::Training, "synth_000002").unwrap();
        assert_eq!(back.image, sample.image);
        assert_eq!(back.ground_truth, sample.ground_truth);
        assert_eq!(back.category, Category::Synth);
        assert_eq!(back.cloud.len(), sample.cloud.len());
        assert!((back.calib.intrinsics.fx - sample.calib.intrinsics.fx).abs() < 1e-12);
    }

    #[test]
    fn kitti_ground_truth_name() {
        let ds = KittiDataset::new("/data");
        let files = ds.frame_files(Split::Training, "umm_000012");
        assert!(files.ground_truth.ends_with("training/gt_image_2/umm_road_000012.png"));
    }

    #[test]
    fn unknown_frame() {
        let dir = tempfile::tempdir().unwrap();
        let ds = KittiDataset::new(dir.path());
        assert!(matches!(
            ds.load_sample(Split::Training, "um_000999"),
            Err(KittiError::MissingFrame(_))
        ));
    }
}
