//! The six pipeline commands. Each returns a summary of what it wrote.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::imageops::FilterType;
use image::{GrayImage, Luma};
use ndarray::Array2;
use roadfuse::evaluation::{
    ablation_report, evaluate_dataset, evaluate_predictions, predict_prepared, render_overlay, AblationReport,
    AblationSpec, MetricsReport, DECISION_THRESHOLD, DEFAULT_THRESHOLDS,
};
use roadfuse::geometry::{build_pyramid, densify_bilateral, render_depth_preview, write_lidar_map, PyramidScale};
use roadfuse::kitti_io::{make_synthetic_sample, split_dataset, ImageSize, KittiDataset, KittiError, Sample, Split};
use roadfuse::network::{load_checkpoint, load_pretrained_backbone, read_weight_store, FusionNet};
use roadfuse::training::{prepare_all, prepare_sample, train, METRICS_FILE};
use serde::Serialize;

use crate::config::RunConfig;
use crate::run_dir::{create_run_dir, write_json, write_manifest};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const ABLATION_TABLE: &str = "table.md";
pub const ABLATION_JSON: &str = "ablation.json";

/// Sample seed for frame `index` of a synthetic dataset generated with `seed`.
fn synth_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index)
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthOutput {
    pub root: PathBuf,
    pub training: Vec<String>,
    pub testing: Vec<String>,
}

/// Writes `n` annotated synthetic frames to the training split and `n_test`
/// unannotated ones to the testing split of `config.dataset_root`.
pub fn cmd_synth(config: &RunConfig, n: usize, n_test: usize, size: ImageSize) -> Result<SynthOutput> {
    let ds = KittiDataset::new(&config.dataset_root);
    ds.create_layout()?;
    let mut out = SynthOutput {
        root: config.dataset_root.clone(),
        training: Vec::with_capacity(n),
        testing: Vec::with_capacity(n_test),
    };
    for i in 0..n + n_test {
        let mut sample = make_synthetic_sample(synth_seed(config.seed, i as u64), (size.height, size.width))?;
        sample.id = format!("synth_{i:06}");
        if i < n {
            ds.write_sample(Split::Training, &sample)?;
            out.training.push(sample.id);
        } else {
            sample.ground_truth = None;
            ds.write_sample(Split::Testing, &sample)?;
            out.testing.push(sample.id);
        }
    }
    Ok(out)
}

/// Looks a frame up in the training split, then the testing split.
pub fn find_frame(ds: &KittiDataset, id: &str) -> Result<Sample> {
    match ds.load_sample(Split::Training, id) {
        Err(KittiError::MissingFrame(_)) => Ok(ds.load_sample(Split::Testing, id)?),
        other => Ok(other?),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectedMap {
    pub scale: PyramidScale,
    pub size: ImageSize,
    pub occupied_cells: usize,
    pub map: PathBuf,
    pub preview: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectOutput {
    pub run_dir: PathBuf,
    pub frame: String,
    pub base_size: ImageSize,
    pub maps: Vec<ProjectedMap>,
}

/// Projects one frame's sweep at each scale of the network input size and
/// writes `.lmap` containers plus depth previews.
pub fn cmd_project(config: &RunConfig, frame_id: &str, scales: &[PyramidScale]) -> Result<ProjectOutput> {
    let ds = KittiDataset::new(&config.dataset_root);
    let sample = find_frame(&ds, frame_id)?;
    let run_dir = create_run_dir(&config.output_dir, "project")?;
    let base_size = config.target_size();
    let mut pyramid = build_pyramid(&sample.cloud, &sample.calib, base_size, scales, config.train.d_max)?;
    if config.densify {
        pyramid = pyramid.map_each(|m| densify_bilateral(m, &config.densify_params));
    }
    let mut maps = Vec::with_capacity(pyramid.len());
    for (scale, map) in pyramid.scales().zip(pyramid.maps()) {
        let stem = format!("{frame_id}_s{}", scale.divisor());
        let map_path = run_dir.join(format!("{stem}.lmap"));
        let file = File::create(&map_path).with_context(|| format!("creating {}", map_path.display()))?;
        write_lidar_map(BufWriter::new(file), map)?;
        let preview = run_dir.join(format!("{stem}.png"));
        render_depth_preview(map)
            .save(&preview)
            .with_context(|| format!("writing {}", preview.display()))?;
        maps.push(ProjectedMap {
            scale,
            size: map.size(),
            occupied_cells: map.occupied_cells(),
            map: map_path,
            preview,
        });
    }
    let out = ProjectOutput {
        run_dir: run_dir.clone(),
        frame: frame_id.to_string(),
        base_size,
        maps,
    };
    write_manifest(&run_dir, "project", config, &out)?;
    Ok(out)
}

/// Training-split frames divided into train and validation by `split_seed`.
pub fn load_train_val(config: &RunConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let ds = KittiDataset::new(&config.dataset_root);
    let ids = ds.list_frames(Split::Training)?;
    let (train_ids, val_ids) = split_dataset(&ids, config.split_seed);
    let load = |ids: &[String]| -> Result<Vec<Sample>> {
        ids.iter()
            .map(|id| Ok(ds.load_sample(Split::Training, id)?))
            .collect()
    };
    Ok((load(&train_ids)?, load(&val_ids)?))
}

fn ids(samples: &[Sample]) -> Vec<String> {
    samples.iter().map(|s| s.id.clone()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutput {
    pub run_dir: PathBuf,
    pub train_frames: Vec<String>,
    pub val_frames: Vec<String>,
    pub pretrained_tensors: Option<usize>,
    pub steps: u64,
    pub final_train_loss: Option<f64>,
    pub best_val_iou: Option<f64>,
    pub metrics: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
}

/// Trains a fresh network (optionally from pretrained encoder weights).
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutput> {
    let (train_set, val_set) = load_train_val(config)?;
    let run_dir = create_run_dir(&config.output_dir, "train")?;
    let net = FusionNet::new(config.model_config(), config.seed)?;
    let pretrained_tensors = match &config.pretrained {
        Some(path) => {
            let weights = read_weight_store(path)?;
            Some(load_pretrained_backbone(&net, &weights)?.loaded)
        }
        None => None,
    };
    let mut out = TrainOutput {
        run_dir: run_dir.clone(),
        train_frames: ids(&train_set),
        val_frames: ids(&val_set),
        pretrained_tensors,
        steps: 0,
        final_train_loss: None,
        best_val_iou: None,
        metrics: run_dir.join(METRICS_FILE),
        best_checkpoint: None,
        final_checkpoint: None,
    };
    write_manifest(&run_dir, "train", config, &out)?;
    let outcome = train(&net, &train_set, &val_set, &config.train, Some(&run_dir))?;
    out.steps = outcome.steps;
    out.final_train_loss = outcome.train_losses().last().copied();
    out.best_val_iou = outcome.best_val_iou;
    out.best_checkpoint = outcome.best_checkpoint;
    out.final_checkpoint = outcome.final_checkpoint;
    write_manifest(&run_dir, "train", config, &out)?;
    Ok(out)
}

/// Frames scored by `eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSubset {
    /// The validation part of the training split.
    Val,
    /// Every annotated frame.
    All,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub checkpoint_step: u64,
    pub subset: EvalSubset,
    pub frames: Vec<String>,
    pub report: MetricsReport,
}

/// Builds the configured network and restores `checkpoint` into it.
pub fn load_network(config: &RunConfig, checkpoint: &Path) -> Result<(FusionNet, u64)> {
    let net = FusionNet::new(config.model_config(), config.seed)?;
    let manifest = load_checkpoint(&net, checkpoint)?;
    Ok((net, manifest.step))
}

pub fn cmd_eval(config: &RunConfig, checkpoint: &Path, subset: EvalSubset) -> Result<EvalOutput> {
    let (net, checkpoint_step) = load_network(config, checkpoint)?;
    let (train_set, val_set) = load_train_val(config)?;
    let samples = match subset {
        EvalSubset::Val => val_set,
        EvalSubset::All => train_set.into_iter().chain(val_set).collect(),
    };
    let prepared = prepare_all(&samples, &config.train)?;
    let report = evaluate_dataset(&net, &prepared, DEFAULT_THRESHOLDS, config.train.batch_size)?;
    let run_dir = create_run_dir(&config.output_dir, "eval")?;
    write_json(&run_dir.join(REPORT_JSON), &report)?;
    std::fs::write(run_dir.join(REPORT_TXT), report.to_string())?;
    let out = EvalOutput {
        run_dir: run_dir.clone(),
        checkpoint: checkpoint.to_path_buf(),
        checkpoint_step,
        subset,
        frames: ids(&samples),
        report,
    };
    write_manifest(&run_dir, "eval", config, &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct InferredFrame {
    pub id: String,
    pub probability: PathBuf,
    pub mask: PathBuf,
    pub overlay: PathBuf,
    pub road_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InferOutput {
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub frames: Vec<InferredFrame>,
    /// Present only when every frame has ground truth.
    pub report: Option<MetricsReport>,
}

fn to_gray(prob: &Array2<f32>) -> GrayImage {
    let (h, w) = prob.dim();
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([(prob[(y as usize, x as usize)].clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

/// Probability maps, binary masks and overlays at the network resolution.
///
/// With no `frames`, every frame of `split` is processed. Overlays colour
/// TP/FN/FP when ground truth exists and tint predicted road otherwise.
pub fn cmd_infer(config: &RunConfig, checkpoint: &Path, split: Split, frames: &[String]) -> Result<InferOutput> {
    let (net, _) = load_network(config, checkpoint)?;
    let ds = KittiDataset::new(&config.dataset_root);
    let ids = if frames.is_empty() {
        ds.list_frames(split)?
    } else {
        frames.to_vec()
    };
    let samples = ids
        .iter()
        .map(|id| Ok(ds.load_sample(split, id)?))
        .collect::<Result<Vec<Sample>>>()?;
    let size = config.target_size();
    let prepared = samples
        .iter()
        .map(|s| prepare_sample(s, size, &PyramidScale::DEFAULT, config.train.d_max, config.train.densify.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let probs = predict_prepared(&net, &prepared, config.train.batch_size)?;

    let run_dir = create_run_dir(&config.output_dir, "infer")?;
    let mut out_frames = Vec::with_capacity(samples.len());
    for ((sample, prep), prob) in samples.iter().zip(&prepared).zip(&probs) {
        let pred = prob.mapv(|p| p as f64 >= DECISION_THRESHOLD);
        let base = image::imageops::resize(&sample.image, size.width as u32, size.height as u32, FilterType::Triangle);
        let overlay = match &prep.labels {
            Some(gt) => render_overlay(&base, &pred, &gt.road, &gt.valid)?,
            None => render_overlay(&base, &pred, &pred, &Array2::from_elem(pred.raw_dim(), true))?,
        };
        let frame = InferredFrame {
            id: sample.id.clone(),
            probability: run_dir.join(format!("{}_prob.png", sample.id)),
            mask: run_dir.join(format!("{}_mask.png", sample.id)),
            overlay: run_dir.join(format!("{}_overlay.png", sample.id)),
            road_fraction: pred.iter().filter(|&&p| p).count() as f64 / pred.len().max(1) as f64,
        };
        to_gray(prob).save(&frame.probability)?;
        to_gray(&pred.mapv(|p| p as u8 as f32)).save(&frame.mask)?;
        overlay.save(&frame.overlay)?;
        out_frames.push(frame);
    }

    let report = if !prepared.is_empty() && prepared.iter().all(|p| p.labels.is_some()) {
        let preds: Vec<_> = prepared
            .iter()
            .zip(&probs)
            .filter_map(|(p, prob)| p.labels.as_ref().map(|gt| (prob.clone(), gt, p.category)))
            .collect();
        let report = evaluate_predictions(&preds, DEFAULT_THRESHOLDS)?;
        write_json(&run_dir.join(REPORT_JSON), &report)?;
        Some(report)
    } else {
        None
    };
    let out = InferOutput {
        run_dir: run_dir.clone(),
        checkpoint: checkpoint.to_path_buf(),
        frames: out_frames,
        report,
    };
    write_manifest(&run_dir, "infer", config, &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblateOutput {
    pub run_dir: PathBuf,
    pub table: PathBuf,
    pub report: AblationReport,
    /// Per-run checkpoint directories, keyed by variant label and seed.
    pub runs: BTreeMap<String, PathBuf>,
}

/// Trains and validates every `ablation_n_rfu` variant under every
/// `ablation_seeds` seed with the configured backbone and budget.
pub fn cmd_ablate(config: &RunConfig) -> Result<AblateOutput> {
    let (train_set, val_set) = load_train_val(config)?;
    let train_prepared = prepare_all(&train_set, &config.train)?;
    let val_prepared = prepare_all(&val_set, &config.train)?;
    let specs: Vec<AblationSpec> = config
        .ablation_n_rfu
        .iter()
        .map(|&n_rfu| AblationSpec {
            backbone: config.backbone,
            n_rfu,
        })
        .collect();
    let run_dir = create_run_dir(&config.output_dir, "ablate")?;
    let report = ablation_report(
        &specs,
        &config.ablation_seeds,
        &train_prepared,
        &val_prepared,
        config.rfu,
        config.precision,
        &config.train,
        Some(&run_dir),
    )?;
    let table = run_dir.join(ABLATION_TABLE);
    std::fs::write(&table, report.to_table())?;
    write_json(&run_dir.join(ABLATION_JSON), &report)?;
    let dir = &run_dir;
    let runs = specs
        .iter()
        .flat_map(|spec| {
            config.ablation_seeds.iter().map(move |seed| {
                (
                    format!("{} seed {seed}", spec.label()),
                    dir.join(format!("{}_rfu{}_seed{seed}", spec.backbone, spec.n_rfu)),
                )
            })
        })
        .collect();
    let out = AblateOutput {
        run_dir: run_dir.clone(),
        table,
        report,
        runs,
    };
    write_manifest(&run_dir, "ablate", config, &out)?;
    Ok(out)
}
