use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::network::{Backbone, FusionNet, ModelConfig, Precision, RfuConfig};
use crate::training::{train_prepared, PreparedSample, TrainConfig, TrainError};

use super::report::evaluate_dataset;
use super::sweep::DEFAULT_THRESHOLDS;
use super::EvalError;

/// One network variant of the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub backbone: Backbone,
    pub n_rfu: usize,
}

impl AblationSpec {
    pub fn label(&self) -> String {
        let net = match self.backbone {
            Backbone::Res50 => "ResNet-50",
            Backbone::Res101 => "ResNet-101",
            Backbone::Toy => "Toy",
        };
        let plural = if self.n_rfu == 1 { "" } else { "s" };
        format!("{net} + {} RFU{plural}", self.n_rfu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub seed: u64,
    pub steps: u64,
    pub final_train_loss: Option<f64>,
    pub iou: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub spec: AblationSpec,
    pub runs: Vec<AblationRun>,
    pub mean_iou: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    pub rfu: RfuConfig,
    pub train: TrainConfig,
    pub train_samples: usize,
    pub val_samples: usize,
}

impl AblationReport {
    pub fn row(&self, backbone: Backbone, n_rfu: usize) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.spec.backbone == backbone && r.spec.n_rfu == n_rfu)
    }

    /// Markdown table with one row per variant, means over seeds in percent.
    pub fn to_table(&self) -> String {
        let mut s = String::from("| Network | IoU (%) | Accuracy (%) | Seeds |\n|---|---|---|---|\n");
        for row in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {:.2} | {:.2} | {} |",
                row.spec.label(),
                100.0 * row.mean_iou,
                100.0 * row.mean_accuracy,
                row.runs.len()
            );
        }
        s
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Trains every variant under every seed with the same data and budget,
/// then scores IoU and accuracy (threshold 0.5) on `val_set`. With
/// `out_dir`, each run's checkpoints and log go to `<variant>_seed<k>/`.
pub fn ablation_report(
    specs: &[AblationSpec],
    seeds: &[u64],
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    rfu: RfuConfig,
    precision: Precision,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<AblationReport, EvalError> {
    if specs.is_empty() || seeds.is_empty() {
        return Err(EvalError::EmptyAblation);
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let model = ModelConfig {
                backbone: spec.backbone,
                n_rfu: spec.n_rfu,
                rfu,
                precision,
            };
            let net = FusionNet::new(model, seed)?;
            let cfg = TrainConfig {
                seed,
                ..config.clone()
            };
            let run_dir = match out_dir {
                Some(dir) => {
                    let d = dir.join(format!("{}_rfu{}_seed{seed}", spec.backbone, spec.n_rfu));
                    std::fs::create_dir_all(&d).map_err(|e| TrainError::Io {
                        path: d.display().to_string(),
                        source: e,
                    })?;
                    Some(d)
                }
                None => None,
            };
            let outcome = train_prepared(&net, train_set, &[], &cfg, run_dir.as_deref())?;
            let report = evaluate_dataset(&net, val_set, DEFAULT_THRESHOLDS, cfg.batch_size)?;
            runs.push(AblationRun {
                seed,
                steps: outcome.steps,
                final_train_loss: outcome.train_losses().last().copied(),
                iou: report.iou,
                accuracy: report.accuracy,
            });
        }
        rows.push(AblationRow {
            spec: *spec,
            mean_iou: mean(runs.iter().map(|r| r.iou)),
            mean_accuracy: mean(runs.iter().map(|r| r.accuracy)),
            runs,
        });
    }
    Ok(AblationReport {
        rows,
        rfu,
        train: config.clone(),
        train_samples: train_set.len(),
        val_samples: val_set.len(),
    })
}
