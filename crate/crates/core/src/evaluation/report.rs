use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::kitti_io::{Category, GroundTruth};
use crate::network::FusionNet;
use crate::training::PreparedSample;

use super::confusion::{basic_metrics, confusion, ConfusionCounts};
use super::sweep::ThresholdSweep;
use super::EvalError;

/// Binarisation threshold for IoU and accuracy.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub max_f: f64,
    pub ap: f64,
    pub precision_at_maxf: f64,
    pub recall_at_maxf: f64,
    pub fpr_at_maxf: f64,
    pub fnr_at_maxf: f64,
    pub best_threshold: f64,
    /// At [`DECISION_THRESHOLD`].
    pub iou: f64,
    /// At [`DECISION_THRESHOLD`].
    pub accuracy: f64,
    pub counts_at_decision: ConfusionCounts,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_category: BTreeMap<Category, MetricsReport>,
}

pub fn report_from_sweep(sweep: &ThresholdSweep, at_decision: &ConfusionCounts) -> MetricsReport {
    let best = sweep.max_f();
    let m = basic_metrics(at_decision);
    MetricsReport {
        max_f: best.max_f,
        ap: sweep.average_precision(),
        precision_at_maxf: best.precision,
        recall_at_maxf: best.recall,
        fpr_at_maxf: best.fpr,
        fnr_at_maxf: best.fnr,
        best_threshold: best.threshold,
        iou: m.iou,
        accuracy: m.accuracy,
        counts_at_decision: *at_decision,
        per_category: BTreeMap::new(),
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: f64| format!("{:6.2}", 100.0 * v);
        writeln!(f, "category  MaxF    AP      PRE     REC     FPR     FNR     IoU     Acc")?;
        let mut row = |name: &str, r: &MetricsReport| {
            writeln!(
                f,
                "{name:<8}  {}  {}  {}  {}  {}  {}  {}  {}",
                pct(r.max_f),
                pct(r.ap),
                pct(r.precision_at_maxf),
                pct(r.recall_at_maxf),
                pct(r.fpr_at_maxf),
                pct(r.fnr_at_maxf),
                pct(r.iou),
                pct(r.accuracy)
            )
        };
        for (cat, sub) in &self.per_category {
            row(&cat.to_string(), sub)?;
        }
        row("ALL", self)
    }
}

/// Pixel-pooled threshold sweep plus decision-threshold counts, overall and
/// per category.
#[derive(Debug, Clone)]
pub struct DatasetAccumulator {
    n_thresholds: usize,
    pooled: (ThresholdSweep, ConfusionCounts),
    categories: BTreeMap<Category, (ThresholdSweep, ConfusionCounts)>,
}

impl DatasetAccumulator {
    pub fn new(n_thresholds: usize) -> Self {
        Self {
            n_thresholds,
            pooled: (ThresholdSweep::new(n_thresholds), ConfusionCounts::default()),
            categories: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, prob: &Array2<f32>, labels: &GroundTruth, category: Category) -> Result<(), EvalError> {
        let pred = prob.mapv(|p| p as f64 >= DECISION_THRESHOLD);
        let counts = confusion(&pred, &labels.road, &labels.valid)?;
        self.pooled.0.accumulate(prob, &labels.road, &labels.valid)?;
        self.pooled.1 += counts;
        if category != Category::Synth {
            let n = self.n_thresholds;
            let entry = self
                .categories
                .entry(category)
                .or_insert_with(|| (ThresholdSweep::new(n), ConfusionCounts::default()));
            entry.0.accumulate(prob, &labels.road, &labels.valid)?;
            entry.1 += counts;
        }
        Ok(())
    }

    pub fn sweep(&self) -> &ThresholdSweep {
        &self.pooled.0
    }

    pub fn report(&self) -> MetricsReport {
        let mut report = report_from_sweep(&self.pooled.0, &self.pooled.1);
        report.per_category = self
            .categories
            .iter()
            .map(|(c, (s, k))| (*c, report_from_sweep(s, k)))
            .collect();
        report
    }
}

/// Metrics over precomputed road-probability maps.
pub fn evaluate_predictions(
    predictions: &[(Array2<f32>, &GroundTruth, Category)],
    n_thresholds: usize,
) -> Result<MetricsReport, EvalError> {
    let mut acc = DatasetAccumulator::new(n_thresholds);
    for (prob, gt, cat) in predictions {
        acc.add(prob, gt, *cat)?;
    }
    Ok(acc.report())
}

/// Road-probability maps for prepared samples, in batches.
pub fn predict_prepared(net: &FusionNet, samples: &[PreparedSample], batch_size: usize) -> Result<Vec<Array2<f32>>, EvalError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let images: Vec<_> = chunk.iter().map(|s| &s.image).collect();
        let pyramids: Vec<_> = chunk.iter().map(|s| &s.pyramid).collect();
        out.extend(net.predict(&images, &pyramids)?);
    }
    Ok(out)
}

fn labels_of(s: &PreparedSample) -> Result<&GroundTruth, EvalError> {
    s.labels.as_ref().ok_or_else(|| EvalError::MissingLabels(s.id.clone()))
}

/// Runs the network over annotated samples and pools every metric.
pub fn evaluate_dataset(
    net: &FusionNet,
    samples: &[PreparedSample],
    n_thresholds: usize,
    batch_size: usize,
) -> Result<MetricsReport, EvalError> {
    let mut acc = DatasetAccumulator::new(n_thresholds);
    for chunk in samples.chunks(batch_size.max(1)) {
        let probs = predict_prepared(net, chunk, chunk.len())?;
        for (s, p) in chunk.iter().zip(&probs) {
            acc.add(p, labels_of(s)?, s.category)?;
        }
    }
    Ok(acc.report())
}

/// Pooled confusion counts at a single threshold.
pub fn confusion_at_threshold(
    net: &FusionNet,
    samples: &[PreparedSample],
    threshold: f64,
    batch_size: usize,
) -> Result<ConfusionCounts, EvalError> {
    let mut total = ConfusionCounts::default();
    for chunk in samples.chunks(batch_size.max(1)) {
        let probs = predict_prepared(net, chunk, chunk.len())?;
        for (s, p) in chunk.iter().zip(&probs) {
            let gt = labels_of(s)?;
            total += confusion(&p.mapv(|v| v as f64 >= threshold), &gt.road, &gt.valid)?;
        }
    }
    Ok(total)
}
