use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::confusion::{basic_metrics, ratio, ConfusionCounts};
use super::{check_shapes, EvalError};

pub const DEFAULT_THRESHOLDS: usize = 255;
/// Recall levels `0, 0.025, …, 1` of interpolated average precision.
pub const AP_RECALL_LEVELS: usize = 41;

/// `n` equally spaced thresholds `k / (n + 1)`, `k = 1..=n`.
pub fn sweep_thresholds(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

/// Histogram of valid pixels by how many thresholds they reach, from which
/// the confusion counts at every threshold follow by suffix sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    thresholds: Vec<f64>,
    road: Vec<u64>,
    background: Vec<u64>,
}

impl ThresholdSweep {
    pub fn new(n_thresholds: usize) -> Self {
        Self::with_thresholds(sweep_thresholds(n_thresholds))
    }

    /// `thresholds` must be ascending.
    pub fn with_thresholds(thresholds: Vec<f64>) -> Self {
        let bins = thresholds.len() + 1;
        Self {
            thresholds,
            road: vec![0; bins],
            background: vec![0; bins],
        }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn accumulate(&mut self, prob: &Array2<f32>, road: &Array2<bool>, valid: &Array2<bool>) -> Result<(), EvalError> {
        check_shapes(&[prob.dim(), road.dim(), valid.dim()])?;
        for ((&p, &g), &v) in prob.iter().zip(road.iter()).zip(valid.iter()) {
            if !v {
                continue;
            }
            let p = p as f64;
            let reached = self.thresholds.partition_point(|&t| t <= p);
            if g {
                self.road[reached] += 1;
            } else {
                self.background[reached] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ThresholdSweep) -> Result<(), EvalError> {
        if self.thresholds != other.thresholds {
            return Err(EvalError::ShapeMismatch("sweeps use different thresholds".into()));
        }
        for (a, b) in self.road.iter_mut().zip(&other.road) {
            *a += b;
        }
        for (a, b) in self.background.iter_mut().zip(&other.background) {
            *a += b;
        }
        Ok(())
    }

    /// Confusion counts at every threshold, ascending.
    pub fn counts(&self) -> Vec<ConfusionCounts> {
        let road_total: u64 = self.road.iter().sum();
        let bg_total: u64 = self.background.iter().sum();
        let n = self.thresholds.len();
        let mut out = vec![ConfusionCounts::default(); n];
        let (mut tp, mut fp) = (0u64, 0u64);
        for i in (0..n).rev() {
            // pixels reaching more than i thresholds are positive at threshold i
            tp += self.road[i + 1];
            fp += self.background[i + 1];
            out[i] = ConfusionCounts::new(tp, fp, bg_total - fp, road_total - tp);
        }
        out
    }

    /// Counts if every valid pixel were predicted road.
    pub fn predict_all(&self) -> ConfusionCounts {
        ConfusionCounts::new(self.road.iter().sum(), self.background.iter().sum(), 0, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxFResult {
    pub max_f: f64,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub fnr: f64,
}

impl ThresholdSweep {
    /// Best F over the sweep; ties go to the lower threshold.
    pub fn max_f(&self) -> MaxFResult {
        let counts = self.counts();
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in counts.iter().enumerate() {
            let f = basic_metrics(c).f_measure;
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((i, f));
            }
        }
        let Some((i, _)) = best else {
            return MaxFResult {
                max_f: 0.0,
                threshold: 0.0,
                precision: 0.0,
                recall: 0.0,
                fpr: 0.0,
                fnr: 0.0,
            };
        };
        let m = basic_metrics(&counts[i]);
        MaxFResult {
            max_f: m.f_measure,
            threshold: self.thresholds[i],
            precision: m.precision,
            recall: m.recall,
            fpr: m.fpr,
            fnr: m.fnr,
        }
    }

    /// Mean over 41 recall levels of the best precision at recall ≥ level.
    /// The operating points are the swept thresholds plus the trivial
    /// predict-everything point.
    pub fn average_precision(&self) -> f64 {
        let mut points: Vec<(f64, f64)> = self
            .counts()
            .iter()
            .map(|c| (ratio(c.tp, c.tp + c.fn_), ratio(c.tp, c.tp + c.fp)))
            .collect();
        let all = self.predict_all();
        points.push((ratio(all.tp, all.tp + all.fn_), ratio(all.tp, all.tp + all.fp)));
        let mut sum = 0.0;
        for k in 0..AP_RECALL_LEVELS {
            let level = k as f64 / (AP_RECALL_LEVELS - 1) as f64;
            let best = points
                .iter()
                .filter(|(r, _)| *r >= level)
                .map(|&(_, p)| p)
                .fold(0.0, f64::max);
            sum += best;
        }
        sum / AP_RECALL_LEVELS as f64
    }
}

pub fn max_f(prob: &Array2<f32>, road: &Array2<bool>, valid: &Array2<bool>, n_thresholds: usize) -> Result<MaxFResult, EvalError> {
    let mut sweep = ThresholdSweep::new(n_thresholds);
    sweep.accumulate(prob, road, valid)?;
    Ok(sweep.max_f())
}

pub fn average_precision(
    prob: &Array2<f32>,
    road: &Array2<bool>,
    valid: &Array2<bool>,
    n_thresholds: usize,
) -> Result<f64, EvalError> {
    let mut sweep = ThresholdSweep::new(n_thresholds);
    sweep.accumulate(prob, road, valid)?;
    Ok(sweep.average_precision())
}
