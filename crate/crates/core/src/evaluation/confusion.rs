use std::iter::Sum;
use std::ops::{Add, AddAssign};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{check_shapes, EvalError};

/// Pixel counts of a binary road prediction over the valid region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Ground-truth road pixels.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Counts over pixels where `valid` is set.
pub fn confusion(pred: &Array2<bool>, road: &Array2<bool>, valid: &Array2<bool>) -> Result<ConfusionCounts, EvalError> {
    check_shapes(&[pred.dim(), road.dim(), valid.dim()])?;
    let mut c = ConfusionCounts::default();
    for ((&p, &g), &v) in pred.iter().zip(road.iter()).zip(valid.iter()) {
        if !v {
            continue;
        }
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub accuracy: f64,
    pub iou: f64,
    pub fpr: f64,
    pub fnr: f64,
}

pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn basic_metrics(c: &ConfusionCounts) -> BasicMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    BasicMetrics {
        precision,
        recall,
        f_measure,
        accuracy: ratio(c.tp + c.tn, c.total()),
        iou: ratio(c.tp, c.tp + c.fp + c.fn_),
        fpr: ratio(c.fp, c.fp + c.tn),
        fnr: ratio(c.fn_, c.fn_ + c.tp),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_derived_case() {
        let m = basic_metrics(&ConfusionCounts::new(3, 1, 4, 2));
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.6).abs() < 1e-12);
        assert!((m.f_measure - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.iou - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_over_zero_is_zero() {
        let m = basic_metrics(&ConfusionCounts::new(0, 0, 5, 3));
        assert_eq!((m.precision, m.f_measure, m.iou), (0.0, 0.0, 0.0));
        let empty = basic_metrics(&ConfusionCounts::default());
        assert_eq!(empty.accuracy, 0.0);
    }

    #[test]
    fn constructed_masks_give_exact_counts() {
        // tp tp tp fp fn fn tn tn tn tn, then two invalid pixels
        let pred = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 0];
        let gt = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0, 1, 1];
        let valid = [1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0];
        let arr = |v: [i32; 12]| Array2::from_shape_vec((3, 4), v.iter().map(|&x| x == 1).collect()).unwrap();
        let c = confusion(&arr(pred), &arr(gt), &arr(valid)).unwrap();
        assert_eq!(c, ConfusionCounts::new(3, 1, 4, 2));
        assert_eq!(c.total(), 10);
    }

    #[test]
    fn perfect_and_empty() {
        let gt = Array2::from_shape_fn((4, 4), |(r, c)| (r + c) % 3 == 0);
        let all = Array2::from_elem((4, 4), true);
        let c = confusion(&gt, &gt, &all).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let m = basic_metrics(&c);
        assert_eq!([m.precision, m.recall, m.f_measure, m.accuracy, m.iou], [1.0; 5]);
        let none = Array2::from_elem((4, 4), false);
        assert_eq!(confusion(&gt, &gt, &none).unwrap(), ConfusionCounts::default());
    }

    #[test]
    fn shape_mismatch() {
        let a = Array2::from_elem((2, 2), true);
        let b = Array2::from_elem((2, 3), true);
        assert!(matches!(confusion(&a, &b, &a), Err(EvalError::ShapeMismatch(_))));
    }
}
