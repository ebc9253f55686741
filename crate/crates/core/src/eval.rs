//! Evaluation protocols.
//!
//! * Sparse: positives are the exact point-label pixels, negatives the
//!   buffered background area; UNKNOWN pixels are ignored entirely. The
//!   extreme class imbalance makes precision meaningless here, so the
//!   protocol reports recall and balanced accuracy.
//! * Dense: full delineated ground truth; reports tree-class IoU, F1,
//!   balanced accuracy, and both confusion-matrix forms.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BinaryMask, LabelRaster, LabelState};

pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: prediction {pred:?} vs truth {truth:?}")]
    ShapeMismatch {
        pred: (usize, usize),
        truth: (usize, usize),
    },
    #[error("dense ground truth is empty (no positive pixels)")]
    EmptyGroundTruth,
}

/// Absolute confusion counts; rows are the true class (tree first).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, truth_positive: bool, pred_positive: bool) {
        match (truth_positive, pred_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fn_ += other.fn_;
        self.fp += other.fp;
        self.tn += other.tn;
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn recall(&self) -> Option<f64> {
        let p = self.positives();
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn true_negative_rate(&self) -> Option<f64> {
        let n = self.negatives();
        (n > 0).then(|| self.tn as f64 / n as f64)
    }

    /// Mean of TPR and TNR; `None` unless both classes have support.
    pub fn balanced_accuracy(&self) -> Option<f64> {
        match (self.recall(), self.true_negative_rate()) {
            (Some(tpr), Some(tnr)) => Some(0.5 * (tpr + tnr)),
            _ => None,
        }
    }

    pub fn iou_tree(&self) -> Option<f64> {
        let denom = self.tp + self.fp + self.fn_;
        (denom > 0).then(|| self.tp as f64 / denom as f64)
    }

    pub fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 2.0 * self.tp as f64 / denom as f64)
    }

    /// Row-normalized confusion matrix `[[tpr, fnr], [fpr, tnr]]`; rows
    /// without support are emitted as NaN-free zeros.
    pub fn normalized(&self) -> [[f64; 2]; 2] {
        let pos = self.positives() as f64;
        let neg = self.negatives() as f64;
        let row_pos = if pos > 0.0 {
            [self.tp as f64 / pos, self.fn_ as f64 / pos]
        } else {
            [0.0, 0.0]
        };
        let row_neg = if neg > 0.0 {
            [self.fp as f64 / neg, self.tn as f64 / neg]
        } else {
            [0.0, 0.0]
        };
        [row_pos, row_neg]
    }

    pub fn absolute(&self) -> [[u64; 2]; 2] {
        [[self.tp, self.fn_], [self.fp, self.tn]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseMetrics {
    /// `None` when there are no positive labels (distinguishes "no labels"
    /// from "all missed").
    pub recall: Option<f64>,
    pub balanced_accuracy: Option<f64>,
    pub confusion: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMetrics {
    pub iou_tree: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub confusion_absolute: [[u64; 2]; 2],
    pub confusion_normalized: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverStats {
    pub area_m2: f64,
    pub percent_of_extent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub predicted_m2: f64,
    pub predicted_pct: f64,
    pub annotated_m2: f64,
    pub annotated_pct: f64,
}

/// Per-scenario results for the report renderer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub sparse: Option<SparseMetrics>,
    pub dense: Option<DenseMetrics>,
    pub cover: Option<CoverReport>,
}

/// Threshold probabilities and count the sparse-protocol confusion. Only
/// POS (exact point pixels) and NEG (buffered background) enter; prediction
/// values on UNKNOWN pixels can never affect the result.
pub fn sparse_confusion(
    pred: &Array2<f64>,
    truth: &LabelRaster,
    threshold: f64,
) -> Result<ConfusionCounts, EvalError> {
    if pred.dim() != truth.dim() {
        return Err(EvalError::ShapeMismatch {
            pred: pred.dim(),
            truth: truth.dim(),
        });
    }
    let (h, w) = pred.dim();
    let mut counts = ConfusionCounts::default();
    for r in 0..h {
        for c in 0..w {
            let t = match truth.get(r, c) {
                LabelState::Pos => true,
                LabelState::Neg => false,
                LabelState::Unknown => continue,
            };
            counts.add(t, pred[[r, c]] >= threshold);
        }
    }
    Ok(counts)
}

pub fn sparse_eval(
    pred: &Array2<f64>,
    truth: &LabelRaster,
    threshold: f64,
) -> Result<SparseMetrics, EvalError> {
    let confusion = sparse_confusion(pred, truth, threshold)?;
    Ok(sparse_metrics_from_confusion(confusion))
}

pub fn sparse_metrics_from_confusion(confusion: ConfusionCounts) -> SparseMetrics {
    SparseMetrics {
        recall: confusion.recall(),
        balanced_accuracy: confusion.balanced_accuracy(),
        confusion,
    }
}

pub fn dense_confusion(
    pred: &Array2<f64>,
    truth: &BinaryMask,
    threshold: f64,
) -> Result<ConfusionCounts, EvalError> {
    if pred.dim() != truth.dim() {
        return Err(EvalError::ShapeMismatch {
            pred: pred.dim(),
            truth: truth.dim(),
        });
    }
    let (h, w) = pred.dim();
    let mut counts = ConfusionCounts::default();
    for r in 0..h {
        for c in 0..w {
            counts.add(truth.get(r, c), pred[[r, c]] >= threshold);
        }
    }
    Ok(counts)
}

pub fn dense_eval(
    pred: &Array2<f64>,
    truth: &BinaryMask,
    threshold: f64,
) -> Result<DenseMetrics, EvalError> {
    let confusion = dense_confusion(pred, truth, threshold)?;
    dense_metrics_from_confusion(confusion)
}

pub fn dense_metrics_from_confusion(
    confusion: ConfusionCounts,
) -> Result<DenseMetrics, EvalError> {
    if confusion.positives() == 0 {
        return Err(EvalError::EmptyGroundTruth);
    }
    Ok(DenseMetrics {
        iou_tree: confusion.iou_tree().unwrap_or(0.0),
        f1: confusion.f1().unwrap_or(0.0),
        balanced_accuracy: confusion
            .balanced_accuracy()
            .or(confusion.recall())
            .unwrap_or(0.0),
        confusion_absolute: confusion.absolute(),
        confusion_normalized: confusion.normalized(),
    })
}

/// Positive-pixel area in m² and as a share of the evaluated extent.
pub fn tree_cover_area(pred: &BinaryMask, resolution_m_per_px: f64) -> CoverStats {
    let ones = pred.count_ones();
    let (h, w) = pred.dim();
    let area_m2 = ones as f64 * resolution_m_per_px * resolution_m_per_px;
    let percent = if h * w == 0 {
        0.0
    } else {
        100.0 * ones as f64 / (h * w) as f64
    };
    CoverStats {
        area_m2,
        percent_of_extent: percent,
    }
}
