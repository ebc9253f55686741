//! The masked supervised loss, the per-instance objectness loss, and their
//! combination.
//!
//! The supervised term is mean binary cross entropy over the pixels selected
//! by the learning mask `m`. The objectness term computes one mean BCE per
//! instance region (against the soft objectness targets) and averages over
//! instances, which weights every instance the same regardless of size. The
//! combined loss is `L_sup + beta * L_obj`.
//!
//! Empty selections return 0 with a flag instead of NaN: sparse patches
//! legitimately contain no labels.

use ndarray::Array2;
use thiserror::Error;

use crate::grid::{BinaryMask, LabelRaster, LabelState};
use crate::maskgen::LearningMasks;
use crate::util::NeumaierSum;

/// Probability clamp for bounded BCE.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("non-finite prediction at ({row}, {col}): {value}")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("mask selects an UNKNOWN pixel at ({row}, {col})")]
    UnknownSelected { row: usize, col: usize },
    #[error("beta = {beta} requires objectness inputs (o, regions, m_r)")]
    MissingObjectness { beta: f64 },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

/// A loss value plus the size of the selection it averaged over.
/// `count == 0` flags an empty selection (value is 0, no gradient).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub count: usize,
}

impl LossValue {
    pub const EMPTY: LossValue = LossValue { value: 0.0, count: 0 };

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// BCE of clamped probability `p` against target `t` (which may be soft).
fn bce(p: f64, t: f64) -> f64 {
    let p = clamp_prob(p);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// Derivative of `bce` w.r.t. the (unclamped) probability. Zero outside the
/// clamp interval, where the clamped loss is locally constant.
fn bce_grad_prob(p: f64, t: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    (p - t) / (p * (1.0 - p))
}

fn check_shapes(pred: &Array2<f64>, other: (usize, usize)) -> Result<(), LossError> {
    if pred.dim() != other {
        return Err(LossError::ShapeMismatch {
            expected: pred.dim(),
            got: other,
        });
    }
    Ok(())
}

/// Mean BCE over the pixels selected by `m`. POS maps to target 1, NEG to 0;
/// a selected UNKNOWN pixel is a contract violation.
pub fn masked_bce(
    pred: &Array2<f64>,
    labels: &LabelRaster,
    m: &BinaryMask,
) -> Result<LossValue, LossError> {
    check_shapes(pred, labels.dim())?;
    check_shapes(pred, m.dim())?;
    let (h, w) = pred.dim();
    let mut acc = NeumaierSum::new();
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            if !m.get(r, c) {
                continue;
            }
            let p = pred[[r, c]];
            if !p.is_finite() {
                return Err(LossError::NonFinite { row: r, col: c, value: p });
            }
            let t = match labels.get(r, c) {
                LabelState::Pos => 1.0,
                LabelState::Neg => 0.0,
                LabelState::Unknown => {
                    return Err(LossError::UnknownSelected { row: r, col: c })
                }
            };
            acc.add(bce(p, t));
            count += 1;
        }
    }
    if count == 0 {
        log::debug!("masked_bce: empty selection, returning 0");
        return Ok(LossValue::EMPTY);
    }
    Ok(LossValue {
        value: acc.total() / count as f64,
        count,
    })
}

/// Per-instance objectness loss: for each instance id, mean BCE between the
/// prediction and the objectness prior over the instance's pixels inside
/// `m_r`; the result is the mean over instances with at least one selected
/// pixel.
pub fn objectness_loss(
    pred: &Array2<f64>,
    o: &Array2<f64>,
    regions: &Array2<u32>,
    m_r: &BinaryMask,
) -> Result<LossValue, LossError> {
    check_shapes(pred, o.dim())?;
    check_shapes(pred, regions.dim())?;
    check_shapes(pred, m_r.dim())?;
    let max_id = regions.iter().copied().max().unwrap_or(0) as usize;
    if max_id == 0 {
        log::debug!("objectness_loss: no instances, returning 0");
        return Ok(LossValue::EMPTY);
    }
    let mut sums = vec![NeumaierSum::new(); max_id + 1];
    let mut counts = vec![0usize; max_id + 1];
    let (h, w) = pred.dim();
    for r in 0..h {
        for c in 0..w {
            let id = regions[[r, c]] as usize;
            if id == 0 || !m_r.get(r, c) {
                continue;
            }
            let p = pred[[r, c]];
            if !p.is_finite() {
                return Err(LossError::NonFinite { row: r, col: c, value: p });
            }
            sums[id].add(bce(p, o[[r, c]]));
            counts[id] += 1;
        }
    }
    let mut outer = NeumaierSum::new();
    let mut instances = 0usize;
    for id in 1..=max_id {
        if counts[id] > 0 {
            outer.add(sums[id].total() / counts[id] as f64);
            instances += 1;
        }
    }
    if instances == 0 {
        log::debug!("objectness_loss: all instances empty under m_r, returning 0");
        return Ok(LossValue::EMPTY);
    }
    Ok(LossValue {
        value: outer.total() / instances as f64,
        count: instances,
    })
}

/// All inputs for the combined loss on one patch.
pub struct LossInputs<'a> {
    pub pred: &'a Array2<f64>,
    pub labels: &'a LabelRaster,
    pub masks: &'a LearningMasks,
    pub o: Option<&'a Array2<f64>>,
    pub regions: Option<&'a Array2<u32>>,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub supervised: LossValue,
    pub objectness: LossValue,
    pub beta: f64,
}

/// `L = L_sup(f(x) ⊙ m, y ⊙ m) + beta * L_obj(f(x) ⊙ m_r, o ⊙ m_r, r ⊙ m_r)`.
pub fn combined_loss(inputs: &LossInputs) -> Result<LossBreakdown, LossError> {
    let supervised = masked_bce(inputs.pred, inputs.labels, &inputs.masks.m)?;
    let objectness = if inputs.beta != 0.0 {
        let (o, regions, m_r) = objectness_parts(inputs)?;
        objectness_loss(inputs.pred, o, regions, m_r)?
    } else {
        LossValue::EMPTY
    };
    Ok(LossBreakdown {
        total: supervised.value + inputs.beta * objectness.value,
        supervised,
        objectness,
        beta: inputs.beta,
    })
}

fn objectness_parts<'a>(
    inputs: &'a LossInputs,
) -> Result<(&'a Array2<f64>, &'a Array2<u32>, &'a BinaryMask), LossError> {
    match (inputs.o, inputs.regions, inputs.masks.m_r.as_ref()) {
        (Some(o), Some(r), Some(m_r)) => Ok((o, r, m_r)),
        _ => Err(LossError::MissingObjectness { beta: inputs.beta }),
    }
}

/// Analytic gradient of [`combined_loss`] w.r.t. the probability grid.
pub fn combined_loss_grad_pred(inputs: &LossInputs) -> Result<Array2<f64>, LossError> {
    let mut grad = Array2::<f64>::zeros(inputs.pred.dim());
    accumulate_grad(inputs, &mut grad, GradSpace::Probability)?;
    Ok(grad)
}

/// Gradient of the combined loss w.r.t. pre-sigmoid logits, assuming
/// `pred = sigmoid(logit)`. This is the numerically stable form the trainer
/// feeds back through the network; the clamp is ignored here because the
/// fused sigmoid-BCE derivative `p - t` is exact for all finite logits.
pub fn combined_loss_grad_logit(inputs: &LossInputs) -> Result<Array2<f64>, LossError> {
    let mut grad = Array2::<f64>::zeros(inputs.pred.dim());
    accumulate_grad(inputs, &mut grad, GradSpace::Logit)?;
    Ok(grad)
}

#[derive(Clone, Copy, PartialEq)]
enum GradSpace {
    Probability,
    Logit,
}

fn accumulate_grad(
    inputs: &LossInputs,
    grad: &mut Array2<f64>,
    space: GradSpace,
) -> Result<(), LossError> {
    let (h, w) = inputs.pred.dim();
    let pointwise = |p: f64, t: f64| match space {
        GradSpace::Probability => bce_grad_prob(p, t),
        GradSpace::Logit => p - t,
    };

    // Supervised term.
    let sup = masked_bce(inputs.pred, inputs.labels, &inputs.masks.m)?;
    if !sup.is_empty() {
        let scale = 1.0 / sup.count as f64;
        for r in 0..h {
            for c in 0..w {
                if !inputs.masks.m.get(r, c) {
                    continue;
                }
                let t = match inputs.labels.get(r, c) {
                    LabelState::Pos => 1.0,
                    LabelState::Neg => 0.0,
                    LabelState::Unknown => unreachable!("checked by masked_bce"),
                };
                grad[[r, c]] += scale * pointwise(inputs.pred[[r, c]], t);
            }
        }
    }

    // Objectness term.
    if inputs.beta != 0.0 {
        let (o, regions, m_r) = objectness_parts(inputs)?;
        let max_id = regions.iter().copied().max().unwrap_or(0) as usize;
        if max_id > 0 {
            let mut counts = vec![0usize; max_id + 1];
            for r in 0..h {
                for c in 0..w {
                    let id = regions[[r, c]] as usize;
                    if id != 0 && m_r.get(r, c) {
                        counts[id] += 1;
                    }
                }
            }
            let instances = counts[1..].iter().filter(|&&n| n > 0).count();
            if instances > 0 {
                let outer = inputs.beta / instances as f64;
                for r in 0..h {
                    for c in 0..w {
                        let id = regions[[r, c]] as usize;
                        if id == 0 || !m_r.get(r, c) {
                            continue;
                        }
                        let inner = 1.0 / counts[id] as f64;
                        grad[[r, c]] +=
                            outer * inner * pointwise(inputs.pred[[r, c]], o[[r, c]]);
                    }
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests, including the scalar-loop oracle and finite-difference checks.
// ---------------------------------------------------------------------------
