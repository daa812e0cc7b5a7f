//! Small-target focus loss: ROI-restricted soft Dice combined with a focal
//! Tversky term, with an analytic gradient.
//!
//! All sums run only over the region of interest `r`:
//!
//! ```text
//! TP = sum p*y      FP = sum p*(1-y)      FN = sum (1-p)*y        (over r)
//! L_dice = 1 - (2*TP + eps) / (sum p + sum y + eps)
//! L_ft   = (1 - (TP + eps) / (TP + alpha*FP + beta*FN + eps))^gamma
//! L_stf  = lambda1 * L_dice + lambda2 * L_ft
//! ```
//!
//! The gradient with respect to each voxel probability is zero outside the
//! ROI by construction. An empty ROI yields loss 0 and a zero gradient and
//! logs a warning. Accumulation is sequential in linear-index order, so
//! results are bit-deterministic.

use serde::{Deserialize, Serialize};

use crate::grid::{Mask, ProbVolume};
use crate::{Error, Result};

/// Loss hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossParams {
    /// Weight of the Dice term.
    pub lambda1: f64,
    /// Weight of the focal Tversky term.
    pub lambda2: f64,
    /// False-positive weight inside the Tversky index.
    pub alpha: f64,
    /// False-negative weight inside the Tversky index.
    pub beta: f64,
    /// Focal exponent applied to (1 - Tversky index).
    pub gamma: f64,
    /// Stabilizer added to numerators and denominators.
    pub epsilon: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            lambda1: 0.7,
            lambda2: 0.3,
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.75,
            epsilon: 1e-5,
        }
    }
}

impl LossParams {
    /// All weights finite and non-negative, gamma > 0, epsilon > 0.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidLossParams {
                    reason: format!("{name} must be finite and non-negative, got {v}"),
                });
            }
        }
        if self.gamma == 0.0 {
            return Err(Error::InvalidLossParams {
                reason: "gamma must be positive".into(),
            });
        }
        if self.epsilon == 0.0 {
            return Err(Error::InvalidLossParams {
                reason: "epsilon must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Soft confusion sums over the ROI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftConfusion {
    pub true_pos: f64,
    pub false_pos: f64,
    pub false_neg: f64,
}

fn check_grids(pred: &ProbVolume, gt: &Mask, roi: &Mask) -> Result<()> {
    pred.grid.check_same(&gt.grid)?;
    pred.grid.check_same(&roi.grid)
}

/// Soft confusion terms of a probability field against a binary ground
/// truth, restricted to the ROI.
pub fn soft_confusion(pred: &ProbVolume, gt: &Mask, roi: &Mask) -> Result<SoftConfusion> {
    check_grids(pred, gt, roi)?;
    let mut c = SoftConfusion {
        true_pos: 0.0,
        false_pos: 0.0,
        false_neg: 0.0,
    };
    let p = pred.data();
    let y = gt.data();
    for (i, &r) in roi.data().iter().enumerate() {
        if r == 0 {
            continue;
        }
        let pv = p[i] as f64;
        if y[i] != 0 {
            c.true_pos += pv;
            c.false_neg += 1.0 - pv;
        } else {
            c.false_pos += pv;
        }
    }
    Ok(c)
}

/// Indexed engine shared by the public entry points and the training loop,
/// which holds f64 probabilities. `roi_indices` must be ascending linear
/// indices; `grad` (when requested) is aligned with `roi_indices`.
pub(crate) fn stf_indexed(
    p_at: impl Fn(usize) -> f64,
    gt: &[u8],
    roi_indices: &[usize],
    params: &LossParams,
    want_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    if roi_indices.is_empty() {
        log::warn!("stf: empty ROI; loss and gradient are zero");
        return Ok((0.0, Vec::new()));
    }

    let eps = params.epsilon;
    let mut tp = 0.0f64;
    let mut fp = 0.0f64;
    let mut fney = 0.0f64;
    for &v in roi_indices {
        let pv = p_at(v);
        if gt[v] != 0 {
            tp += pv;
            fney += 1.0 - pv;
        } else {
            fp += pv;
        }
    }

    // Dice over the ROI: denominator sum(p)+sum(y) equals 2TP+FP+FN.
    let dice_den = 2.0 * tp + fp + fney + eps;
    let dice_num = 2.0 * tp + eps;
    let loss_dice = 1.0 - dice_num / dice_den;

    // Focal Tversky over the ROI.
    let tv_num = tp + eps;
    let tv_den = tp + params.alpha * fp + params.beta * fney + eps;
    let tv_index = tv_num / tv_den;
    let base = (1.0 - tv_index).max(0.0);
    let loss_ft = base.powf(params.gamma);

    let loss = params.lambda1 * loss_dice + params.lambda2 * loss_ft;

    if !want_grad {
        return Ok((loss, Vec::new()));
    }

    // d(base^gamma)/d(base), defined as 0 at base == 0 when gamma < 1.
    let dft_dbase = if base > 0.0 {
        params.gamma * base.powf(params.gamma - 1.0)
    } else {
        0.0
    };

    let mut grad = Vec::with_capacity(roi_indices.len());
    for &v in roi_indices {
        let yv = f64::from(gt[v] != 0);
        // Dice: d/dp [1 - num/den] with d(num) = 2y, d(den) = 1.
        let g_dice = -(2.0 * yv * dice_den - dice_num) / (dice_den * dice_den);
        // Tversky index quotient rule: d(num) = y, d(den) = y + alpha(1-y) - beta*y.
        let dden = yv + params.alpha * (1.0 - yv) - params.beta * yv;
        let dindex = (yv * tv_den - tv_num * dden) / (tv_den * tv_den);
        let g_ft = -dft_dbase * dindex;
        grad.push(params.lambda1 * g_dice + params.lambda2 * g_ft);
    }
    Ok((loss, grad))
}

/// ROI-restricted soft Dice loss.
pub fn dice_roi(pred: &ProbVolume, gt: &Mask, roi: &Mask, eps: f64) -> Result<f64> {
    check_grids(pred, gt, roi)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidLossParams {
            reason: format!("epsilon must be positive, got {eps}"),
        });
    }
    let c = soft_confusion(pred, gt, roi)?;
    if roi.foreground_count() == 0 {
        log::warn!("dice_roi: empty ROI; loss is zero");
        return Ok(0.0);
    }
    let num = 2.0 * c.true_pos + eps;
    let den = 2.0 * c.true_pos + c.false_pos + c.false_neg + eps;
    Ok(1.0 - num / den)
}

/// ROI-restricted focal Tversky loss.
pub fn focal_tversky_roi(pred: &ProbVolume, gt: &Mask, roi: &Mask, params: &LossParams) -> Result<f64> {
    check_grids(pred, gt, roi)?;
    params.validate()?;
    let c = soft_confusion(pred, gt, roi)?;
    if roi.foreground_count() == 0 {
        log::warn!("focal_tversky_roi: empty ROI; loss is zero");
        return Ok(0.0);
    }
    let num = c.true_pos + params.epsilon;
    let den = c.true_pos + params.alpha * c.false_pos + params.beta * c.false_neg + params.epsilon;
    let base = (1.0 - num / den).max(0.0);
    Ok(base.powf(params.gamma))
}

/// Combined small-target focus loss.
pub fn stf(pred: &ProbVolume, gt: &Mask, roi: &Mask, params: &LossParams) -> Result<f64> {
    check_grids(pred, gt, roi)?;
    let roi_indices = roi.foreground_indices();
    let p = pred.data();
    let (loss, _) = stf_indexed(|v| p[v] as f64, gt.data(), &roi_indices, params, false)?;
    Ok(loss)
}

/// Combined loss and its dense per-voxel gradient (zero outside the ROI).
pub fn stf_grad(
    pred: &ProbVolume,
    gt: &Mask,
    roi: &Mask,
    params: &LossParams,
) -> Result<(f64, Vec<f64>)> {
    check_grids(pred, gt, roi)?;
    let roi_indices = roi.foreground_indices();
    let p = pred.data();
    let (loss, sparse) = stf_indexed(|v| p[v] as f64, gt.data(), &roi_indices, params, true)?;
    let mut dense = vec![0.0; p.len()];
    for (slot, &v) in roi_indices.iter().enumerate() {
        dense[v] = sparse[slot];
    }
    Ok((loss, dense))
}
