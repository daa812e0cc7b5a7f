//! Task-conditioned logistic voxel classifier trained with the
//! ROI-restricted loss under the simulated click-refinement schedule.
//!
//! Each voxel is described by seven features that jointly encode the image,
//! the dose, and every prompt type: normalized intensity, dose relative to
//! its positive maximum, an inside-box indicator, an exponential decay of
//! the distance to the box, decays of the distances to the nearest positive
//! and negative click, and a constant bias. A prediction is the logistic of
//! (shared weights + per-task weights) . features, so the text prompt picks
//! the task row while box and clicks act through their channels.
//!
//! Training is full-batch gradient descent: per case and epoch the box and
//! ROI are fixed, round 0 predicts without clicks, and each refinement round
//! samples clicks from the current error regions and re-featurizes; the loss
//! and its analytic gradient are averaged over rounds, then over cases, with
//! one parameter update per epoch. Everything is driven by one seeded
//! generator, so training is bit-reproducible. Clicks exist only during
//! training; inference runs with both click channels at zero.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clicksim::{error_regions, sample_clicks, Click, ClickPolarity, ClickSchedule};
use crate::doseprompt::{dose_guided_box, max_positive_dose, roi_mask, DosePromptConfig};
use crate::grid::{BoxPrompt3D, Grid, Mask, ProbVolume, Volume};
use crate::io;
use crate::morph::bounding_box;
use crate::resample::znorm_nonzero;
use crate::rng::SeededRng;
use crate::stf::{stf_indexed, LossParams};
use crate::textprompt::{featurize_text, Task, TaskEmbedding, TextPromptRecord};
use crate::dataset::Case;
use crate::{Error, Result};

/// Number of per-voxel feature channels.
pub const FEATURE_DIM: usize = 7;

/// Version tag stored in model files; bumped when the channel definition
/// changes so stale models are rejected at load time.
pub const FEATURE_SPEC_VERSION: u32 = 1;

/// Feature channel indices.
pub const CH_INTENSITY: usize = 0;
pub const CH_DOSE: usize = 1;
pub const CH_IN_BOX: usize = 2;
pub const CH_BOX_DECAY: usize = 3;
pub const CH_POS_CLICK: usize = 4;
pub const CH_NEG_CLICK: usize = 5;
pub const CH_BIAS: usize = 6;

/// Initial bias weight. On every supervised voxel the inside-box, box-decay,
/// and bias channels are identically 1 (the ROI lies inside its own box), so
/// ROI-restricted training cannot use them to push far-field background
/// down; the bias therefore starts at a strongly negative background-prior
/// logit instead of zero, and training adjusts it from there.
pub const BACKGROUND_LOGIT_INIT: f64 = -4.0;

/// Binarization threshold used when diffing a training-round prediction
/// against ground truth to find click candidates.
const TRAIN_ERROR_THRESHOLD: f64 = 0.5;

/// Per-voxel feature vectors on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub grid: Grid,
    data: Vec<[f64; FEATURE_DIM]>,
}

impl FeatureGrid {
    pub fn data(&self) -> &[[f64; FEATURE_DIM]] {
        &self.data
    }

    pub fn at(&self, linear: usize) -> &[f64; FEATURE_DIM] {
        &self.data[linear]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-axis squared physical offsets from a point, so a voxel's squared
/// distance is (x[i] + y[j]) + z[k] with a fixed association.
fn axis_sq(grid: &Grid, p: [usize; 3]) -> [Vec<f64>; 3] {
    let mk = |axis: usize| -> Vec<f64> {
        (0..grid.dims[axis])
            .map(|i| {
                let d = (i as f64 - p[axis] as f64) * grid.spacing_mm[axis];
                d * d
            })
            .collect()
    };
    [mk(0), mk(1), mk(2)]
}

/// Fold one click position into the per-voxel minimum squared distances.
fn min_sq_update(grid: &Grid, pos: [usize; 3], d2: &mut [f64]) {
    let [xs, ys, zs] = axis_sq(grid, pos);
    let mut v = 0usize;
    for zk in &zs {
        for yj in &ys {
            for xi in &xs {
                let d = (xi + yj) + zk;
                if d < d2[v] {
                    d2[v] = d;
                }
                v += 1;
            }
        }
    }
}

/// Decay of a squared distance: exp(-sqrt(d2)/s), 0 when no source exists.
fn decay_from_sq(d2: f64, s: f64) -> f64 {
    if d2.is_finite() {
        (-(d2.sqrt()) / s).exp()
    } else {
        0.0
    }
}

/// Box-decay field and inside-box indicator for every voxel.
fn box_decay_field(grid: &Grid, bx: &BoxPrompt3D, s: f64) -> (Vec<f64>, Vec<u8>) {
    let n = grid.voxel_count();
    let mut decay = vec![0.0f64; n];
    let mut inside = vec![0u8; n];
    for v in 0..n {
        let c = grid.coords(v);
        decay[v] = (-bx.distance_mm(c, grid.spacing_mm) / s).exp();
        inside[v] = u8::from(bx.contains(c));
    }
    (decay, inside)
}

fn check_decay_scale(s: f64) -> Result<()> {
    if s.is_finite() && s > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            name: "decay_scale_mm",
            reason: format!("must be positive and finite, got {s}"),
        })
    }
}

/// Build the full per-voxel feature grid for one case and prompt state.
///
/// Intensity is z-scored over nonzero voxels, dose divided by its positive
/// maximum, and click channels hold exp(-d/s) to the nearest click of each
/// polarity (zero when that polarity has no clicks).
pub fn featurize_case(
    image: &Volume,
    dose: &Volume,
    bx: &BoxPrompt3D,
    clicks: &[Click],
    s: f64,
) -> Result<FeatureGrid> {
    image.grid.check_same(&dose.grid)?;
    check_decay_scale(s)?;
    let grid = image.grid.clone();
    if !grid.contains([bx.corner_max[0] as isize, bx.corner_max[1] as isize, bx.corner_max[2] as isize]) {
        return Err(Error::InvalidArgument {
            name: "box",
            reason: format!("corner_max {:?} lies outside dims {:?}", bx.corner_max, grid.dims),
        });
    }
    let znorm = znorm_nonzero(image)?;
    let dmax = max_positive_dose(dose)?;
    let (bdecay, inside) = box_decay_field(&grid, bx, s);
    let n = grid.voxel_count();
    let mut d2_pos = vec![f64::INFINITY; n];
    let mut d2_neg = vec![f64::INFINITY; n];
    for c in clicks {
        if !grid.contains([c.pos[0] as isize, c.pos[1] as isize, c.pos[2] as isize]) {
            return Err(Error::InvalidArgument {
                name: "clicks",
                reason: format!("click at {:?} lies outside dims {:?}", c.pos, grid.dims),
            });
        }
        match c.polarity {
            ClickPolarity::Pos => min_sq_update(&grid, c.pos, &mut d2_pos),
            ClickPolarity::Neg => min_sq_update(&grid, c.pos, &mut d2_neg),
        }
    }
    let mut data = Vec::with_capacity(n);
    for v in 0..n {
        data.push([
            f64::from(znorm.data()[v]),
            f64::from(dose.data()[v]) / dmax,
            f64::from(inside[v]),
            bdecay[v],
            decay_from_sq(d2_pos[v], s),
            decay_from_sq(d2_neg[v], s),
            1.0,
        ]);
    }
    Ok(FeatureGrid { grid, data })
}

/// Trained model: one shared weight row plus one row per task, combined
/// additively before the logistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinerModel {
    pub shared_weights: Vec<f64>,
    pub task_weights: BTreeMap<Task, Vec<f64>>,
    pub feature_spec_version: u32,
    /// Decay scale (mm) the model was trained with; inference features must
    /// use the same scale.
    pub decay_scale_mm: f64,
}

impl RefinerModel {
    /// Fresh model: all weights zero except the bias, which starts at
    /// [`BACKGROUND_LOGIT_INIT`].
    pub fn initial(decay_scale_mm: f64) -> Self {
        let mut shared = vec![0.0; FEATURE_DIM];
        shared[CH_BIAS] = BACKGROUND_LOGIT_INIT;
        let task_weights = Task::ALL
            .iter()
            .map(|&t| (t, vec![0.0; FEATURE_DIM]))
            .collect();
        RefinerModel {
            shared_weights: shared,
            task_weights,
            feature_spec_version: FEATURE_SPEC_VERSION,
            decay_scale_mm,
        }
    }

    /// All-zero model (probability 0.5 everywhere); useful as a null
    /// reference.
    pub fn zeros(decay_scale_mm: f64) -> Self {
        let mut m = Self::initial(decay_scale_mm);
        m.shared_weights[CH_BIAS] = 0.0;
        m
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Err(Error::InvalidModel { reason });
        if self.feature_spec_version != FEATURE_SPEC_VERSION {
            return invalid(format!(
                "feature spec version {} unsupported (expected {FEATURE_SPEC_VERSION})",
                self.feature_spec_version
            ));
        }
        if self.shared_weights.len() != FEATURE_DIM {
            return invalid(format!(
                "shared_weights has length {}, expected {FEATURE_DIM}",
                self.shared_weights.len()
            ));
        }
        if !self.shared_weights.iter().all(|w| w.is_finite()) {
            return invalid("shared_weights contains a non-finite value".into());
        }
        for t in Task::ALL {
            match self.task_weights.get(&t) {
                None => return invalid(format!("missing task_weights for {t}")),
                Some(row) if row.len() != FEATURE_DIM => {
                    return invalid(format!(
                        "task_weights[{t}] has length {}, expected {FEATURE_DIM}",
                        row.len()
                    ))
                }
                Some(row) if !row.iter().all(|w| w.is_finite()) => {
                    return invalid(format!("task_weights[{t}] contains a non-finite value"))
                }
                Some(_) => {}
            }
        }
        if !(self.decay_scale_mm.is_finite() && self.decay_scale_mm > 0.0) {
            return invalid(format!(
                "decay_scale_mm must be positive and finite, got {}",
                self.decay_scale_mm
            ));
        }
        Ok(())
    }

    /// Shared + task row for the given task.
    pub fn effective_weights(&self, task: Task) -> [f64; FEATURE_DIM] {
        let row = &self.task_weights[&task];
        let mut w = [0.0; FEATURE_DIM];
        for c in 0..FEATURE_DIM {
            w[c] = self.shared_weights[c] + row[c];
        }
        w
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: RefinerModel = io::read_json(path)?;
        model.validate()?;
        Ok(model)
    }
}

/// Training hyperparameters; defaults give the reference configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub schedule: ClickSchedule,
    pub loss: LossParams,
    pub prompt: DosePromptConfig,
    pub seed: u64,
    /// Probability cut used by [`infer`] (strictly-above).
    pub threshold: f64,
    /// Click/box decay scale in mm, copied into the trained model.
    pub decay_scale_mm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 100,
            schedule: ClickSchedule::default(),
            loss: LossParams::default(),
            prompt: DosePromptConfig::default(),
            seed: 0,
            // Operating point for hard masks. The soft overlap loss leaves
            // intermediate probability on ambiguous bright background, so a
            // cut well above one half trades a little recall for a large
            // precision gain on small targets.
            threshold: 0.8,
            decay_scale_mm: 4.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument {
                name: "learning_rate",
                reason: format!("must be non-negative and finite, got {}", self.learning_rate),
            });
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument {
                name: "epochs",
                reason: "must be at least 1".into(),
            });
        }
        // iterations = 0 is allowed: it degenerates to box-only training,
        // which the click ablation needs as its baseline arm.
        if self.schedule.iterations > 0 && self.schedule.clicks_per_iteration == 0 {
            return Err(Error::InvalidArgument {
                name: "clicks_per_iteration",
                reason: "must be at least 1 when iterations > 0".into(),
            });
        }
        if !(self.threshold.is_finite() && (0.0..=1.0).contains(&self.threshold)) {
            return Err(Error::InvalidArgument {
                name: "threshold",
                reason: format!("must be in [0, 1], got {}", self.threshold),
            });
        }
        check_decay_scale(self.decay_scale_mm)?;
        self.loss.validate()?;
        self.prompt.validate()
    }
}

/// Per-voxel probabilities for a feature grid under a task embedding.
pub fn predict(model: &RefinerModel, emb: &TaskEmbedding, features: &FeatureGrid) -> Result<ProbVolume> {
    model.validate()?;
    let w = model.effective_weights(emb.task());
    let mut data = Vec::with_capacity(features.data.len());
    for f in &features.data {
        let mut logit = 0.0f64;
        for c in 0..FEATURE_DIM {
            logit += w[c] * f[c];
        }
        data.push(sigmoid(logit) as f32);
    }
    ProbVolume::new(features.grid.clone(), data)
}

/// Model plus the epoch-loss trace (mean loss at the parameters each epoch
/// started with).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: RefinerModel,
    pub epoch_losses: Vec<f64>,
}

/// Fixed per-case data derived once before the epoch loop.
struct CaseState {
    grid: Grid,
    intensity: Vec<f32>,
    dose_norm: Vec<f64>,
    inside: Vec<u8>,
    box_decay: Vec<f64>,
    gt: Vec<u8>,
    roi_indices: Vec<usize>,
    task: Task,
}

fn prepare_case(case: &Case, cfg: &TrainConfig) -> Result<CaseState> {
    case.validate()?;
    let grid = case.image.grid.clone();
    let roi = roi_mask(&case.dose, &cfg.prompt)?;
    let bx = bounding_box(&roi)?;
    let znorm = znorm_nonzero(&case.image)?;
    let dmax = max_positive_dose(&case.dose)?;
    let (box_decay, inside) = box_decay_field(&grid, &bx, cfg.decay_scale_mm);
    let dose_norm = case.dose.data().iter().map(|&d| f64::from(d) / dmax).collect();
    Ok(CaseState {
        grid,
        intensity: znorm.data().to_vec(),
        dose_norm,
        inside,
        box_decay,
        gt: case.gt.data().to_vec(),
        roi_indices: roi.foreground_indices(),
        task: case.text.task,
    })
}

/// Reusable per-epoch buffers (sized per case, grids may differ).
#[derive(Default)]
struct Scratch {
    d2_pos: Vec<f64>,
    d2_neg: Vec<f64>,
    pdecay: Vec<f64>,
    ndecay: Vec<f64>,
    static_logit: Vec<f64>,
    probs: Vec<f64>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        self.d2_pos.clear();
        self.d2_pos.resize(n, f64::INFINITY);
        self.d2_neg.clear();
        self.d2_neg.resize(n, f64::INFINITY);
        self.pdecay.clear();
        self.pdecay.resize(n, 0.0);
        self.ndecay.clear();
        self.ndecay.resize(n, 0.0);
        self.static_logit.clear();
        self.static_logit.resize(n, 0.0);
        self.probs.clear();
        self.probs.resize(n, 0.0);
    }

    /// Fold clicks in and refresh the decay channels where distances shrank.
    fn apply_clicks(&mut self, grid: &Grid, clicks: &[Click], s: f64) {
        for c in clicks {
            match c.polarity {
                ClickPolarity::Pos => min_sq_update(grid, c.pos, &mut self.d2_pos),
                ClickPolarity::Neg => min_sq_update(grid, c.pos, &mut self.d2_neg),
            }
        }
        let any_pos = clicks.iter().any(|c| c.polarity == ClickPolarity::Pos);
        let any_neg = clicks.iter().any(|c| c.polarity == ClickPolarity::Neg);
        if any_pos {
            for (dec, &d2) in self.pdecay.iter_mut().zip(&self.d2_pos) {
                let nd = decay_from_sq(d2, s);
                if nd > *dec {
                    *dec = nd;
                }
            }
        }
        if any_neg {
            for (dec, &d2) in self.ndecay.iter_mut().zip(&self.d2_neg) {
                let nd = decay_from_sq(d2, s);
                if nd > *dec {
                    *dec = nd;
                }
            }
        }
    }
}

/// One case's contribution to an epoch: loss and gradient w.r.t. the
/// effective weights, both averaged over click rounds.
fn epoch_case_pass(
    state: &CaseState,
    w: &[f64; FEATURE_DIM],
    cfg: &TrainConfig,
    rng: &mut SeededRng,
    scratch: &mut Scratch,
) -> Result<(f64, [f64; FEATURE_DIM])> {
    let n = state.grid.voxel_count();
    scratch.reset(n);

    // Static part of the logit: channels fixed within the epoch, summed in
    // channel order so the association matches `predict` exactly.
    for v in 0..n {
        scratch.static_logit[v] = w[CH_INTENSITY] * f64::from(state.intensity[v])
            + w[CH_DOSE] * state.dose_norm[v]
            + w[CH_IN_BOX] * f64::from(state.inside[v])
            + w[CH_BOX_DECAY] * state.box_decay[v];
    }

    let rounds = cfg.schedule.iterations + 1;
    let mut loss_sum = 0.0f64;
    let mut grad_sum = [0.0f64; FEATURE_DIM];
    for round in 0..rounds {
        for v in 0..n {
            let logit = ((scratch.static_logit[v] + w[CH_POS_CLICK] * scratch.pdecay[v])
                + w[CH_NEG_CLICK] * scratch.ndecay[v])
                + w[CH_BIAS] * 1.0;
            scratch.probs[v] = sigmoid(logit);
        }
        let (loss, grad_p) = stf_indexed(
            |v| scratch.probs[v],
            &state.gt,
            &state.roi_indices,
            &cfg.loss,
            true,
        )?;
        loss_sum += loss;
        for (gi, &v) in state.roi_indices.iter().enumerate() {
            let p = scratch.probs[v];
            let g = grad_p[gi] * p * (1.0 - p);
            grad_sum[CH_INTENSITY] += g * f64::from(state.intensity[v]);
            grad_sum[CH_DOSE] += g * state.dose_norm[v];
            grad_sum[CH_IN_BOX] += g * f64::from(state.inside[v]);
            grad_sum[CH_BOX_DECAY] += g * state.box_decay[v];
            grad_sum[CH_POS_CLICK] += g * scratch.pdecay[v];
            grad_sum[CH_NEG_CLICK] += g * scratch.ndecay[v];
            grad_sum[CH_BIAS] += g;
        }
        if round + 1 < rounds {
            let pred_data: Vec<u8> = scratch
                .probs
                .iter()
                .map(|&p| u8::from(p > TRAIN_ERROR_THRESHOLD))
                .collect();
            let pred = Mask::new(state.grid.clone(), pred_data)?;
            let gt = Mask::new(state.grid.clone(), state.gt.clone())?;
            let (fn_mask, fp_mask) = error_regions(&pred, &gt)?;
            let clicks = sample_clicks(&fn_mask, &fp_mask, cfg.schedule.clicks_per_iteration, rng)?;
            if !cfg.schedule.accumulate {
                let len = scratch.d2_pos.len();
                scratch.d2_pos.clear();
                scratch.d2_pos.resize(len, f64::INFINITY);
                scratch.d2_neg.clear();
                scratch.d2_neg.resize(len, f64::INFINITY);
                scratch.pdecay.iter_mut().for_each(|v| *v = 0.0);
                scratch.ndecay.iter_mut().for_each(|v| *v = 0.0);
            }
            scratch.apply_clicks(&state.grid, &clicks, cfg.decay_scale_mm);
        }
    }
    let scale = 1.0 / rounds as f64;
    for g in &mut grad_sum {
        *g *= scale;
    }
    Ok((loss_sum * scale, grad_sum))
}

fn check_epoch_finite(epoch: usize, loss: f64, model: &RefinerModel) -> Result<()> {
    let finite = loss.is_finite()
        && model.shared_weights.iter().all(|w| w.is_finite())
        && model.task_weights.values().flatten().all(|w| w.is_finite());
    if finite {
        Ok(())
    } else {
        Err(Error::TrainingDiverged { epoch, loss })
    }
}

/// Train a fresh model on the given cases; bit-deterministic for a fixed
/// config.
pub fn train(cases: &[Case], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::InvalidArgument {
            name: "cases",
            reason: "training needs at least one case".into(),
        });
    }
    let states: Vec<CaseState> = cases.iter().map(|c| prepare_case(c, cfg)).collect::<Result<_>>()?;

    let mut model = RefinerModel::initial(cfg.decay_scale_mm);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut scratch = Scratch::default();
    let n_cases = states.len() as f64;

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0f64;
        let mut grad_shared = [0.0f64; FEATURE_DIM];
        let mut grad_task = [[0.0f64; FEATURE_DIM]; 3];
        for (ci, state) in states.iter().enumerate() {
            let w = model.effective_weights(state.task);
            let mut rng = SeededRng::derive(cfg.seed, &[epoch as u64, ci as u64]);
            let (loss, grad) = epoch_case_pass(state, &w, cfg, &mut rng, &mut scratch)?;
            loss_sum += loss;
            for c in 0..FEATURE_DIM {
                grad_shared[c] += grad[c];
                grad_task[state.task.index()][c] += grad[c];
            }
        }
        let epoch_loss = loss_sum / n_cases;
        if !epoch_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: epoch_loss,
            });
        }
        let step = cfg.learning_rate / n_cases;
        for (w, g) in model.shared_weights.iter_mut().zip(&grad_shared) {
            *w -= step * g;
        }
        for t in Task::ALL {
            let row = model.task_weights.get_mut(&t).expect("initialized above");
            for (w, g) in row.iter_mut().zip(&grad_task[t.index()]) {
                *w -= step * g;
            }
        }
        check_epoch_finite(epoch, epoch_loss, &model)?;
        epoch_losses.push(epoch_loss);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// The box prompt bounds the output: zero every voxel outside it.
fn crop_to_box(mask: &mut Mask, bx: &BoxPrompt3D) {
    let grid = mask.grid.clone();
    for v in 0..grid.voxel_count() {
        if !bx.contains(grid.coords(v)) {
            mask.data_mut()[v] = 0;
        }
    }
}

/// Segment a new case: dose-guided box, no clicks, logistic prediction,
/// strictly-above-threshold cut. The box prompt is a hard constraint —
/// it defines the search region, so nothing outside it is ever returned.
pub fn infer(
    model: &RefinerModel,
    image: &Volume,
    dose: &Volume,
    text: &TextPromptRecord,
    cfg: &TrainConfig,
) -> Result<Mask> {
    cfg.validate()?;
    let bx = dose_guided_box(dose, &cfg.prompt)?;
    let features = featurize_case(image, dose, &bx, &[], model.decay_scale_mm)?;
    let prob = predict(model, &featurize_text(text), &features)?;
    let mut mask = crate::clicksim::binarize(&prob, cfg.threshold)?;
    crop_to_box(&mut mask, &bx);
    Ok(mask)
}

/// A click is an authoritative user statement about one voxel: apply the
/// labels verbatim, overriding both the threshold and the box bound.
fn enforce_clicks(mask: &mut Mask, clicks: &[Click]) {
    for c in clicks {
        let v = mask.grid.linear(c.pos);
        mask.data_mut()[v] = match c.polarity {
            ClickPolarity::Pos => 1,
            ClickPolarity::Neg => 0,
        };
    }
}

/// Interactive segmentation against a known reference: predict from the
/// dose-guided box alone, then run the configured refinement rounds, each
/// sampling simulated corrective clicks on the current error regions and
/// re-predicting with them. This is the evaluation protocol for click
/// refinement; the reference mask stands in for the correcting user. The
/// box prompt bounds each round's output, clicked voxels are honored
/// verbatim (a user correction outranks both the threshold and the box),
/// and with `iterations == 0` the protocol reduces exactly to [`infer`].
pub fn refine(
    model: &RefinerModel,
    case: &Case,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<Mask> {
    cfg.validate()?;
    case.validate()?;
    let bx = dose_guided_box(&case.dose, &cfg.prompt)?;
    let emb = featurize_text(&case.text);
    let mut clicks: Vec<Click> = Vec::new();
    let features = featurize_case(&case.image, &case.dose, &bx, &[], model.decay_scale_mm)?;
    let prob = predict(model, &emb, &features)?;
    let mut pred = crate::clicksim::binarize(&prob, cfg.threshold)?;
    crop_to_box(&mut pred, &bx);
    for _ in 0..cfg.schedule.iterations {
        let (fn_mask, fp_mask) = error_regions(&pred, &case.gt)?;
        let fresh = sample_clicks(
            &fn_mask,
            &fp_mask,
            cfg.schedule.clicks_per_iteration,
            rng,
        )?;
        if fresh.is_empty() {
            break; // the mask already matches the reference
        }
        if cfg.schedule.accumulate {
            clicks.extend(fresh);
        } else {
            clicks = fresh;
        }
        let features =
            featurize_case(&case.image, &case.dose, &bx, &clicks, model.decay_scale_mm)?;
        let prob = predict(model, &emb, &features)?;
        pred = crate::clicksim::binarize(&prob, cfg.threshold)?;
        crop_to_box(&mut pred, &bx);
        enforce_clicks(&mut pred, &clicks);
    }
    Ok(pred)
}
