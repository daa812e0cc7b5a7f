//! Dose-guided region and box prompts.
//!
//! The planning dose is thresholded at a fraction tau of its maximum over
//! strictly positive voxels (inclusive, so tau = 1 keeps the argmax); the
//! largest connected component of the supra-threshold region is the
//! high-dose ROI, and its axis-aligned bounding box is the box prompt. All
//! threshold arithmetic runs in f64 on lifted values.

use serde::{Deserialize, Serialize};

use crate::grid::{BoxPrompt3D, Connectivity, Grid, Mask, Volume};
use crate::morph::{bounding_box, largest_connected_component};
use crate::{Error, Result};

/// Parameters of the dose-to-prompt derivation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosePromptConfig {
    /// Fraction of the positive-dose maximum used as the inclusion
    /// threshold; must satisfy 0 < tau <= 1.
    pub tau: f64,
    /// Connectivity used when extracting the largest component.
    pub connectivity: Connectivity,
}

impl Default for DosePromptConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            connectivity: Connectivity::TwentySix,
        }
    }
}

impl DosePromptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau.is_finite() && self.tau > 0.0 && self.tau <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidTau { tau: self.tau })
        }
    }
}

/// Maximum dose over strictly positive voxels; errors when no voxel is
/// positive.
pub fn max_positive_dose(dose: &Volume) -> Result<f64> {
    let mut best: Option<f64> = None;
    for &v in dose.data() {
        let v = f64::from(v);
        if v > 0.0 && best.is_none_or(|b| v > b) {
            best = Some(v);
        }
    }
    best.ok_or(Error::NoDose)
}

/// Largest connected component of {dose >= tau * max positive dose}.
///
/// The threshold comparison is inclusive, so tau = 1 selects exactly the
/// component of the maximal voxel. The supra-threshold region always
/// contains that voxel, so the result is never empty.
pub fn high_dose_mask(dose: &Volume, cfg: &DosePromptConfig) -> Result<Mask> {
    cfg.validate()?;
    let threshold = cfg.tau * max_positive_dose(dose)?;
    let data = dose
        .data()
        .iter()
        .map(|&v| u8::from(f64::from(v) >= threshold))
        .collect();
    let raw = Mask::new(dose.grid.clone(), data)?;
    largest_connected_component(&raw, cfg.connectivity)
}

/// The loss-restriction region: identical to [`high_dose_mask`], named for
/// its consumer (the loss takes the region mask, the prompt takes the box).
pub fn roi_mask(dose: &Volume, cfg: &DosePromptConfig) -> Result<Mask> {
    high_dose_mask(dose, cfg)
}

/// Bounding box of the high-dose component: the box prompt.
pub fn dose_guided_box(dose: &Volume, cfg: &DosePromptConfig) -> Result<BoxPrompt3D> {
    bounding_box(&high_dose_mask(dose, cfg)?)
}

/// Binary mask of the voxels inside the (inclusive) box.
pub fn box_mask(grid: &Grid, prompt: &BoxPrompt3D) -> Mask {
    let mut m = Mask::empty(grid.clone());
    for k in prompt.corner_min[2]..=prompt.corner_max[2].min(grid.dims[2] - 1) {
        for j in prompt.corner_min[1]..=prompt.corner_max[1].min(grid.dims[1] - 1) {
            for i in prompt.corner_min[0]..=prompt.corner_max[0].min(grid.dims[0] - 1) {
                m.set([i, j, k], true);
            }
        }
    }
    m
}
