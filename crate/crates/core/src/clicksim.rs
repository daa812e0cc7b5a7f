//! Simulated interactive click refinement.
//!
//! Between refinement rounds, clicks are sampled uniformly without
//! replacement from the current error voxels: positive clicks on missed
//! foreground (false negatives), negative clicks on spurious foreground
//! (false positives). Sampling is driven entirely by the caller's seeded
//! generator, so a fixed seed reproduces the exact click sequence.

use serde::{Deserialize, Serialize};

use crate::grid::{Mask, ProbVolume};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Whether a click marks missed foreground or spurious foreground.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClickPolarity {
    /// The voxel belongs to the target but was predicted background.
    #[serde(rename = "pos")]
    Pos,
    /// The voxel was predicted foreground but is background.
    #[serde(rename = "neg")]
    Neg,
}

/// One simulated user click.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Click {
    /// Voxel index of the click.
    pub pos: [usize; 3],
    pub polarity: ClickPolarity,
}

/// How many refinement rounds to simulate and how clicks carry over.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickSchedule {
    /// Refinement rounds after the initial box-only prediction.
    pub iterations: usize,
    /// Clicks sampled per round.
    pub clicks_per_iteration: usize,
    /// Keep earlier rounds' clicks when sampling and predicting later rounds.
    pub accumulate: bool,
}

impl Default for ClickSchedule {
    fn default() -> Self {
        Self {
            iterations: 3,
            clicks_per_iteration: 4,
            accumulate: true,
        }
    }
}

/// Split disagreement into (false negatives, false positives) over the whole
/// grid.
pub fn error_regions(pred: &Mask, gt: &Mask) -> Result<(Mask, Mask)> {
    pred.grid.check_same(&gt.grid)?;
    let mut fn_mask = Mask::empty(pred.grid.clone());
    let mut fp_mask = Mask::empty(pred.grid.clone());
    for (i, (&p, &y)) in pred.data().iter().zip(gt.data()).enumerate() {
        if y != 0 && p == 0 {
            fn_mask.data_mut()[i] = 1;
        } else if p != 0 && y == 0 {
            fp_mask.data_mut()[i] = 1;
        }
    }
    Ok((fn_mask, fp_mask))
}

/// Threshold probabilities into a mask; foreground strictly above the
/// threshold, so a threshold of 1 yields an empty mask.
pub fn binarize(prob: &ProbVolume, threshold: f64) -> Result<Mask> {
    if !(threshold.is_finite() && (0.0..=1.0).contains(&threshold)) {
        return Err(Error::InvalidArgument {
            name: "threshold",
            reason: format!("must be in [0, 1], got {threshold}"),
        });
    }
    let data = prob
        .data()
        .iter()
        .map(|&p| u8::from(f64::from(p) > threshold))
        .collect();
    Mask::new(prob.grid.clone(), data)
}

/// Sample `count` clicks uniformly without replacement from the union of the
/// two error regions, positive on false negatives and negative on false
/// positives. Fewer than `count` error voxels yields one click per error
/// voxel. The regions must be disjoint.
pub fn sample_clicks(
    fn_mask: &Mask,
    fp_mask: &Mask,
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Click>> {
    fn_mask.grid.check_same(&fp_mask.grid)?;
    let grid = &fn_mask.grid;
    let mut candidates: Vec<Click> = Vec::new();
    for (i, (&f, &p)) in fn_mask.data().iter().zip(fp_mask.data()).enumerate() {
        match (f != 0, p != 0) {
            (true, true) => {
                return Err(Error::InvalidArgument {
                    name: "error regions",
                    reason: format!("voxel {i} is both false negative and false positive"),
                })
            }
            (true, false) => candidates.push(Click {
                pos: grid.coords(i),
                polarity: ClickPolarity::Pos,
            }),
            (false, true) => candidates.push(Click {
                pos: grid.coords(i),
                polarity: ClickPolarity::Neg,
            }),
            (false, false) => {}
        }
    }
    let take = count.min(candidates.len());
    // Partial Fisher-Yates over the candidates in linear-index order.
    for i in 0..take {
        let j = i + rng.range_usize(candidates.len() - i);
        candidates.swap(i, j);
    }
    candidates.truncate(take);
    Ok(candidates)
}

/// One refinement round: binarize the current prediction, diff it against
/// ground truth, and sample clicks from the errors. The threshold must lie
/// strictly inside (0, 1) here — an all-or-nothing cut is never a useful
/// error signal.
pub fn refine_round(
    prob: &ProbVolume,
    gt: &Mask,
    threshold: f64,
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Click>> {
    if !(threshold.is_finite() && threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument {
            name: "threshold",
            reason: format!("must be strictly inside (0, 1), got {threshold}"),
        });
    }
    let pred = binarize(prob, threshold)?;
    let (fn_mask, fp_mask) = error_regions(&pred, gt)?;
    sample_clicks(&fn_mask, &fp_mask, count, rng)
}
