//! Overlap and surface-distance evaluation metrics.
//!
//! Overlap metrics come from hard voxel counts. Surface distances pool the
//! symmetric multiset {d(a, B) for a in surface(A)} union {d(b, A) for b in
//! surface(B)} in physical mm; HD95 is the 95th percentile of that pool
//! (linear interpolation between closest ranks) and ASSD its mean. Surfaces
//! are foreground voxels with a face (6-neighborhood) background or
//! out-of-grid neighbor. Nearest distances are computed with an exact
//! anisotropic squared Euclidean distance transform (per-axis lower-envelope
//! passes), which matches all-pairs brute force.

use serde::{Deserialize, Serialize};

use crate::grid::{Connectivity, Grid, Mask};
use crate::{Error, Result};

/// Hard confusion counts between a predicted and a reference mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

/// Voxel-count confusion between two binary masks on the same grid.
pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts> {
    pred.grid.check_same(&gt.grid)?;
    let mut c = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        false_neg: 0,
        true_neg: 0,
    };
    for (&p, &y) in pred.data().iter().zip(gt.data()) {
        match (p != 0, y != 0) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Overlap metrics in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapMetrics {
    pub dice: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Overlap metrics from confusion counts.
///
/// Conventions for empty operands: when both masks are empty every metric is
/// 1 (perfect agreement); a 0/0 ratio against a non-empty opposite mask is 0.
pub fn overlap_metrics(c: &ConfusionCounts) -> OverlapMetrics {
    let (tp, fp, fng) = (c.true_pos as f64, c.false_pos as f64, c.false_neg as f64);
    if c.true_pos == 0 && c.false_pos == 0 && c.false_neg == 0 {
        return OverlapMetrics {
            dice: 1.0,
            iou: 1.0,
            precision: 1.0,
            recall: 1.0,
        };
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    OverlapMetrics {
        dice: ratio(2.0 * tp, 2.0 * tp + fp + fng),
        iou: ratio(tp, tp + fp + fng),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fng),
    }
}

/// Foreground voxels with at least one background or out-of-grid neighbor
/// under the given connectivity.
pub fn surface_voxels(mask: &Mask, connectivity: Connectivity) -> Mask {
    let grid = &mask.grid;
    let offsets = connectivity.offsets();
    let mut out = Mask::empty(grid.clone());
    for (linear, &v) in mask.data().iter().enumerate() {
        if v == 0 {
            continue;
        }
        let c = grid.coords(linear);
        let exposed = offsets.iter().any(|off| {
            let n = [
                c[0] as isize + off[0],
                c[1] as isize + off[1],
                c[2] as isize + off[2],
            ];
            if !grid.contains(n) {
                return true;
            }
            mask.data()[grid.linear([n[0] as usize, n[1] as usize, n[2] as usize])] == 0
        });
        if exposed {
            out.data_mut()[linear] = 1;
        }
    }
    out
}

/// One-dimensional squared distance transform under weight `w` (spacing^2):
/// `out[i] = min_j f[j] + w * (i - j)^2`. Values of `f` may be infinite.
fn dt_1d(f: &[f64], w: f64, out: &mut [f64]) {
    let n = f.len();
    debug_assert_eq!(out.len(), n);
    // Lower envelope of parabolas: v = site index, z = left boundary.
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + w * (q * q) as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let fp = f[p] + w * (p * p) as f64;
            let s = (fq - fp) / (2.0 * w * (q - p) as f64);
            if s <= z[k as usize] {
                k -= 1;
            } else {
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if k < 0 {
        out.fill(f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (i, o) in out.iter_mut().enumerate().take(n) {
        while z[j + 1] < i as f64 {
            j += 1;
        }
        let p = v[j];
        let d = i as f64 - p as f64;
        *o = f[p] + w * d * d;
    }
}

/// Exact squared Euclidean distance (mm^2) from every voxel center to the
/// nearest feature voxel center, on an anisotropic grid. Voxels are features
/// where `feature` is true. All-false input yields all-infinite output.
fn squared_edt(feature: &[bool], grid: &Grid) -> Vec<f64> {
    let [nx, ny, nz] = grid.dims;
    let mut dist: Vec<f64> = feature
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();

    // Pass along x for each (y, z) row.
    let wx = grid.spacing_mm[0] * grid.spacing_mm[0];
    let mut line = vec![0.0f64; nx.max(ny).max(nz)];
    let mut out_line = vec![0.0f64; nx.max(ny).max(nz)];
    for k in 0..nz {
        for j in 0..ny {
            let base = nx * (j + ny * k);
            line[..nx].copy_from_slice(&dist[base..base + nx]);
            dt_1d(&line[..nx], wx, &mut out_line[..nx]);
            dist[base..base + nx].copy_from_slice(&out_line[..nx]);
        }
    }
    // Pass along y for each (x, z) column.
    let wy = grid.spacing_mm[1] * grid.spacing_mm[1];
    for k in 0..nz {
        for i in 0..nx {
            for j in 0..ny {
                line[j] = dist[i + nx * (j + ny * k)];
            }
            dt_1d(&line[..ny], wy, &mut out_line[..ny]);
            for j in 0..ny {
                dist[i + nx * (j + ny * k)] = out_line[j];
            }
        }
    }
    // Pass along z for each (x, y) column.
    let wz = grid.spacing_mm[2] * grid.spacing_mm[2];
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                line[k] = dist[i + nx * (j + ny * k)];
            }
            dt_1d(&line[..nz], wz, &mut out_line[..nz]);
            for k in 0..nz {
                dist[i + nx * (j + ny * k)] = out_line[k];
            }
        }
    }
    dist
}

fn check_nonempty(pred: &Mask, gt: &Mask) -> Result<()> {
    if pred.foreground_count() == 0 {
        return Err(Error::UndefinedDistance { side: "prediction" });
    }
    if gt.foreground_count() == 0 {
        return Err(Error::UndefinedDistance {
            side: "ground truth",
        });
    }
    Ok(())
}

/// Pooled symmetric surface-distance multiset in mm, sorted ascending:
/// nearest-surface distances from every surface voxel of `pred` to the
/// surface of `gt` and vice versa. Errors when either mask is empty.
pub fn surface_distances(pred: &Mask, gt: &Mask) -> Result<Vec<f64>> {
    pred.grid.check_same(&gt.grid)?;
    check_nonempty(pred, gt)?;
    let grid = &pred.grid;
    let surf_p = surface_voxels(pred, Connectivity::Six);
    let surf_g = surface_voxels(gt, Connectivity::Six);
    let feat_p: Vec<bool> = surf_p.data().iter().map(|&v| v != 0).collect();
    let feat_g: Vec<bool> = surf_g.data().iter().map(|&v| v != 0).collect();
    let edt_to_g = squared_edt(&feat_g, grid);
    let edt_to_p = squared_edt(&feat_p, grid);
    let mut pool = Vec::with_capacity(surf_p.foreground_count() + surf_g.foreground_count());
    for (i, &on) in feat_p.iter().enumerate() {
        if on {
            pool.push(edt_to_g[i].sqrt());
        }
    }
    for (i, &on) in feat_g.iter().enumerate() {
        if on {
            pool.push(edt_to_p[i].sqrt());
        }
    }
    pool.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    Ok(pool)
}

/// Percentile with linear interpolation between closest ranks on an
/// ascending-sorted slice: rank position q/100 * (n-1).
pub(crate) fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// 95th percentile of the pooled symmetric surface-distance multiset, in mm.
pub fn hd95(pred: &Mask, gt: &Mask) -> Result<f64> {
    let pool = surface_distances(pred, gt)?;
    Ok(percentile_linear(&pool, 95.0))
}

/// Mean of the pooled symmetric surface-distance multiset, in mm.
pub fn assd(pred: &Mask, gt: &Mask) -> Result<f64> {
    let pool = surface_distances(pred, gt)?;
    Ok(pool.iter().sum::<f64>() / pool.len() as f64)
}

/// Full six-metric report. Distance metrics are `None` (serialized as null)
/// when either mask is empty, where surface distances are undefined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dice: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub hd95_mm: Option<f64>,
    pub assd_mm: Option<f64>,
}

/// Evaluate a predicted mask against ground truth on the same grid.
pub fn evaluate(pred: &Mask, gt: &Mask) -> Result<MetricsReport> {
    let counts = confusion(pred, gt)?;
    let overlap = overlap_metrics(&counts);
    let (hd95_mm, assd_mm) = if pred.foreground_count() > 0 && gt.foreground_count() > 0 {
        let pool = surface_distances(pred, gt)?;
        (
            Some(percentile_linear(&pool, 95.0)),
            Some(pool.iter().sum::<f64>() / pool.len() as f64),
        )
    } else {
        (None, None)
    };
    Ok(MetricsReport {
        dice: overlap.dice,
        iou: overlap.iou,
        precision: overlap.precision,
        recall: overlap.recall,
        hd95_mm,
        assd_mm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn mask_from(grid: &Grid, fg: &[[usize; 3]]) -> Mask {
        let mut m = Mask::empty(grid.clone());
        for &idx in fg {
            m.set(idx, true);
        }
        m
    }

    /// All-pairs nearest-surface distances; independent of the transform.
    fn oracle_pool(pred: &Mask, gt: &Mask) -> Vec<f64> {
        let surf_p = surface_voxels(pred, Connectivity::Six);
        let surf_g = surface_voxels(gt, Connectivity::Six);
        let grid = &pred.grid;
        let pv: Vec<[usize; 3]> = surf_p.foreground_indices().iter().map(|&i| grid.coords(i)).collect();
        let gv: Vec<[usize; 3]> = surf_g.foreground_indices().iter().map(|&i| grid.coords(i)).collect();
        let mut pool = Vec::new();
        for a in &pv {
            let d = gv
                .iter()
                .map(|b| grid.distance_mm(*a, *b))
                .fold(f64::INFINITY, f64::min);
            pool.push(d);
        }
        for b in &gv {
            let d = pv
                .iter()
                .map(|a| grid.distance_mm(*a, *b))
                .fold(f64::INFINITY, f64::min);
            pool.push(d);
        }
        pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pool
    }

    #[test]
    fn frozen_overlap_instance() {
        // tp=2, fp=1, fn=1: dice 2/3, iou 1/2, precision 2/3, recall 2/3.
        let c = ConfusionCounts {
            true_pos: 2,
            false_pos: 1,
            false_neg: 1,
            true_neg: 10,
        };
        let m = overlap_metrics(&c);
        assert!((m.dice - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.iou - 0.5).abs() < 1e-15);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn both_empty_is_perfect_agreement() {
        let g = Grid::isotropic([3, 3, 3], 1.0).unwrap();
        let r = evaluate(&Mask::empty(g.clone()), &Mask::empty(g)).unwrap();
        assert_eq!(
            (r.dice, r.iou, r.precision, r.recall),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(r.hd95_mm, None);
        assert_eq!(r.assd_mm, None);
    }

    #[test]
    fn one_empty_side_zeroes_overlap_and_undefines_distances() {
        let g = Grid::isotropic([3, 3, 3], 1.0).unwrap();
        let gt = mask_from(&g, &[[1, 1, 1]]);
        let empty = Mask::empty(g);
        let r = evaluate(&empty, &gt).unwrap();
        assert_eq!((r.dice, r.iou, r.precision, r.recall), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.hd95_mm, None);
        assert!(matches!(
            hd95(&empty, &gt),
            Err(Error::UndefinedDistance { side: "prediction" })
        ));
        assert!(matches!(
            assd(&gt, &empty),
            Err(Error::UndefinedDistance { side: "ground truth" })
        ));
    }

    #[test]
    fn cube_surface_count() {
        let g = Grid::isotropic([5, 5, 5], 1.0).unwrap();
        let mut m = Mask::empty(g);
        for k in 1..4 {
            for j in 1..4 {
                for i in 1..4 {
                    m.set([i, j, k], true);
                }
            }
        }
        let s = surface_voxels(&m, Connectivity::Six);
        assert_eq!(s.foreground_count(), 26);
        assert!(!s.at([2, 2, 2]));
    }

    #[test]
    fn grid_border_voxels_are_surface() {
        let g = Grid::isotropic([2, 2, 2], 1.0).unwrap();
        let m = Mask::new(g, vec![1; 8]).unwrap();
        let s = surface_voxels(&m, Connectivity::Six);
        assert_eq!(s.foreground_count(), 8);
    }

    #[test]
    fn single_voxels_three_mm_apart() {
        let g = Grid::isotropic([8, 3, 3], 1.0).unwrap();
        let a = mask_from(&g, &[[1, 1, 1]]);
        let b = mask_from(&g, &[[4, 1, 1]]);
        assert!((hd95(&a, &b).unwrap() - 3.0).abs() < 1e-12);
        assert!((assd(&a, &b).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_plates_assd() {
        // Two 4x4x1 plates with a 2 mm gap; every surface voxel of one plate
        // is exactly 2 mm from the other plate's surface.
        let g = Grid::isotropic([4, 4, 4], 1.0).unwrap();
        let mut a = Mask::empty(g.clone());
        let mut b = Mask::empty(g);
        for j in 0..4 {
            for i in 0..4 {
                a.set([i, j, 0], true);
                b.set([i, j, 2], true);
            }
        }
        assert!((assd(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        assert!((hd95(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn anisotropic_spacing_scales_distances() {
        let g = Grid::new([3, 3, 4], [1.0, 1.0, 2.5], [0.0; 3]).unwrap();
        let a = mask_from(&g, &[[1, 1, 1]]);
        let b = mask_from(&g, &[[1, 1, 2]]);
        assert!((assd(&a, &b).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn identical_masks_have_zero_distance_and_perfect_overlap() {
        let g = Grid::isotropic([6, 6, 6], 1.0).unwrap();
        let m = mask_from(&g, &[[2, 2, 2], [3, 2, 2], [3, 3, 2], [2, 3, 3]]);
        let r = evaluate(&m, &m).unwrap();
        assert_eq!((r.dice, r.iou, r.precision, r.recall), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(r.hd95_mm, Some(0.0));
        assert_eq!(r.assd_mm, Some(0.0));
    }

    #[test]
    fn percentile_interpolates_between_ranks() {
        assert_eq!(percentile_linear(&[1.0, 2.0, 3.0, 4.0], 50.0), 2.5);
        let p95 = percentile_linear(&[1.0, 2.0, 3.0, 4.0], 95.0);
        assert!((p95 - 3.85).abs() < 1e-12);
        assert_eq!(percentile_linear(&[7.0], 95.0), 7.0);
        assert_eq!(percentile_linear(&[1.0, 2.0], 100.0), 2.0);
        assert_eq!(percentile_linear(&[1.0, 2.0], 0.0), 1.0);
    }

    #[test]
    fn pooled_distances_are_symmetric() {
        let mut rng = SeededRng::new(31);
        let g = Grid::new([7, 6, 5], [1.0, 1.3, 0.8], [0.0; 3]).unwrap();
        for _ in 0..10 {
            let a_data: Vec<u8> = (0..g.voxel_count()).map(|_| u8::from(rng.bernoulli(0.3))).collect();
            let b_data: Vec<u8> = (0..g.voxel_count()).map(|_| u8::from(rng.bernoulli(0.3))).collect();
            let a = Mask::new(g.clone(), a_data).unwrap();
            let b = Mask::new(g.clone(), b_data).unwrap();
            if a.foreground_count() == 0 || b.foreground_count() == 0 {
                continue;
            }
            assert_eq!(hd95(&a, &b).unwrap().to_bits(), hd95(&b, &a).unwrap().to_bits());
            assert_eq!(assd(&a, &b).unwrap().to_bits(), assd(&b, &a).unwrap().to_bits());
        }
    }

    #[test]
    fn precision_of_a_vs_b_equals_recall_of_b_vs_a() {
        let mut rng = SeededRng::new(32);
        let g = Grid::isotropic([6, 6, 6], 1.0).unwrap();
        for _ in 0..20 {
            let a_data: Vec<u8> = (0..216).map(|_| u8::from(rng.bernoulli(0.4))).collect();
            let b_data: Vec<u8> = (0..216).map(|_| u8::from(rng.bernoulli(0.4))).collect();
            let a = Mask::new(g.clone(), a_data).unwrap();
            let b = Mask::new(g.clone(), b_data).unwrap();
            let ab = overlap_metrics(&confusion(&a, &b).unwrap());
            let ba = overlap_metrics(&confusion(&b, &a).unwrap());
            assert_eq!(ab.precision.to_bits(), ba.recall.to_bits());
            assert_eq!(ab.dice.to_bits(), ba.dice.to_bits());
            assert_eq!(ab.iou.to_bits(), ba.iou.to_bits());
        }
    }

    #[test]
    fn transform_matches_brute_force_on_random_masks() {
        let mut rng = SeededRng::new(33);
        for trial in 0..15 {
            let dims = [
                3 + rng.range_usize(8),
                3 + rng.range_usize(8),
                3 + rng.range_usize(8),
            ];
            let spacing = [
                rng.range_f64(0.5, 2.0),
                rng.range_f64(0.5, 2.0),
                rng.range_f64(0.5, 2.0),
            ];
            let g = Grid::new(dims, spacing, [0.0; 3]).unwrap();
            let a_data: Vec<u8> = (0..g.voxel_count()).map(|_| u8::from(rng.bernoulli(0.25))).collect();
            let b_data: Vec<u8> = (0..g.voxel_count()).map(|_| u8::from(rng.bernoulli(0.25))).collect();
            let a = Mask::new(g.clone(), a_data).unwrap();
            let b = Mask::new(g.clone(), b_data).unwrap();
            if a.foreground_count() == 0 || b.foreground_count() == 0 {
                continue;
            }
            let got = surface_distances(&a, &b).unwrap();
            let want = oracle_pool(&a, &b);
            assert_eq!(got.len(), want.len(), "trial {trial}");
            for (x, y) in got.iter().zip(&want) {
                assert!((x - y).abs() < 1e-9, "trial {trial}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn report_serializes_undefined_distances_as_null() {
        let g = Grid::isotropic([3, 3, 3], 1.0).unwrap();
        let r = evaluate(&Mask::empty(g.clone()), &Mask::empty(g)).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"hd95_mm\":null"));
        assert!(json.contains("\"assd_mm\":null"));
    }
}
