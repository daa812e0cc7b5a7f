//! Grid resampling and intensity normalization.

use crate::grid::{Grid, Mask, Volume};
use crate::{Error, Result};

/// Interpolation mode for resampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    /// Weighted average of the eight surrounding voxels. For images and dose.
    Trilinear,
    /// Closest voxel (round half up per axis). For masks and labels.
    Nearest,
}

/// Output dims per axis: `ceil(dims_in * spacing_in / spacing_out)`.
fn output_dims(grid: &Grid, spacing_out: [f64; 3]) -> [usize; 3] {
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let extent = grid.dims[a] as f64 * grid.spacing_mm[a];
        dims[a] = (extent / spacing_out[a]).ceil() as usize;
        dims[a] = dims[a].max(1);
    }
    dims
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidSpacing { spacing });
    }
    Ok(())
}

/// Per-axis sample support: floor index, ceil index (clamped), and fraction.
/// Sample points are voxel centers of the output grid mapped into continuous
/// input index space (`i_out * spacing_out / spacing_in`, origin preserved);
/// points outside the input grid clamp to the nearest edge voxel.
fn axis_supports(n_in: usize, s_in: f64, n_out: usize, s_out: f64) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let c = i as f64 * s_out / s_in;
            let f = c.floor();
            let lo = (f.max(0.0) as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            let t = (c - f).clamp(0.0, 1.0);
            if c <= 0.0 {
                (lo, lo, 0.0)
            } else if c >= (n_in - 1) as f64 {
                (n_in - 1, n_in - 1, 0.0)
            } else {
                (lo, hi, t)
            }
        })
        .collect()
}

fn resample_f32(
    data: &[f32],
    grid: &Grid,
    spacing_out: [f64; 3],
    mode: Interp,
) -> (Grid, Vec<f32>) {
    let dims_out = output_dims(grid, spacing_out);
    let out_grid = Grid {
        dims: dims_out,
        spacing_mm: spacing_out,
        origin_mm: grid.origin_mm,
    };
    let sx = axis_supports(grid.dims[0], grid.spacing_mm[0], dims_out[0], spacing_out[0]);
    let sy = axis_supports(grid.dims[1], grid.spacing_mm[1], dims_out[1], spacing_out[1]);
    let sz = axis_supports(grid.dims[2], grid.spacing_mm[2], dims_out[2], spacing_out[2]);
    let (nx, ny) = (grid.dims[0], grid.dims[1]);
    let mut out = Vec::with_capacity(out_grid.voxel_count());
    for &(k0, k1, tz) in &sz {
        for &(j0, j1, ty) in &sy {
            for &(i0, i1, tx) in &sx {
                let v = match mode {
                    Interp::Nearest => {
                        let i = if tx < 0.5 { i0 } else { i1 };
                        let j = if ty < 0.5 { j0 } else { j1 };
                        let k = if tz < 0.5 { k0 } else { k1 };
                        data[i + nx * (j + ny * k)]
                    }
                    Interp::Trilinear => {
                        let mut acc = 0.0f64;
                        for (k, wk) in [(k0, 1.0 - tz), (k1, tz)] {
                            if wk == 0.0 {
                                continue;
                            }
                            for (j, wj) in [(j0, 1.0 - ty), (j1, ty)] {
                                if wj == 0.0 {
                                    continue;
                                }
                                for (i, wi) in [(i0, 1.0 - tx), (i1, tx)] {
                                    if wi == 0.0 {
                                        continue;
                                    }
                                    acc += data[i + nx * (j + ny * k)] as f64 * wk * wj * wi;
                                }
                            }
                        }
                        acc as f32
                    }
                };
                out.push(v);
            }
        }
    }
    (out_grid, out)
}

/// Resample a volume onto a new spacing. Output dims are
/// `ceil(dims_in * spacing_in / spacing_out)` per axis; the origin is
/// preserved; sample points outside the input clamp to the edge.
pub fn resample_volume(volume: &Volume, spacing_out: [f64; 3], mode: Interp) -> Result<Volume> {
    check_spacing(spacing_out)?;
    let (grid, data) = resample_f32(volume.data(), &volume.grid, spacing_out, mode);
    Volume::new(grid, data)
}

/// Resample a mask onto a new spacing with nearest-neighbor sampling, which
/// keeps it strictly binary.
pub fn resample_mask(mask: &Mask, spacing_out: [f64; 3]) -> Result<Mask> {
    check_spacing(spacing_out)?;
    let f32_data: Vec<f32> = mask.data().iter().map(|&v| v as f32).collect();
    let (grid, data) = resample_f32(&f32_data, &mask.grid, spacing_out, Interp::Nearest);
    Mask::new(grid, data.iter().map(|&v| v as u8).collect())
}

/// Z-score the nonzero voxels in place of the usual whole-volume statistics:
/// zero voxels (air / padding) are excluded from the mean and population
/// standard deviation and stay exactly zero in the output.
///
/// Errors: [`Error::EmptyForeground`] when no voxel is nonzero,
/// [`Error::DegenerateIntensity`] when the nonzero voxels have zero spread.
pub fn znorm_nonzero(volume: &Volume) -> Result<Volume> {
    let data = volume.data();
    let mut n = 0usize;
    let mut sum = 0.0f64;
    for &v in data {
        if v != 0.0 {
            n += 1;
            sum += v as f64;
        }
    }
    if n == 0 {
        return Err(Error::EmptyForeground);
    }
    let mean = sum / n as f64;
    let mut ss = 0.0f64;
    for &v in data {
        if v != 0.0 {
            let d = v as f64 - mean;
            ss += d * d;
        }
    }
    let std = (ss / n as f64).sqrt();
    if std == 0.0 {
        return Err(Error::DegenerateIntensity);
    }
    let out: Vec<f32> = data
        .iter()
        .map(|&v| {
            if v == 0.0 {
                0.0
            } else {
                ((v as f64 - mean) / std) as f32
            }
        })
        .collect();
    Volume::new(volume.grid.clone(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn two_value_volume_normalizes_to_plus_minus_one() {
        let grid = Grid::isotropic([2, 1, 1], 1.0).unwrap();
        let v = Volume::new(grid, vec![2.0, 4.0]).unwrap();
        let z = znorm_nonzero(&v).unwrap();
        assert_eq!(z.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn zeros_are_excluded_and_preserved() {
        let grid = Grid::isotropic([4, 1, 1], 1.0).unwrap();
        let v = Volume::new(grid, vec![0.0, 2.0, 4.0, 0.0]).unwrap();
        let z = znorm_nonzero(&v).unwrap();
        assert_eq!(z.data(), &[0.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn znorm_output_has_zero_mean_unit_std_over_nonzero() {
        let grid = Grid::isotropic([8, 8, 8], 1.0).unwrap();
        let mut rng = SeededRng::new(4);
        let data: Vec<f32> = (0..512)
            .map(|i| {
                if i % 5 == 0 {
                    0.0
                } else {
                    50.0 + 10.0 * rng.normal() as f32
                }
            })
            .collect();
        let z = znorm_nonzero(&Volume::new(grid, data).unwrap()).unwrap();
        let nz: Vec<f64> = z.data().iter().filter(|&&v| v != 0.0).map(|&v| v as f64).collect();
        let mean = nz.iter().sum::<f64>() / nz.len() as f64;
        let var = nz.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nz.len() as f64;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-6, "std {}", var.sqrt());
    }

    #[test]
    fn znorm_is_idempotent_on_zero_free_input() {
        let grid = Grid::isotropic([4, 4, 4], 1.0).unwrap();
        let mut rng = SeededRng::new(5);
        // No voxel equals the mean, no zeros.
        let data: Vec<f32> = (0..64).map(|_| 10.0 + rng.range_f64(0.0, 5.0) as f32).collect();
        let once = znorm_nonzero(&Volume::new(grid, data).unwrap()).unwrap();
        let twice = znorm_nonzero(&once).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn znorm_error_cases() {
        let grid = Grid::isotropic([2, 2, 2], 1.0).unwrap();
        let zeros = Volume::filled(grid.clone(), 0.0).unwrap();
        assert!(matches!(znorm_nonzero(&zeros), Err(Error::EmptyForeground)));
        let flat = Volume::filled(grid, 7.0).unwrap();
        assert!(matches!(
            znorm_nonzero(&flat),
            Err(Error::DegenerateIntensity)
        ));
    }

    #[test]
    fn output_dims_follow_ceil_rule() {
        let grid = Grid::isotropic([4, 4, 4], 2.0).unwrap();
        let v = Volume::filled(grid, 1.0).unwrap();
        let out = resample_volume(&v, [1.0; 3], Interp::Trilinear).unwrap();
        assert_eq!(out.grid.dims, [8, 8, 8]);
        assert_eq!(out.grid.origin_mm, [0.0; 3]);
        // 10 voxels at 1 mm onto 3 mm: ceil(10/3) = 4.
        let grid = Grid::isotropic([10, 10, 10], 1.0).unwrap();
        let v = Volume::filled(grid, 1.0).unwrap();
        let out = resample_volume(&v, [3.0; 3], Interp::Trilinear).unwrap();
        assert_eq!(out.grid.dims, [4, 4, 4]);
    }

    #[test]
    fn constant_field_stays_constant() {
        let grid = Grid::new([5, 4, 3], [1.5, 2.0, 1.0], [1.0, 2.0, 3.0]).unwrap();
        let v = Volume::filled(grid, 42.5).unwrap();
        for mode in [Interp::Trilinear, Interp::Nearest] {
            let out = resample_volume(&v, [0.7, 1.1, 2.3], mode).unwrap();
            assert!(out.data().iter().all(|&x| x == 42.5));
        }
    }

    #[test]
    fn identity_resample_is_bit_identical() {
        let grid = Grid::isotropic([6, 5, 4], 1.25).unwrap();
        let mut rng = SeededRng::new(6);
        let data: Vec<f32> = (0..grid.voxel_count())
            .map(|_| rng.range_f64(-5.0, 5.0) as f32)
            .collect();
        let v = Volume::new(grid, data).unwrap();
        for mode in [Interp::Trilinear, Interp::Nearest] {
            let out = resample_volume(&v, v.grid.spacing_mm, mode).unwrap();
            assert_eq!(out.grid, v.grid);
            let a: Vec<u32> = v.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = out.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn trilinear_midpoint_between_two_voxels() {
        // Two voxels 0 and 10 at 2 mm; resampling to 1 mm puts a sample at
        // the input midpoint (continuous index 0.5).
        let grid = Grid::isotropic([2, 1, 1], 2.0).unwrap();
        let v = Volume::new(grid, vec![0.0, 10.0]).unwrap();
        let out = resample_volume(&v, [1.0, 2.0, 2.0], Interp::Trilinear).unwrap();
        assert_eq!(out.grid.dims, [4, 1, 1]);
        assert_eq!(out.data()[0], 0.0);
        assert_eq!(out.data()[1], 5.0);
        assert_eq!(out.data()[2], 10.0);
        // Sample past the input extent clamps to the edge voxel.
        assert_eq!(out.data()[3], 10.0);
    }

    #[test]
    fn mask_resample_stays_binary() {
        let grid = Grid::isotropic([5, 5, 5], 1.0).unwrap();
        let mut rng = SeededRng::new(7);
        let data: Vec<u8> = (0..125).map(|_| u8::from(rng.bernoulli(0.5))).collect();
        let m = Mask::new(grid, data).unwrap();
        let out = resample_mask(&m, [0.6, 1.3, 0.9]).unwrap();
        assert!(out.data().iter().all(|&v| v <= 1));
    }

    #[test]
    fn mask_nearest_upsample_hand_case() {
        // 1D mask [0,1,0,0,0] at 1 mm, resampled to 0.5 mm. Continuous input
        // coordinates are i/2; half-up rounding sends outputs 1 and 2 (at
        // 0.5 and 1.0) to input voxel 1 and nothing else.
        let grid = Grid::isotropic([5, 1, 1], 1.0).unwrap();
        let m = Mask::new(grid, vec![0, 1, 0, 0, 0]).unwrap();
        let up = resample_mask(&m, [0.5, 1.0, 1.0]).unwrap();
        assert_eq!(up.grid.dims, [10, 1, 1]);
        assert_eq!(up.data(), &[0, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn invalid_target_spacing_is_rejected() {
        let v = Volume::filled(Grid::isotropic([2, 2, 2], 1.0).unwrap(), 1.0).unwrap();
        for bad in [[0.0, 1.0, 1.0], [1.0, -2.0, 1.0], [1.0, 1.0, f64::INFINITY]] {
            assert!(matches!(
                resample_volume(&v, bad, Interp::Trilinear),
                Err(Error::InvalidSpacing { .. })
            ));
        }
    }
}
