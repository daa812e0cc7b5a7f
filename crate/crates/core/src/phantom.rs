//! Synthetic radiotherapy-case generator and training-time augmentation.
//!
//! A generated case has four layers on one grid:
//!
//! * a body ellipsoid; voxels outside it are exactly 0 (air), which keeps
//!   them at 0 through nonzero-only normalization so the background prior in
//!   the classifier bias applies cleanly;
//! * an anisotropic Gaussian dose with a jittered, voxel-snapped peak;
//! * 1-2 small lesion ellipsoids placed so every lesion voxel receives at
//!   least 60% of the peak dose (the generator's core invariant), together
//!   well under 2% of the grid;
//! * an image: base intensity, smooth cosine texture, a task-specific
//!   contrast profile on the lesions (focal plateau, diffuse fade, or
//!   bright rim), and voxel noise inside the body.
//!
//! All randomness flows through one seeded generator with a fixed draw
//! order, so a seed pins the case bit-for-bit. Augmentation composes axis
//! flips, a small rotation+scale affine (image/dose trilinear, labels
//! nearest), masked noise, support-normalized blur, and a gamma remap; the
//! geometric steps share one parameter draw across image, dose, and labels.

use serde::{Deserialize, Serialize};

use crate::dataset::Case;
use crate::grid::{Grid, Mask, Volume};
use crate::rng::SeededRng;
use crate::textprompt::{Task, TextPromptRecord};
use crate::{Error, Result};

/// Dose-fraction bound the lesions are seeded inside. Deliberately below
/// the default box threshold of 0.8 so threshold sweeps trade lesion
/// coverage against box tightness.
pub const LESION_DOSE_FRACTION: f64 = 0.6;

/// Maximum dose-peak jitter from the grid center, mm per axis.
const DOSE_JITTER_MM: f64 = 4.0;

/// Body ellipsoid semi-axes as a fraction of grid extent.
const BODY_FRACTION: f64 = 0.42;

/// Safety margin applied to the lesion placement region so float rounding
/// at the dose boundary can never break the placement invariant.
const PLACEMENT_MARGIN: f64 = 0.97;

/// Relative-dose band where distractor blobs may sit: inside the irradiated
/// neighborhood but strictly clear of the lesion region, so bright
/// non-lesion tissue confounds intensity without ever touching the labels.
pub const DISTRACTOR_DOSE_CEILING: f64 = 0.45;
pub const DISTRACTOR_DOSE_FLOOR: f64 = 0.15;

/// Placement attempts per distractor before giving up on the remainder.
const DISTRACTOR_ATTEMPTS: usize = 200;

/// Generator parameters; `Default` is the reference configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub task: Task,
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub seed: u64,
    /// Range of lesion ellipsoid semi-axes, mm.
    pub lesion_radius_mm: (f64, f64),
    /// Inclusive range of lesion counts per case.
    pub lesion_count: (usize, usize),
    pub dose_peak_gy: f64,
    /// Range of per-axis dose Gaussian sigmas, mm.
    pub dose_sigma_mm: (f64, f64),
    /// Intensity offset of lesions against the local background.
    pub contrast: f64,
    /// Base body intensity.
    pub base_intensity: f64,
    /// Amplitude of the smooth background texture.
    pub texture_amplitude: f64,
    /// Standard deviation of in-body voxel noise.
    pub noise_sigma: f64,
    /// Inclusive range of bright non-lesion distractor blobs per case,
    /// placed in the mid-dose band; (0, 0) disables them.
    pub distractor_count: (usize, usize),
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            task: Task::Orn,
            dims: [48, 48, 48],
            spacing_mm: [1.0, 1.0, 1.0],
            seed: 0,
            lesion_radius_mm: (2.5, 4.5),
            lesion_count: (1, 2),
            dose_peak_gy: 60.0,
            dose_sigma_mm: (6.0, 9.0),
            contrast: 35.0,
            base_intensity: 100.0,
            texture_amplitude: 4.0,
            noise_sigma: 3.0,
            distractor_count: (1, 3),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        Grid::new(self.dims, self.spacing_mm, [0.0; 3])?;
        let bad = |name: &'static str, reason: String| Err(Error::InvalidArgument { name, reason });
        let (rlo, rhi) = self.lesion_radius_mm;
        if !(rlo.is_finite() && rhi.is_finite() && rlo > 0.0 && rlo <= rhi) {
            return bad("lesion_radius_mm", format!("bad range ({rlo}, {rhi})"));
        }
        let (clo, chi) = self.lesion_count;
        if clo < 1 || clo > chi {
            return bad("lesion_count", format!("bad range ({clo}, {chi})"));
        }
        if !(self.dose_peak_gy.is_finite() && self.dose_peak_gy > 0.0) {
            return bad("dose_peak_gy", format!("must be positive, got {}", self.dose_peak_gy));
        }
        let (slo, shi) = self.dose_sigma_mm;
        if !(slo.is_finite() && shi.is_finite() && slo > 0.0 && slo <= shi) {
            return bad("dose_sigma_mm", format!("bad range ({slo}, {shi})"));
        }
        let (dlo, dhi) = self.distractor_count;
        if dlo > dhi {
            return bad("distractor_count", format!("bad range ({dlo}, {dhi})"));
        }
        for (name, v) in [
            ("contrast", self.contrast),
            ("base_intensity", self.base_intensity),
            ("texture_amplitude", self.texture_amplitude),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !v.is_finite() {
                return bad("spec", format!("{name} must be finite, got {v}"));
            }
        }
        Ok(())
    }
}

/// Millimeter coordinates of the grid's geometric center.
fn grid_center_mm(grid: &Grid) -> [f64; 3] {
    std::array::from_fn(|a| {
        grid.origin_mm[a] + (grid.dims[a] as f64 - 1.0) / 2.0 * grid.spacing_mm[a]
    })
}

/// Generate one case from the spec; a fixed seed pins every voxel.
pub fn generate_case(spec: &PhantomSpec) -> Result<Case> {
    spec.validate()?;
    let grid = Grid::new(spec.dims, spec.spacing_mm, [0.0; 3])?;
    let n = grid.voxel_count();
    let mut rng = SeededRng::new(spec.seed);
    let center = grid_center_mm(&grid);

    // Draw order: dose center jitter, dose sigmas, texture, lesion count,
    // per-lesion radii and placement, distractor count, per-distractor
    // radii and placement, then in-body noise.
    let mut dose_center = [0.0f64; 3];
    for a in 0..3 {
        let jitter = rng.range_f64(-DOSE_JITTER_MM, DOSE_JITTER_MM);
        // Snap to the nearest voxel center so the dose maximum is attained
        // exactly at one voxel.
        let idx = ((center[a] + jitter - grid.origin_mm[a]) / grid.spacing_mm[a]).round();
        let idx = idx.clamp(0.0, grid.dims[a] as f64 - 1.0);
        dose_center[a] = grid.origin_mm[a] + idx * grid.spacing_mm[a];
    }
    let mut sigma = [0.0f64; 3];
    for s in &mut sigma {
        *s = rng.range_f64(spec.dose_sigma_mm.0, spec.dose_sigma_mm.1);
    }

    let mut wavelength = [0.0f64; 3];
    let mut phase = [0.0f64; 3];
    for a in 0..3 {
        wavelength[a] = rng.range_f64(8.0, 16.0);
        phase[a] = rng.range_f64(0.0, std::f64::consts::TAU);
    }

    // Lesion placement: every point of a lesion ellipsoid must stay inside
    // the {dose >= LESION_DOSE_FRACTION * peak} ellipsoid, whose semi-axes
    // are sigma * sqrt(2 ln(1/fraction)). A sufficient condition is that
    // the center offset plus the lesion semi-axis fits per axis, with a
    // small margin against float rounding at the boundary.
    // The placement region uses the spec's lower sigma bound rather than
    // the drawn sigmas, so whether a lesion size fits is decided by the
    // spec alone, never by the luck of one seed's sigma draw.
    let reach = (2.0 * (1.0 / LESION_DOSE_FRACTION).ln()).sqrt();
    let region = [PLACEMENT_MARGIN * spec.dose_sigma_mm.0 * reach; 3];
    let count = spec.lesion_count.0 + rng.range_usize(spec.lesion_count.1 - spec.lesion_count.0 + 1);
    let mut lesions: Vec<([f64; 3], [f64; 3])> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut radii = [0.0f64; 3];
        for r in &mut radii {
            *r = rng.range_f64(spec.lesion_radius_mm.0, spec.lesion_radius_mm.1);
        }
        let mut head = [0.0f64; 3];
        for a in 0..3 {
            head[a] = region[a] - radii[a];
            if head[a] <= 0.0 {
                return Err(Error::InfeasibleSpec {
                    reason: format!(
                        "lesion semi-axis {:.2} mm cannot fit inside the {:.0}% dose region (headroom {:.2} mm on axis {a})",
                        radii[a],
                        LESION_DOSE_FRACTION * 100.0,
                        region[a]
                    ),
                });
            }
        }
        // Uniform point in the unit ball by rejection, scaled per axis.
        let unit = loop {
            let u = [
                rng.range_f64(-1.0, 1.0),
                rng.range_f64(-1.0, 1.0),
                rng.range_f64(-1.0, 1.0),
            ];
            if u.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
                break u;
            }
        };
        let mut lc = [0.0f64; 3];
        for a in 0..3 {
            lc[a] = dose_center[a] + unit[a] * head[a];
        }
        lesions.push((lc, radii));
    }

    let semi: [f64; 3] =
        std::array::from_fn(|a| BODY_FRACTION * grid.dims[a] as f64 * grid.spacing_mm[a]);

    // Distractor blobs: bright non-lesion structures in the mid-dose band.
    // They are why intensity alone cannot localize a lesion — the dose
    // prompt has to exclude them. A candidate is accepted only when every
    // voxel it covers lies inside the body and in the allowed band, which
    // keeps distractors disjoint from the lesion region by construction.
    // Placement is best-effort: on a grid too small to hold the band the
    // case simply gets fewer blobs.
    let rel_dose = |p: &[f64; 3]| -> f64 {
        let mut q = 0.0;
        for a in 0..3 {
            let d = p[a] - dose_center[a];
            q += d * d / (2.0 * sigma[a] * sigma[a]);
        }
        (-q).exp()
    };
    let d_count = spec.distractor_count.0
        + rng.range_usize(spec.distractor_count.1 - spec.distractor_count.0 + 1);
    let mut distractors: Vec<([f64; 3], [f64; 3])> = Vec::with_capacity(d_count);
    'place: for _ in 0..d_count {
        let mut radii = [0.0f64; 3];
        for r in &mut radii {
            *r = rng.range_f64(spec.lesion_radius_mm.0, spec.lesion_radius_mm.1);
        }
        for _ in 0..DISTRACTOR_ATTEMPTS {
            let mut c = [0.0f64; 3];
            let mut fit = 0.0f64;
            for a in 0..3 {
                c[a] = center[a] + rng.range_f64(-semi[a], semi[a]);
                let d = (c[a] - center[a]).abs() + radii[a];
                fit += (d / semi[a]) * (d / semi[a]);
            }
            if fit <= 1.0 && distractor_band_ok(&grid, &c, &radii, &rel_dose) {
                distractors.push((c, radii));
                continue 'place;
            }
        }
        break;
    }

    // Body, dose, ground truth, and the noiseless image.
    let mut body = vec![false; n];
    let mut dose = vec![0.0f32; n];
    let mut gt = vec![0u8; n];
    let mut image = vec![0.0f64; n];
    for v in 0..n {
        let idx = grid.coords(v);
        let p = grid.position_mm(idx);
        let mut q_body = 0.0;
        let mut q_dose = 0.0;
        for a in 0..3 {
            let db = (p[a] - center[a]) / semi[a];
            q_body += db * db;
            let dd = p[a] - dose_center[a];
            q_dose += dd * dd / (2.0 * sigma[a] * sigma[a]);
        }
        dose[v] = (spec.dose_peak_gy * (-q_dose).exp()) as f32;
        if q_body > 1.0 {
            continue;
        }
        body[v] = true;
        // Normalized distance to the nearest lesion center, in lesion radii.
        let mut rho_min = f64::INFINITY;
        for (lc, radii) in &lesions {
            let mut q = 0.0;
            for a in 0..3 {
                let d = (p[a] - lc[a]) / radii[a];
                q += d * d;
            }
            rho_min = rho_min.min(q.sqrt());
        }
        let mut value = spec.base_intensity;
        for a in 0..3 {
            value += spec.texture_amplitude / 3.0
                * (std::f64::consts::TAU * p[a] / wavelength[a] + phase[a]).cos();
        }
        if rho_min <= 1.0 {
            gt[v] = 1;
            value += spec.contrast * contrast_profile(spec.task, rho_min);
        }
        // Distractors carry the full lesion contrast with a flat profile,
        // so by brightness alone they are indistinguishable from lesions.
        let mut rho_distract = f64::INFINITY;
        for (dc, radii) in &distractors {
            let mut q = 0.0;
            for a in 0..3 {
                let d = (p[a] - dc[a]) / radii[a];
                q += d * d;
            }
            rho_distract = rho_distract.min(q.sqrt());
        }
        if rho_distract <= 1.0 {
            value += spec.contrast;
        }
        image[v] = value;
    }

    // Noise only inside the body, after all geometry, in linear order.
    for v in 0..n {
        if body[v] {
            image[v] += spec.noise_sigma * rng.normal();
        }
    }

    let gt_count = gt.iter().filter(|&&g| g != 0).count();
    if gt_count == 0 {
        return Err(Error::InfeasibleSpec {
            reason: "no lesion voxel landed on a grid point inside the body".into(),
        });
    }
    if (gt_count as f64) >= 0.02 * n as f64 {
        return Err(Error::InfeasibleSpec {
            reason: format!("lesions cover {gt_count} of {n} voxels, at or above the 2% bound"),
        });
    }

    let clinical = [
        ("lesion_profile", profile_name(spec.task)),
        ("lesion_count", if count == 1 { "1" } else { "2" }),
    ];
    let mut text = TextPromptRecord::for_task(spec.task);
    for (k, v) in clinical {
        text.clinical.insert(k.into(), v.into());
    }

    Ok(Case {
        image: Volume::new(grid.clone(), image.iter().map(|&x| x as f32).collect())?,
        dose: Volume::new(grid.clone(), dose)?,
        gt: Mask::new(grid, gt)?,
        text,
    })
}

/// True when the ellipsoid at `c` covers at least one voxel and every
/// voxel it covers has a relative dose inside the distractor band.
fn distractor_band_ok(
    grid: &Grid,
    c: &[f64; 3],
    radii: &[f64; 3],
    rel_dose: &impl Fn(&[f64; 3]) -> f64,
) -> bool {
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let l = ((c[a] - radii[a] - grid.origin_mm[a]) / grid.spacing_mm[a]).floor();
        let h = ((c[a] + radii[a] - grid.origin_mm[a]) / grid.spacing_mm[a]).ceil();
        if h < 0.0 || l > grid.dims[a] as f64 - 1.0 {
            return false;
        }
        lo[a] = l.max(0.0) as usize;
        hi[a] = h.min(grid.dims[a] as f64 - 1.0) as usize;
    }
    let mut any = false;
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                let p = grid.position_mm([i, j, k]);
                let mut q = 0.0;
                for a in 0..3 {
                    let d = (p[a] - c[a]) / radii[a];
                    q += d * d;
                }
                if q > 1.0 {
                    continue;
                }
                any = true;
                let rel = rel_dose(&p);
                if !(DISTRACTOR_DOSE_FLOOR..=DISTRACTOR_DOSE_CEILING).contains(&rel) {
                    return false;
                }
            }
        }
    }
    any
}

/// Contrast multiplier at normalized lesion radius rho (0 center, 1 edge).
fn contrast_profile(task: Task, rho: f64) -> f64 {
    match task {
        // Focal: a flat plateau.
        Task::Orn => 1.0,
        // Diffuse: bright core fading toward the edge.
        Task::Ce => 1.0 - 0.4 * rho,
        // Rim: bright annulus over a faint core.
        Task::Crn => {
            if rho >= 0.55 {
                1.0
            } else {
                0.25
            }
        }
    }
}

fn profile_name(task: Task) -> &'static str {
    match task {
        Task::Orn => "focal",
        Task::Ce => "diffuse",
        Task::Crn => "rim",
    }
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Which augmentation steps run and their parameter ranges. Steps always
/// draw and apply in a fixed order: flip, affine, noise, blur, gamma.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip: bool,
    pub affine: bool,
    pub noise: bool,
    pub blur: bool,
    pub gamma: bool,
    /// Largest rotation magnitude, degrees.
    pub max_rotation_deg: f64,
    /// Isotropic scale range.
    pub scale_range: (f64, f64),
    /// Noise sigma as a fraction of the in-body intensity spread.
    pub noise_sigma_frac: f64,
    /// Largest blur sigma, voxels.
    pub max_blur_sigma_vox: f64,
    /// Gamma exponent range.
    pub gamma_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip: true,
            affine: true,
            noise: true,
            blur: true,
            gamma: true,
            max_rotation_deg: 10.0,
            scale_range: (0.9, 1.1),
            noise_sigma_frac: 0.1,
            max_blur_sigma_vox: 1.0,
            gamma_range: (0.7, 1.4),
        }
    }
}

/// Mirror the case along the chosen axes. Pure index permutation, so
/// applying the same flips twice restores the original exactly.
pub fn flip_case(case: &Case, axes: [bool; 3]) -> Case {
    let grid = &case.image.grid;
    let map = |v: usize| -> usize {
        let mut c = grid.coords(v);
        for a in 0..3 {
            if axes[a] {
                c[a] = grid.dims[a] - 1 - c[a];
            }
        }
        grid.linear(c)
    };
    let n = grid.voxel_count();
    let mut image = vec![0.0f32; n];
    let mut dose = vec![0.0f32; n];
    let mut gt = vec![0u8; n];
    for v in 0..n {
        let src = map(v);
        image[v] = case.image.data()[src];
        dose[v] = case.dose.data()[src];
        gt[v] = case.gt.data()[src];
    }
    Case {
        image: Volume::new(grid.clone(), image).expect("permutation keeps values"),
        dose: Volume::new(grid.clone(), dose).expect("permutation keeps values"),
        gt: Mask::new(grid.clone(), gt).expect("permutation keeps values"),
        text: case.text.clone(),
    }
}

/// Trilinear sample at continuous voxel coordinates, clamped to the edge.
fn sample_trilinear(data: &[f32], grid: &Grid, u: [f64; 3]) -> f64 {
    let mut lo = [0usize; 3];
    let mut t = [0.0f64; 3];
    for a in 0..3 {
        let max = grid.dims[a] as f64 - 1.0;
        let x = u[a].clamp(0.0, max);
        let f = x.floor();
        lo[a] = f as usize;
        t[a] = x - f;
    }
    let mut acc = 0.0f64;
    for dz in 0..2usize {
        let wz = if dz == 0 { 1.0 - t[2] } else { t[2] };
        if wz == 0.0 {
            continue;
        }
        let k = (lo[2] + dz).min(grid.dims[2] - 1);
        for dy in 0..2usize {
            let wy = if dy == 0 { 1.0 - t[1] } else { t[1] };
            if wy == 0.0 {
                continue;
            }
            let j = (lo[1] + dy).min(grid.dims[1] - 1);
            for dx in 0..2usize {
                let wx = if dx == 0 { 1.0 - t[0] } else { t[0] };
                if wx == 0.0 {
                    continue;
                }
                let i = (lo[0] + dx).min(grid.dims[0] - 1);
                acc += wz * wy * wx * f64::from(data[grid.linear([i, j, k])]);
            }
        }
    }
    acc
}

/// Nearest-neighbor sample at continuous voxel coordinates (round half up).
fn sample_nearest(data: &[u8], grid: &Grid, u: [f64; 3]) -> u8 {
    let mut idx = [0usize; 3];
    for a in 0..3 {
        let max = grid.dims[a] as f64 - 1.0;
        let x = u[a].clamp(0.0, max);
        let f = x.floor();
        let t = x - f;
        let i = if t < 0.5 { f as usize } else { (f as usize + 1).min(grid.dims[a] - 1) };
        idx[a] = i;
    }
    data[grid.linear(idx)]
}

/// Rotate by `angle_deg` about the given principal axis and scale
/// isotropically about the grid center; image and dose resample trilinearly,
/// the label nearest-neighbor, all clamped to the edge.
pub fn affine_case(case: &Case, axis: usize, angle_deg: f64, scale: f64) -> Result<Case> {
    if axis > 2 {
        return Err(Error::InvalidArgument {
            name: "axis",
            reason: format!("must be 0, 1, or 2, got {axis}"),
        });
    }
    if !(scale.is_finite() && scale > 0.0) || !angle_deg.is_finite() {
        return Err(Error::InvalidArgument {
            name: "affine",
            reason: format!("bad angle {angle_deg} or scale {scale}"),
        });
    }
    let grid = &case.image.grid;
    let center = grid_center_mm(grid);
    let theta = -angle_deg.to_radians(); // inverse rotation
    let (sin, cos) = theta.sin_cos();
    let (a1, a2) = match axis {
        0 => (1, 2),
        1 => (2, 0),
        _ => (0, 1),
    };
    let n = grid.voxel_count();
    let mut image = vec![0.0f32; n];
    let mut dose = vec![0.0f32; n];
    let mut gt = vec![0u8; n];
    for v in 0..n {
        let p = grid.position_mm(grid.coords(v));
        let mut d = [0.0f64; 3];
        for a in 0..3 {
            d[a] = (p[a] - center[a]) / scale;
        }
        let (r1, r2) = (cos * d[a1] - sin * d[a2], sin * d[a1] + cos * d[a2]);
        d[a1] = r1;
        d[a2] = r2;
        let mut u = [0.0f64; 3];
        for a in 0..3 {
            u[a] = (d[a] + center[a] - grid.origin_mm[a]) / grid.spacing_mm[a];
        }
        image[v] = sample_trilinear(case.image.data(), grid, u) as f32;
        dose[v] = sample_trilinear(case.dose.data(), grid, u) as f32;
        gt[v] = sample_nearest(case.gt.data(), grid, u);
    }
    Ok(Case {
        image: Volume::new(grid.clone(), image)?,
        dose: Volume::new(grid.clone(), dose)?,
        gt: Mask::new(grid.clone(), gt)?,
        text: case.text.clone(),
    })
}

/// In-body intensity spread (population std over nonzero voxels).
fn nonzero_std(data: &[f32]) -> Option<f64> {
    let nz: Vec<f64> = data.iter().filter(|&&x| x != 0.0).map(|&x| f64::from(x)).collect();
    if nz.is_empty() {
        return None;
    }
    let mean = nz.iter().sum::<f64>() / nz.len() as f64;
    let var = nz.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / nz.len() as f64;
    Some(var.sqrt())
}

/// Add Gaussian noise to nonzero (in-body) image voxels only.
pub fn noise_image(case: &Case, sigma: f64, rng: &mut SeededRng) -> Result<Case> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument {
            name: "sigma",
            reason: format!("must be non-negative, got {sigma}"),
        });
    }
    let mut image = case.image.data().to_vec();
    for x in &mut image {
        if *x != 0.0 {
            *x = (f64::from(*x) + sigma * rng.normal()) as f32;
        }
    }
    Ok(Case {
        image: Volume::new(case.image.grid.clone(), image)?,
        dose: case.dose.clone(),
        gt: case.gt.clone(),
        text: case.text.clone(),
    })
}

/// Separable Gaussian blur of the image, normalized over the nonzero
/// support so air stays exactly zero and the body edge is not darkened.
pub fn blur_image(case: &Case, sigma_vox: f64) -> Result<Case> {
    if !(sigma_vox.is_finite() && sigma_vox >= 0.0) {
        return Err(Error::InvalidArgument {
            name: "sigma_vox",
            reason: format!("must be non-negative, got {sigma_vox}"),
        });
    }
    let grid = &case.image.grid;
    if sigma_vox == 0.0 {
        return Ok(case.clone());
    }
    let radius = (3.0 * sigma_vox).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / ksum).collect();

    let n = grid.voxel_count();
    let mut num: Vec<f64> = case.image.data().iter().map(|&x| f64::from(x)).collect();
    let mut den: Vec<f64> = case.image.data().iter().map(|&x| f64::from(x != 0.0)).collect();
    let dims = grid.dims;
    for axis in 0..3 {
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        let len = dims[axis];
        let mut out_num = vec![0.0f64; n];
        let mut out_den = vec![0.0f64; n];
        for v in 0..n {
            let pos = grid.coords(v)[axis] as isize;
            let mut acc_n = 0.0;
            let mut acc_d = 0.0;
            for (ki, w) in kernel.iter().enumerate() {
                let q = pos + ki as isize - radius;
                let q = q.clamp(0, len as isize - 1);
                let src = (v as isize + (q - pos) * stride as isize) as usize;
                acc_n += w * num[src];
                acc_d += w * den[src];
            }
            out_num[v] = acc_n;
            out_den[v] = acc_d;
        }
        num = out_num;
        den = out_den;
    }
    let image: Vec<f32> = case
        .image
        .data()
        .iter()
        .enumerate()
        .map(|(v, &orig)| {
            if orig != 0.0 && den[v] > 0.0 {
                (num[v] / den[v]) as f32
            } else if orig != 0.0 {
                orig
            } else {
                0.0
            }
        })
        .collect();
    Ok(Case {
        image: Volume::new(grid.clone(), image)?,
        dose: case.dose.clone(),
        gt: case.gt.clone(),
        text: case.text.clone(),
    })
}

/// Gamma-remap the nonzero image intensities: normalize the in-body range
/// to [0, 1], raise to `gamma`, and map back. Monotone, so intensity order
/// inside the body is preserved; air stays zero.
pub fn gamma_image(case: &Case, gamma: f64) -> Result<Case> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument {
            name: "gamma",
            reason: format!("must be positive, got {gamma}"),
        });
    }
    let nz: Vec<f64> = case.image.data().iter().filter(|&&x| x != 0.0).map(|&x| f64::from(x)).collect();
    if nz.is_empty() {
        return Ok(case.clone());
    }
    let lo = nz.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = nz.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(case.clone());
    }
    let image: Vec<f32> = case
        .image
        .data()
        .iter()
        .map(|&x| {
            if x == 0.0 {
                0.0
            } else {
                let t = (f64::from(x) - lo) / (hi - lo);
                (t.powf(gamma) * (hi - lo) + lo) as f32
            }
        })
        .collect();
    Ok(Case {
        image: Volume::new(case.image.grid.clone(), image)?,
        dose: case.dose.clone(),
        gt: case.gt.clone(),
        text: case.text.clone(),
    })
}

/// Apply the configured augmentation pipeline with parameters drawn from
/// `rng` in a fixed order: flip, affine, noise, blur, gamma.
pub fn augment(case: &Case, cfg: &AugmentConfig, rng: &mut SeededRng) -> Result<Case> {
    let mut out = case.clone();
    if cfg.flip {
        let axes = [rng.bernoulli(0.5), rng.bernoulli(0.5), rng.bernoulli(0.5)];
        out = flip_case(&out, axes);
    }
    if cfg.affine {
        let axis = rng.range_usize(3);
        let angle = rng.range_f64(-cfg.max_rotation_deg, cfg.max_rotation_deg);
        let scale = rng.range_f64(cfg.scale_range.0, cfg.scale_range.1);
        out = affine_case(&out, axis, angle, scale)?;
    }
    if cfg.noise {
        let spread = nonzero_std(out.image.data()).unwrap_or(0.0);
        let sigma = cfg.noise_sigma_frac * spread;
        out = noise_image(&out, sigma, rng)?;
    }
    if cfg.blur {
        let sigma = rng.range_f64(0.3, cfg.max_blur_sigma_vox.max(0.3));
        out = blur_image(&out, sigma)?;
    }
    if cfg.gamma {
        let gamma = rng.range_f64(cfg.gamma_range.0, cfg.gamma_range.1);
        out = gamma_image(&out, gamma)?;
    }
    Ok(out)
}
