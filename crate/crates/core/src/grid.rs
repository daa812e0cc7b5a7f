//! Regular voxel grids and the volume/mask types that live on them.
//!
//! All data buffers are flat with x fastest: linear index
//! `i + nx * (j + ny * k)` for voxel `[i, j, k]`. Physical positions are
//! voxel centers at `origin_mm + index * spacing_mm` per axis.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Integer voxel coordinate `[i, j, k]`.
pub type VoxelIndex = [usize; 3];

/// Geometry of a regular grid: dimensions, spacing, and physical origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Voxel counts per axis, all positive.
    pub dims: [usize; 3],
    /// Voxel spacing in mm per axis, all positive and finite.
    pub spacing_mm: [f64; 3],
    /// Physical position of voxel [0, 0, 0] in mm.
    pub origin_mm: [f64; 3],
}

impl Grid {
    /// Validated constructor.
    pub fn new(dims: [usize; 3], spacing_mm: [f64; 3], origin_mm: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidDims { dims });
        }
        if spacing_mm.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidSpacing {
                spacing: spacing_mm,
            });
        }
        if origin_mm.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "origin_mm",
                reason: format!("must be finite, got {origin_mm:?}"),
            });
        }
        Ok(Grid {
            dims,
            spacing_mm,
            origin_mm,
        })
    }

    /// Isotropic grid at `spacing` mm with origin 0.
    pub fn isotropic(dims: [usize; 3], spacing: f64) -> Result<Self> {
        Grid::new(dims, [spacing; 3], [0.0; 3])
    }

    /// Total voxel count.
    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index of `[i, j, k]` (x fastest).
    #[inline]
    pub fn linear(&self, idx: VoxelIndex) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    /// Inverse of [`Grid::linear`].
    #[inline]
    pub fn coords(&self, linear: usize) -> VoxelIndex {
        let i = linear % self.dims[0];
        let rest = linear / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Whether `idx` lies inside the grid.
    #[inline]
    pub fn contains(&self, idx: [isize; 3]) -> bool {
        (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < self.dims[a])
    }

    /// Physical position (mm) of the voxel center.
    pub fn position_mm(&self, idx: VoxelIndex) -> [f64; 3] {
        [
            self.origin_mm[0] + idx[0] as f64 * self.spacing_mm[0],
            self.origin_mm[1] + idx[1] as f64 * self.spacing_mm[1],
            self.origin_mm[2] + idx[2] as f64 * self.spacing_mm[2],
        ]
    }

    /// Euclidean distance in mm between two voxel centers.
    pub fn distance_mm(&self, a: VoxelIndex, b: VoxelIndex) -> f64 {
        let mut sq = 0.0;
        for axis in 0..3 {
            let d = (a[axis] as f64 - b[axis] as f64) * self.spacing_mm[axis];
            sq += d * d;
        }
        sq.sqrt()
    }

    /// Error unless `self` and `other` agree on dims, spacing, and origin.
    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::grid_mismatch(
                format!("{:?}", self),
                format!("{:?}", other),
            ))
        }
    }
}

/// Neighborhood used for connectivity and surface extraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Face and edge neighbors.
    Eighteen,
    /// Face, edge, and corner neighbors.
    TwentySix,
}

impl Connectivity {
    /// Offsets of the neighborhood, excluding the center voxel.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let nonzero = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => nonzero == 1,
                        Connectivity::Eighteen => (1..=2).contains(&nonzero),
                        Connectivity::TwentySix => nonzero >= 1,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    /// Parse "6" / "18" / "26".
    pub fn from_degree(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidArgument {
                name: "connectivity",
                reason: format!("must be 6, 18, or 26, got {other}"),
            }),
        }
    }
}

/// Scalar field on a grid (image intensities, dose in Gy). Values are finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub grid: Grid,
    data: Vec<f32>,
}

/// Binary field on a grid; every value is 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub grid: Grid,
    data: Vec<u8>,
}

/// Per-voxel probabilities in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVolume {
    pub grid: Grid,
    data: Vec<f32>,
}

impl Volume {
    /// Validated constructor: length must match the grid, values finite.
    pub fn new(grid: Grid, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::DataLength {
                got: data.len(),
                expected: grid.voxel_count(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Volume { grid, data })
    }

    /// Constant-valued volume.
    pub fn filled(grid: Grid, value: f32) -> Result<Self> {
        let n = grid.voxel_count();
        Volume::new(grid, vec![value; n])
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access for construction loops; callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, idx: VoxelIndex) -> f32 {
        self.data[self.grid.linear(idx)]
    }
}

impl Mask {
    /// Validated constructor: length must match the grid, values 0/1.
    pub fn new(grid: Grid, data: Vec<u8>) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::DataLength {
                got: data.len(),
                expected: grid.voxel_count(),
            });
        }
        if let Some(index) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMaskValue {
                index,
                value: data[index],
            });
        }
        Ok(Mask { grid, data })
    }

    /// All-background mask.
    pub fn empty(grid: Grid) -> Self {
        let n = grid.voxel_count();
        Mask { grid, data: vec![0; n] }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Mutable access for construction loops; callers must keep values 0/1.
    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, idx: VoxelIndex) -> bool {
        self.data[self.grid.linear(idx)] != 0
    }

    pub fn set(&mut self, idx: VoxelIndex, on: bool) {
        let linear = self.grid.linear(idx);
        self.data[linear] = u8::from(on);
    }

    /// Number of foreground voxels.
    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Linear indices of foreground voxels in ascending order.
    pub fn foreground_indices(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| (v != 0).then_some(i))
            .collect()
    }
}

impl ProbVolume {
    /// Validated constructor: length must match the grid, values in [0, 1].
    pub fn new(grid: Grid, data: Vec<f32>) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::DataLength {
                got: data.len(),
                expected: grid.voxel_count(),
            });
        }
        if let Some(index) = data.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidProbability {
                index,
                value: data[index],
            });
        }
        Ok(ProbVolume { grid, data })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, idx: VoxelIndex) -> f32 {
        self.data[self.grid.linear(idx)]
    }
}

/// Axis-aligned box prompt on a voxel grid; both corners are inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxPrompt3D {
    pub corner_min: VoxelIndex,
    pub corner_max: VoxelIndex,
}

impl BoxPrompt3D {
    /// Validated constructor: `corner_min <= corner_max` per axis.
    pub fn new(corner_min: VoxelIndex, corner_max: VoxelIndex) -> Result<Self> {
        if (0..3).any(|a| corner_min[a] > corner_max[a]) {
            return Err(Error::InvalidArgument {
                name: "box corners",
                reason: format!("corner_min {corner_min:?} exceeds corner_max {corner_max:?}"),
            });
        }
        Ok(BoxPrompt3D {
            corner_min,
            corner_max,
        })
    }

    /// Whether the voxel lies inside the box (inclusive).
    #[inline]
    pub fn contains(&self, idx: VoxelIndex) -> bool {
        (0..3).all(|a| self.corner_min[a] <= idx[a] && idx[a] <= self.corner_max[a])
    }

    /// Whether `other` lies entirely inside `self`.
    pub fn contains_box(&self, other: &BoxPrompt3D) -> bool {
        self.contains(other.corner_min) && self.contains(other.corner_max)
    }

    /// Euclidean distance in mm from a voxel center to the nearest voxel
    /// center inside the box; zero for voxels inside it.
    pub fn distance_mm(&self, idx: VoxelIndex, spacing_mm: [f64; 3]) -> f64 {
        let mut sq = 0.0;
        for a in 0..3 {
            let i = idx[a] as f64;
            let lo = self.corner_min[a] as f64;
            let hi = self.corner_max[a] as f64;
            let d = if i < lo {
                lo - i
            } else if i > hi {
                i - hi
            } else {
                0.0
            } * spacing_mm[a];
            sq += d * d;
        }
        sq.sqrt()
    }
}
