//! Error type shared by every module in the crate.

use thiserror::Error;

/// All failure modes surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid dimensions must all be at least 1.
    #[error("grid dims must be positive, got {dims:?}")]
    InvalidDims { dims: [usize; 3] },

    /// Voxel spacing must be positive and finite on every axis.
    #[error("voxel spacing must be positive and finite, got {spacing:?} mm")]
    InvalidSpacing { spacing: [f64; 3] },

    /// Data buffer length does not match the grid's voxel count.
    #[error("data length {got} does not match grid voxel count {expected}")]
    DataLength { got: usize, expected: usize },

    /// Volumes must hold finite values only.
    #[error("non-finite value at linear index {index}")]
    NonFiniteValue { index: usize },

    /// Masks are strictly 0/1.
    #[error("mask value {value} at linear index {index}; masks must be 0 or 1")]
    InvalidMaskValue { index: usize, value: u8 },

    /// Probability volumes must stay within [0, 1].
    #[error("probability {value} at linear index {index} is outside [0, 1]")]
    InvalidProbability { index: usize, value: f32 },

    /// Two inputs that must share dims/spacing/origin do not.
    #[error("grid mismatch between {left} and {right}")]
    GridMismatch { left: String, right: String },

    /// An operation that needs foreground voxels got an all-background mask.
    #[error("mask has no foreground voxels")]
    EmptyMask,

    /// Normalization over nonzero voxels found none.
    #[error("volume has no nonzero voxels")]
    EmptyForeground,

    /// Nonzero voxels all share one intensity; z-scoring is undefined.
    #[error("nonzero voxels have zero intensity spread")]
    DegenerateIntensity,

    /// A dose field with no strictly positive voxel cannot guide a prompt.
    #[error("dose field has no positive voxels")]
    NoDose,

    /// The dose threshold fraction is outside its valid range.
    #[error("tau must be in (0, 1], got {tau}")]
    InvalidTau { tau: f64 },

    /// Surface distances are undefined when either mask is empty.
    #[error("surface distance undefined: {side} mask is empty")]
    UndefinedDistance { side: &'static str },

    /// Loss parameters failed validation.
    #[error("invalid loss parameters: {reason}")]
    InvalidLossParams { reason: String },

    /// A scalar argument failed validation.
    #[error("invalid argument {name}: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// A volume file is malformed (bad header, wrong payload size, ...).
    #[error("{path}: malformed volume file: {reason}")]
    Format { path: String, reason: String },

    /// Filesystem-level failure, tagged with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure, tagged with the offending path.
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    /// A model file failed validation.
    #[error("invalid model: {reason}")]
    InvalidModel { reason: String },

    /// The phantom spec cannot produce a valid case.
    #[error("infeasible phantom spec: {reason}")]
    InfeasibleSpec { reason: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    TrainingDiverged { epoch: usize, loss: f64 },
}

impl Error {
    /// Grid-mismatch error from two short descriptions of the offending grids.
    pub fn grid_mismatch(left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::GridMismatch {
            left: left.into(),
            right: right.into(),
        }
    }
}
