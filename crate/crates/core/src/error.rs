use alloc::string::String;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("tensor rank {got} unsupported (expected 1..=5, or 5 for volumetric ops)")]
    Rank { got: usize },
    #[error("axis {axis} has zero extent")]
    ZeroExtent { axis: usize },
    #[error("buffer holds {actual} elements but the shape needs {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("expected a one-element tensor, got shape {shape}")]
    NotScalar { shape: Shape },
    #[error("{op}: {axis} extent mismatch (expected {expected}, got {actual})")]
    AxisMismatch { op: &'static str, axis: &'static str, expected: usize, actual: usize },
    #[error("{op}: shapes {left} and {right} differ")]
    ShapeMismatch { op: &'static str, left: Shape, right: Shape },
    #[error("{op}: output extent along {axis} would be {extent}")]
    NonPositiveExtent { op: &'static str, axis: &'static str, extent: isize },
    #[error("conv3d: kernel extent {extent} along {axis} is not odd")]
    EvenKernel { axis: &'static str, extent: usize },
    #[error("maxpool3d: window {window} exceeds extent {extent} along {axis}")]
    WindowTooLarge { axis: &'static str, window: usize, extent: usize },
    #[error("channel range {start}..{} outside 0..{channels}", start + len)]
    ChannelRange { start: usize, len: usize, channels: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("depth {depth} outside 1..={max}")]
    DepthOutOfRange { depth: usize, max: usize },
    #[error("invalid subnet path: {0}")]
    InvalidPath(String),
    #[error("input extent {extent} along {axis} cannot survive {poolings} poolings (need >= {min})")]
    InputTooSmall { axis: &'static str, extent: usize, poolings: usize, min: usize },
    #[error("node ({row},{col}): block input has {actual} channels, schedule expects {expected}")]
    ChannelSchedule { row: usize, col: usize, expected: usize, actual: usize },
    #[error("unknown parameter id {0}")]
    UnknownParam(usize),
    #[error("missing output branch {0}")]
    MissingBranch(String),
    #[error("non-finite loss {loss} at epoch {epoch}, iteration {iteration}")]
    Divergence { epoch: usize, iteration: usize, loss: f64 },
    #[error("need at least {min} cases, got {got}")]
    TooFewCases { got: usize, min: usize },
    #[error("organ with radii {radii_mm:?} mm does not fit in a field of view of {fov_mm:?} mm")]
    OrganDoesNotFit { radii_mm: [f64; 3], fov_mm: [f64; 3] },
}
