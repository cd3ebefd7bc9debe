//! Slice-level numeric kernels behind the differentiable ops.

pub mod conv;
pub mod interp;
pub mod norm;
pub mod pool;
