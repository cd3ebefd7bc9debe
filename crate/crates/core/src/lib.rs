//! Mesh network (MNet) for anisotropic volumetric segmentation.
//!
//! The crate is `no_std` + `alloc`. The `std` feature (default) enables
//! runtime CPU dispatch in the GEMM backend; `parallel` splits kernels across
//! a rayon pool without changing any result.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is how validation rejects NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod graph;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod param;
pub mod tensor;
pub mod training;

mod par;

pub use autodiff::{Elementwise, Gradients, OpKind, Tape, Var};
pub use error::{Error, Result};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::{Real, Shape, Tensor};
