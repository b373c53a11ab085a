//! Nonlocal-in-time fractional heat equation with memory: kernels, the
//! master operator, a mild (Duhamel) solver, the extension solver and the
//! numerical lab built on top of them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod error;
pub mod extension_solver;
pub mod fractional_ops;
pub mod grid;
pub mod kernels;
pub mod lab;
pub mod memory;
pub mod mild_solver;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
pub use grid::{BoxSpec, PeriodicGrid};
pub use kernels::KernelParams;
pub use memory::{Bounded, MemoryData};
