//! Numerical study of a wave equation on `(-1, 0)` coupled at `x = 0` to a
//! Coleman-Gurtin heat equation with memory on `(0, 1)`.
//!
//! The numerics are generic over the real scalar type ([`scalar::Real`]); the
//! aliases at the crate root fix it to `f64`.

// Index loops mirror the stencils; `!(x > 0)` deliberately also rejects NaN;
// generic scalars do not all provide the compound assignment operators.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::assign_op_pattern)]

pub mod error;
pub mod evolve;
pub mod kernel;
pub mod linalg;
pub mod operator;
pub mod resolvent;
pub mod scalar;
pub mod spectrum;
pub mod symbols;

pub use error::{Error, Result};

pub type Complex64 = num_complex::Complex<f64>;
pub type Kernel = kernel::MemoryKernel<f64>;
pub type Generator = operator::GeneratorMatrix<f64>;
pub type History = operator::HistoryGrid<f64>;
