//! Software laboratory for Tensor-Core-style mixed-precision GEMM.
//!
//! The crate emulates the block multiply-accumulate of a matrix unit with
//! FP16/TF32 inputs and a truncating 25-bit accumulator, bit for bit, and
//! compares single-precision GEMM recipes built on top of it: the plain
//! low-precision product, the classic four-term split correction, and the
//! three-term corrected scheme that accumulates the main term outside the
//! unit with round-to-nearest.
//!
//! Module map:
//!
//! - [`fpkit`]: formats, rounding modes and exact rounding in an `f64` carrier
//! - [`split`]: hi/lo decompositions of FP32 values
//! - [`mma_emu`]: the emulated multiply-accumulate unit
//! - [`gemm_lab`]: GEMM schemes and the comparison experiments
//! - [`analysis`]: exact mantissa-length and underflow statistics, residuals
//! - [`genmat`]: seeded matrix generators
//! - [`cli`]: the experiment harness behind the `tcgemm` binary

pub mod analysis;
pub mod cli;
pub mod error;
pub mod fpkit;
pub mod gemm_lab;
pub mod genmat;
pub mod matrix;
pub mod mma_emu;
pub mod split;

pub use error::{Error, Result};
pub use fpkit::{FloatFormat, RoundingMode};
pub use matrix::{Matrix, Scalar};

/// Single-precision matrix, the input and output type of every scheme.
pub type Matrix32 = Matrix<f32>;
/// Double-precision matrix; also used as the exact carrier for low-precision values.
pub type Matrix64 = Matrix<f64>;
/// Exact probability. Every probability in this crate is dyadic with a small
/// denominator.
pub type Probability = num_rational::Ratio<u64>;
