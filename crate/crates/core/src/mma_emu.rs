//! Emulated matrix multiply-accumulate unit, `D = A·B + C`.
//!
//! Per output element the products are accumulated in ascending `k` into a
//! register that keeps `acc_significand_bits` significant bits (truncated
//! after every addition), and `C` is added last with one terminal rounding
//! to FP32. Terminal RZ models the hardware; terminal RN models a unit that
//! rounds to nearest on write-back.


use crate::error::{Error, Result};
use crate::fpkit::{round_sum_significand, round_sum_to_format, FloatFormat, RoundingMode};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmaConfig {
    pub input_format: FloatFormat,
    pub acc_significand_bits: u32,
    pub step_rounding: RoundingMode,
    pub terminal_rounding: RoundingMode,
    pub block_k: usize,
}

impl Default for MmaConfig {
    fn default() -> Self {
        MmaConfig {
            input_format: FloatFormat::FP16,
            acc_significand_bits: 25,
            step_rounding: RoundingMode::TowardZero,
            terminal_rounding: RoundingMode::TowardZero,
            block_k: 16,
        }
    }
}

impl MmaConfig {
    pub fn fp16() -> Self {
        MmaConfig::default()
    }

    pub fn tf32() -> Self {
        MmaConfig {
            input_format: FloatFormat::TF32,
            ..MmaConfig::default()
        }
    }

    pub fn with_input_format(self, input_format: FloatFormat) -> Self {
        MmaConfig {
            input_format,
            ..self
        }
    }

    pub fn with_terminal(self, terminal_rounding: RoundingMode) -> Self {
        MmaConfig {
            terminal_rounding,
            ..self
        }
    }

    pub fn with_block_k(self, block_k: usize) -> Self {
        MmaConfig { block_k, ..self }
    }

    pub fn with_acc_bits(self, acc_significand_bits: u32) -> Self {
        MmaConfig {
            acc_significand_bits,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_k == 0 {
            return Err(Error::Unsupported("block_k must be at least 1".into()));
        }
        if !(1..=53).contains(&self.acc_significand_bits) {
            return Err(Error::Unsupported(format!(
                "accumulator width {} outside [1, 53]",
                self.acc_significand_bits
            )));
        }
        if self.input_format.precision() > 26 {
            return Err(Error::Unsupported(
                "input format too wide for exact products in the carrier".into(),
            ));
        }
        Ok(())
    }
}

/// A matrix tile whose elements all belong to one format.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    format: FloatFormat,
    data: Matrix<f64>,
}

impl Fragment {
    pub fn new(format: FloatFormat, data: Matrix<f64>) -> Result<Self> {
        if let Some((idx, v)) = data
            .iter()
            .enumerate()
            .find(|(_, &v)| !format.contains(v))
        {
            return Err(Error::Domain(format!(
                "element {idx} = {v:e} is not a member of the fragment format"
            )));
        }
        Ok(Fragment { format, data })
    }

    /// FP32 accumulator fragment.
    pub fn accumulator(data: &Matrix<f32>) -> Self {
        Fragment {
            format: FloatFormat::FP32,
            data: data.to_f64(),
        }
    }

    pub fn zeros_accumulator(rows: usize, cols: usize) -> Self {
        Fragment {
            format: FloatFormat::FP32,
            data: Matrix::zeros(rows, cols),
        }
    }

    pub fn format(&self) -> FloatFormat {
        self.format
    }

    pub fn data(&self) -> &Matrix<f64> {
        &self.data
    }

    pub fn into_data(self) -> Matrix<f64> {
        self.data
    }

    pub fn to_f32(&self) -> Matrix<f32> {
        self.data.map(|&v| v as f32)
    }
}

/// One output element: `terminal(trunc(...trunc(a0*b0) + a1*b1 ...) + c)`.
///
/// `a` yields the row of A, `b` the column of B, both restricted to the
/// block. Products of two inputs of at most 26 significant bits are exact
/// in the carrier.
#[inline]
pub(crate) fn mma_element(
    a: impl Iterator<Item = f64>,
    b: impl Iterator<Item = f64>,
    c: f64,
    cfg: &MmaConfig,
) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.zip(b) {
        let p = x * y;
        debug_assert_eq!(x.mul_add(y, -p), 0.0, "inexact product {x:e} * {y:e}");
        acc = round_sum_significand(acc, p, cfg.acc_significand_bits, cfg.step_rounding);
    }
    round_sum_to_format(acc, c, FloatFormat::FP32, cfg.terminal_rounding)
}

fn check_inputs(a: &Fragment, b: &Fragment, c: &Fragment, cfg: &MmaConfig) -> Result<()> {
    cfg.validate()?;
    let (m, k) = a.data.shape();
    let (kb, n) = b.data.shape();
    if k != kb || c.data.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "mma shapes A {m}x{k}, B {kb}x{n}, C {}x{}",
            c.data.rows(),
            c.data.cols()
        )));
    }
    if k > cfg.block_k {
        return Err(Error::Dimension(format!(
            "block depth {k} exceeds block_k {}",
            cfg.block_k
        )));
    }
    if a.format != cfg.input_format || b.format != cfg.input_format {
        return Err(Error::Domain(
            "A and B fragments must be in the configured input format".into(),
        ));
    }
    if c.format != FloatFormat::FP32 {
        return Err(Error::Domain("C fragment must hold FP32 values".into()));
    }
    Ok(())
}

/// `D = A·B + C` on one block.
pub fn emu_mma(a: &Fragment, b: &Fragment, c: &Fragment, cfg: &MmaConfig) -> Result<Fragment> {
    check_inputs(a, b, c, cfg)?;
    let (m, k) = a.data.shape();
    let n = b.data.cols();
    let data = Matrix::par_from_fn(m, n, |i, j| {
        mma_element(
            (0..k).map(|t| a.data.at(i, t)),
            (0..k).map(|t| b.data.at(t, j)),
            c.data.at(i, j),
            cfg,
        )
    });
    Ok(Fragment {
        format: FloatFormat::FP32,
        data,
    })
}

/// Feeds the accumulator back through consecutive k-blocks, as a kernel
/// looping over `mma_sync(c, a, b, c)` does.
pub fn emu_mma_chain(
    a_blocks: &[Fragment],
    b_blocks: &[Fragment],
    c0: &Matrix<f32>,
    cfg: &MmaConfig,
) -> Result<Matrix<f32>> {
    if a_blocks.len() != b_blocks.len() {
        return Err(Error::Dimension(format!(
            "{} A blocks but {} B blocks",
            a_blocks.len(),
            b_blocks.len()
        )));
    }
    let mut c = Fragment::accumulator(c0);
    for (a, b) in a_blocks.iter().zip(b_blocks) {
        c = emu_mma(a, b, &c, cfg)?;
    }
    Ok(c.to_f32())
}

/// Cuts `a` (m×k) and `b` (k×n) into `block_k`-deep fragments, zero-padding
/// the last block. Elements must already be in `format`.
pub fn block_fragments(
    a: &Matrix<f64>,
    b: &Matrix<f64>,
    format: FloatFormat,
    block_k: usize,
) -> Result<(Vec<Fragment>, Vec<Fragment>)> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if block_k == 0 {
        return Err(Error::Unsupported("block_k must be at least 1".into()));
    }
    let k = a.cols();
    let padded = k.div_ceil(block_k) * block_k;
    let a = a.pad_cols(padded);
    let b = b.pad_rows(padded);
    let mut a_blocks = Vec::new();
    let mut b_blocks = Vec::new();
    for start in (0..padded).step_by(block_k) {
        a_blocks.push(Fragment::new(format, a.col_block(start, start + block_k))?);
        b_blocks.push(Fragment::new(format, b.row_block(start, start + block_k))?);
    }
    Ok((a_blocks, b_blocks))
}
