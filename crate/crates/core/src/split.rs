//! Two-term decompositions of FP32 values into low-precision pairs.
//!
//! `hi = round(v)` and `lo = round((v - hi) * 2^s)` in the scheme's format,
//! so `v ≈ hi + lo * 2^-s`. The residual `v - hi` is formed in the `f64`
//! carrier, where it is always exact.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fpkit::{
    exp2i, exponent_of, ldexp, round_to_format, two_sum, FloatFormat, RoundingMode,
};
use crate::matrix::Matrix;

/// Scale applied to the residual by the scaled halfhalf split (`l_F16 + 1`).
pub const HALFHALF_SCALE_LOG2: i32 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitScheme {
    /// FP16 hi and lo, unscaled residual.
    MarkidisHalfHalf(RoundingMode),
    /// FP16 hi and lo, residual scaled by 2^11 before conversion.
    ScaledHalfHalf(RoundingMode),
    /// TF32 hi and lo, unscaled residual.
    Tf32Tf32(RoundingMode),
}

impl SplitScheme {
    /// Defaults: RN for FP16 conversions, RNA for TF32.
    pub const MARKIDIS: SplitScheme = SplitScheme::MarkidisHalfHalf(RoundingMode::NearestEven);
    pub const HALFHALF: SplitScheme = SplitScheme::ScaledHalfHalf(RoundingMode::NearestEven);
    pub const TF32TF32: SplitScheme = SplitScheme::Tf32Tf32(RoundingMode::NearestAway);

    pub fn format(self) -> FloatFormat {
        match self {
            SplitScheme::MarkidisHalfHalf(_) | SplitScheme::ScaledHalfHalf(_) => FloatFormat::FP16,
            SplitScheme::Tf32Tf32(_) => FloatFormat::TF32,
        }
    }

    pub fn scale_log2(self) -> i32 {
        match self {
            SplitScheme::ScaledHalfHalf(_) => HALFHALF_SCALE_LOG2,
            _ => 0,
        }
    }

    pub fn rounding(self) -> RoundingMode {
        match self {
            SplitScheme::MarkidisHalfHalf(m)
            | SplitScheme::ScaledHalfHalf(m)
            | SplitScheme::Tf32Tf32(m) => m,
        }
    }
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SplitScheme::MarkidisHalfHalf(_) => "markidis_halfhalf",
            SplitScheme::ScaledHalfHalf(_) => "halfhalf",
            SplitScheme::Tf32Tf32(_) => "tf32tf32",
        };
        write!(f, "{name}({})", self.rounding())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPair {
    pub hi: f64,
    pub lo: f64,
    pub scale_log2: i32,
}

impl SplitPair {
    /// `hi + lo * 2^-scale_log2`, exact.
    pub fn reconstruct(&self) -> f64 {
        self.hi + ldexp(self.lo, -self.scale_log2)
    }
}

pub fn split_value(v: f32, scheme: SplitScheme) -> SplitPair {
    let fmt = scheme.format();
    let mode = scheme.rounding();
    let scale_log2 = scheme.scale_log2();
    let v = v as f64;
    let hi = round_to_format(v, fmt, mode);
    let lo = if hi.is_finite() {
        round_to_format(ldexp(v - hi, scale_log2), fmt, mode)
    } else {
        0.0
    };
    SplitPair { hi, lo, scale_log2 }
}

pub fn reconstruct(p: &SplitPair) -> f64 {
    p.reconstruct()
}

/// Elementwise split of a whole matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMatrices {
    pub hi: Matrix<f64>,
    pub lo: Matrix<f64>,
    pub scale_log2: i32,
    pub scheme: SplitScheme,
}

impl SplitMatrices {
    pub fn rows(&self) -> usize {
        self.hi.rows()
    }

    pub fn cols(&self) -> usize {
        self.hi.cols()
    }

    pub fn reconstruct(&self) -> Matrix<f64> {
        let lo = self.lo.as_slice();
        let mut i = 0;
        self.hi.map(|&h| {
            let r = h + ldexp(lo[i], -self.scale_log2);
            i += 1;
            r
        })
    }
}

pub fn split_matrix(m: &Matrix<f32>, scheme: SplitScheme) -> SplitMatrices {
    let pairs: Vec<SplitPair> = m
        .as_slice()
        .par_iter()
        .map(|&v| split_value(v, scheme))
        .collect();
    let (rows, cols) = m.shape();
    let hi = Matrix::new(rows, cols, pairs.iter().map(|p| p.hi).collect())
        .expect("shape preserved");
    let lo = Matrix::new(rows, cols, pairs.iter().map(|p| p.lo).collect())
        .expect("shape preserved");
    SplitMatrices {
        hi,
        lo,
        scale_log2: scheme.scale_log2(),
        scheme,
    }
}

/// `floor(log2 |a - b|)` of the exact difference, `None` when `a == b`.
fn diff_exponent(a: f64, b: f64) -> Option<i32> {
    let (s, e) = two_sum(a, -b);
    if s == 0.0 {
        return None;
    }
    let mut exp = exponent_of(s);
    let power_of_two = s.abs().to_bits() & ((1u64 << 52) - 1) == 0;
    if power_of_two && e != 0.0 && (e < 0.0) != (s < 0.0) {
        exp -= 1;
    }
    Some(exp)
}

/// Number of FP32 fraction bits the pair keeps, in `[0, 23]`.
///
/// A reconstruction error of `2^(e_v - 23)` means only the last fraction bit
/// is lost (22); no error at all is 23.
pub fn kept_mantissa_length(v: f32, p: &SplitPair) -> Result<u32> {
    if v == 0.0 || !v.is_finite() {
        return Err(Error::Domain(format!(
            "mantissa length needs a finite nonzero value, got {v:e}"
        )));
    }
    let r = p.reconstruct();
    if !r.is_finite() {
        return Ok(0);
    }
    let e_v = exponent_of(v as f64);
    Ok(match diff_exponent(v as f64, r) {
        None => 23,
        Some(err_exp) => (e_v - 1 - err_exp).clamp(0, 23) as u32,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Representability {
    HighPrecision,
    Degraded,
    OutOfRange,
}

impl fmt::Display for Representability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representability::HighPrecision => "high_precision",
            Representability::Degraded => "degraded",
            Representability::OutOfRange => "out_of_range",
        })
    }
}

/// Exponent band edges of a split scheme, derived from its format.
///
/// `v` is high precision from `high_from` upward: hi is normal (or one
/// binade below) and the leading bits of the scaled residual land in the
/// normal range of lo. At or below `out_of_range_at` the whole pair keeps at
/// most one significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExponentBands {
    pub high_from: i32,
    pub out_of_range_at: i32,
}

pub fn exponent_bands(scheme: SplitScheme) -> ExponentBands {
    let fmt = scheme.format();
    let s = scheme.scale_log2();
    ExponentBands {
        high_from: fmt.emin() - 1 + fmt.precision() as i32 - s,
        out_of_range_at: fmt.emin() - fmt.man_bits() as i32 - s,
    }
}

pub fn classify_representability(v: f32, scheme: SplitScheme) -> Representability {
    if v == 0.0 {
        return Representability::HighPrecision;
    }
    if !v.is_finite() || v.is_subnormal() {
        return Representability::OutOfRange;
    }
    if v.abs() as f64 > scheme.format().max_finite() {
        return Representability::OutOfRange;
    }
    let bands = exponent_bands(scheme);
    let e_v = exponent_of(v as f64);
    if e_v <= bands.out_of_range_at {
        Representability::OutOfRange
    } else if e_v >= bands.high_from {
        Representability::HighPrecision
    } else {
        Representability::Degraded
    }
}

/// Relative reconstruction error bound in the high-precision band. The
/// lowest binade of a scaled FP16 band has a subnormal hi and only meets
/// twice this bound.
pub fn high_precision_bound() -> f64 {
    exp2i(-22)
}
