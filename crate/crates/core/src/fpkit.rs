//! Small binary floating-point formats hosted inside `f64`.
//!
//! Every value produced here is exactly representable in binary64, so an
//! `f64` doubles as the exact carrier for FP16, TF32, FP32 and the 25-bit
//! accumulator. Sums that would not fit are carried as an unevaluated
//! `(hi, lo)` pair from [`two_sum`] and rounded once, so "compute exactly,
//! then round" holds even when operand exponents are far apart.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// IEEE-style rounding direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoundingMode {
    /// Round to nearest, ties to even (RN).
    NearestEven,
    /// Round to nearest, ties away from zero (RNA).
    NearestAway,
    /// Truncate toward zero (RZ).
    TowardZero,
}

impl RoundingMode {
    pub const ALL: [RoundingMode; 3] = [
        RoundingMode::NearestEven,
        RoundingMode::NearestAway,
        RoundingMode::TowardZero,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            RoundingMode::NearestEven => "rn",
            RoundingMode::NearestAway => "rna",
            RoundingMode::TowardZero => "rz",
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for RoundingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rn" => Ok(RoundingMode::NearestEven),
            "rna" => Ok(RoundingMode::NearestAway),
            "rz" => Ok(RoundingMode::TowardZero),
            _ => Err(Error::Parse {
                what: "rounding mode",
                input: s.to_string(),
            }),
        }
    }
}

/// A parameterized binary floating-point format.
///
/// `man_bits` counts the stored fraction bits; the implicit leading one is
/// not included. Formats are restricted to those whose whole value set
/// (subnormals included) lives inside binary64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FloatFormat {
    exp_bits: u32,
    man_bits: u32,
    bias: i32,
    subnormals: bool,
}

impl FloatFormat {
    pub const FP16: FloatFormat = FloatFormat::from_parts(5, 10, 15, true);
    pub const TF32: FloatFormat = FloatFormat::from_parts(8, 10, 127, true);
    pub const FP32: FloatFormat = FloatFormat::from_parts(8, 23, 127, true);
    /// FP32's exponent range with a 25-bit significand.
    pub const ACC25: FloatFormat = FloatFormat::from_parts(8, 24, 127, true);

    const fn from_parts(exp_bits: u32, man_bits: u32, bias: i32, subnormals: bool) -> Self {
        FloatFormat {
            exp_bits,
            man_bits,
            bias,
            subnormals,
        }
    }

    pub fn new(exp_bits: u32, man_bits: u32, bias: i32, subnormals: bool) -> Result<Self> {
        if man_bits < 1 || exp_bits < 2 {
            return Err(Error::InvalidFormat(format!(
                "need man_bits >= 1 and exp_bits >= 2, got ({exp_bits}, {man_bits})"
            )));
        }
        if man_bits + exp_bits + 1 > 63 {
            return Err(Error::InvalidFormat(format!(
                "{} total bits exceed the 63-bit budget",
                man_bits + exp_bits + 1
            )));
        }
        if man_bits > 52 || exp_bits > 11 {
            return Err(Error::InvalidFormat(format!(
                "({exp_bits}, {man_bits}) is wider than the binary64 carrier"
            )));
        }
        let fmt = FloatFormat::from_parts(exp_bits, man_bits, bias, subnormals);
        let lowest = if subnormals {
            fmt.emin() - man_bits as i32
        } else {
            fmt.emin()
        };
        if fmt.emax() > 1023 || lowest < -1074 {
            return Err(Error::InvalidFormat(format!(
                "exponent range [{lowest}, {}] not hosted by binary64",
                fmt.emax()
            )));
        }
        Ok(fmt)
    }

    pub fn exp_bits(&self) -> u32 {
        self.exp_bits
    }

    pub fn man_bits(&self) -> u32 {
        self.man_bits
    }

    pub fn bias(&self) -> i32 {
        self.bias
    }

    pub fn subnormals_enabled(&self) -> bool {
        self.subnormals
    }

    /// Significand width including the implicit bit.
    pub fn precision(&self) -> u32 {
        self.man_bits + 1
    }

    /// Smallest normal exponent.
    pub fn emin(&self) -> i32 {
        1 - self.bias
    }

    /// Largest finite exponent.
    pub fn emax(&self) -> i32 {
        ((1i32 << self.exp_bits) - 2) - self.bias
    }

    pub fn min_normal(&self) -> f64 {
        exp2i(self.emin())
    }

    pub fn min_subnormal(&self) -> f64 {
        if self.subnormals {
            exp2i(self.emin() - self.man_bits as i32)
        } else {
            self.min_normal()
        }
    }

    pub fn max_finite(&self) -> f64 {
        let top = exp2i(self.emax());
        top * (2.0 - exp2i(-(self.man_bits as i32)))
    }

    /// `true` when `v` is a member of this format's value set (±0 and ±inf
    /// included, NaN excluded).
    pub fn contains(&self, v: f64) -> bool {
        if v.is_nan() {
            return false;
        }
        if v.is_infinite() {
            return true;
        }
        round_to_format(v, *self, RoundingMode::TowardZero) == v
    }
}

/// `2^k` as an `f64`, exact for `k` in `[-1074, 1023]`.
pub fn exp2i(k: i32) -> f64 {
    match k {
        1024.. => f64::INFINITY,
        -1022..=1023 => f64::from_bits(((k + 1023) as u64) << 52),
        -1074..=-1023 => f64::from_bits(1u64 << (k + 1074)),
        _ => 0.0,
    }
}

/// Exact `x * 2^k` whenever the result is representable.
pub fn ldexp(x: f64, k: i32) -> f64 {
    if k > 1023 {
        ldexp(x * exp2i(1023), k - 1023)
    } else if k < -1022 {
        // Shrink in the normal range first so that only the last step can
        // land on a subnormal.
        let first = (k + 1022).max(-1022);
        ldexp(x * exp2i(first), k - first)
    } else {
        x * exp2i(k)
    }
}

/// `floor(log2 |x|)` for finite nonzero `x`.
pub fn exponent_of(x: f64) -> i32 {
    debug_assert!(x.is_finite() && x != 0.0);
    let bits = x.to_bits();
    let field = ((bits >> 52) & 0x7ff) as i32;
    if field != 0 {
        field - 1023
    } else {
        let frac = bits & ((1u64 << 52) - 1);
        -1074 + (63 - frac.leading_zeros() as i32)
    }
}

/// Knuth's error-free sum: `a + b == s + e` exactly with `s = fl(a + b)`.
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    if !s.is_finite() {
        return (s, 0.0);
    }
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

#[derive(Debug, Clone, Copy)]
enum Grid {
    Format(FloatFormat),
    Significand(u32),
}

impl Grid {
    fn quantum_exp(self, e: i32) -> i32 {
        match self {
            Grid::Format(f) => {
                if e >= f.emin() {
                    e - f.man_bits as i32
                } else if f.subnormals {
                    f.emin() - f.man_bits as i32
                } else {
                    f.emin()
                }
            }
            Grid::Significand(bits) => e - (bits as i32 - 1),
        }
    }
}

/// Rounds the exact value `hi + lo` onto `grid`.
///
/// Requires `|lo| <= ulp(hi) / 2`, which [`two_sum`] guarantees; a lone value
/// is passed as `(v, 0.0)`.
fn round_exact(hi: f64, lo: f64, grid: Grid, mode: RoundingMode) -> f64 {
    if hi.is_nan() || lo.is_nan() {
        return f64::NAN;
    }
    if hi.is_infinite() {
        return hi;
    }
    if hi == 0.0 && lo == 0.0 {
        return hi;
    }
    let (hi, lo) = if hi == 0.0 { (lo, 0.0) } else { (hi, lo) };
    let negative = hi < 0.0;
    let (mag, tail) = if negative { (-hi, -lo) } else { (hi, lo) };

    let mut e = exponent_of(mag);
    if tail < 0.0 && mag.to_bits() & ((1u64 << 52) - 1) == 0 && e > -1022 {
        // mag is a power of two and the exact value sits just below it.
        e -= 1;
    }
    let q = grid.quantum_exp(e);
    let scaled = ldexp(mag, -q);
    let scaled_tail = ldexp(tail, -q);

    let mut int = scaled.floor();
    let mut frac = scaled - int;
    if frac == 0.0 && scaled_tail < 0.0 {
        int -= 1.0;
        frac = 1.0;
    }
    // Sign of (frac + tail - 1/2), compared without rounding.
    let vs_half = (frac - 0.5)
        .partial_cmp(&-scaled_tail)
        .unwrap_or(Ordering::Equal);

    let rounded = match mode {
        RoundingMode::TowardZero => int,
        RoundingMode::NearestEven => match vs_half {
            Ordering::Greater => int + 1.0,
            Ordering::Less => int,
            Ordering::Equal => {
                if (int * 0.5).fract() != 0.0 {
                    int + 1.0
                } else {
                    int
                }
            }
        },
        RoundingMode::NearestAway => match vs_half {
            Ordering::Less => int,
            _ => int + 1.0,
        },
    };

    let mut result = ldexp(rounded, q);
    if let Grid::Format(f) = grid {
        let max = f.max_finite();
        if result > max {
            result = match mode {
                RoundingMode::TowardZero => max,
                _ => f64::INFINITY,
            };
        }
    }
    if negative {
        -result
    } else {
        result
    }
}

/// Rounds `v` to the nearest member of `fmt` under `mode`.
///
/// Gradual underflow quantizes to multiples of the smallest subnormal (or to
/// `{0, min_normal}` when subnormals are disabled). Magnitudes beyond the
/// largest finite value overflow to infinity under RN/RNA and saturate to
/// the largest finite value under RZ. NaN and infinities pass through.
pub fn round_to_format(v: f64, fmt: FloatFormat, mode: RoundingMode) -> f64 {
    round_exact(v, 0.0, Grid::Format(fmt), mode)
}

/// Rounds the exact sum `a + b` to `fmt` with a single rounding.
pub fn round_sum_to_format(a: f64, b: f64, fmt: FloatFormat, mode: RoundingMode) -> f64 {
    let (s, e) = two_sum(a, b);
    round_exact(s, e, Grid::Format(fmt), mode)
}

/// Rounds `v` to `bits` significant bits (implicit one included) at its own
/// binade. The exponent range is unbounded.
pub fn round_significand(v: f64, bits: u32, mode: RoundingMode) -> f64 {
    round_exact(v, 0.0, Grid::Significand(bits.clamp(1, 53)), mode)
}

/// Rounds the exact sum `a + b` to `bits` significant bits.
pub fn round_sum_significand(a: f64, b: f64, bits: u32, mode: RoundingMode) -> f64 {
    let (s, e) = two_sum(a, b);
    round_exact(s, e, Grid::Significand(bits.clamp(1, 53)), mode)
}

/// Sign-magnitude truncation to `significand_bits` total significand bits.
pub fn truncate_significand(v: f64, significand_bits: u32) -> f64 {
    round_significand(v, significand_bits, RoundingMode::TowardZero)
}

/// Sign, unbiased exponent and 23-bit fraction of a normal FP32 value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decomposed {
    pub sign: i8,
    pub exponent: i32,
    pub mantissa: u32,
}

impl Decomposed {
    pub fn value(&self) -> f32 {
        let bits = (u32::from(self.sign < 0) << 31)
            | (((self.exponent + 127) as u32) << 23)
            | (self.mantissa & 0x7f_ffff);
        f32::from_bits(bits)
    }
}

pub fn decompose(v: f32) -> Result<Decomposed> {
    if !v.is_normal() {
        return Err(Error::Domain(format!(
            "decompose needs a normal FP32 value, got {v:e}"
        )));
    }
    let bits = v.to_bits();
    Ok(Decomposed {
        sign: if bits >> 31 == 1 { -1 } else { 1 },
        exponent: ((bits >> 23) & 0xff) as i32 - 127,
        mantissa: bits & 0x7f_ffff,
    })
}

/// Number of consecutive zero bits from `m12` toward the LSB of a 23-bit
/// FP32 fraction, in `[0, 13]`.
pub fn trailing_zero_run(mantissa_bits: u32) -> u32 {
    let low = mantissa_bits & 0x1fff;
    if low == 0 {
        13
    } else {
        12 - (31 - low.leading_zeros())
    }
}

/// Distance between two finite `f32` values in units in the last place,
/// counted along the ordered bit patterns (so it is well defined across
/// binades and through zero).
pub fn ulp_distance_f32(a: f32, b: f32) -> u64 {
    fn key(x: f32) -> i64 {
        let bits = x.to_bits() as i32;
        if bits < 0 {
            -((bits & 0x7fff_ffff) as i64)
        } else {
            bits as i64
        }
    }
    (key(a) - key(b)).unsigned_abs()
}
