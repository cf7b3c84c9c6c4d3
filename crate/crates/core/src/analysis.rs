//! Exact split statistics and the residual metric.
//!
//! Probabilities are dyadic rationals, so every closed form here is compared
//! by equality.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fpkit::{exponent_of, FloatFormat, RoundingMode};
use crate::matrix::{Matrix, Scalar};
use crate::split::{kept_mantissa_length, split_value, SplitScheme};
use crate::Probability;

/// Fraction bits dropped by an FP16 conversion of an FP32 value.
const DROPPED_BITS: i32 = 13;
const L_F16: i32 = 10;
const B_F16: i32 = 15;

fn half_pow(n: u32) -> Probability {
    Ratio::new(1, 1u64 << n)
}

/// Probability that the zero run after the kept FP16 bits has length `n`.
pub fn p_l0(n: i32) -> Probability {
    match n {
        0..=12 => half_pow(n as u32 + 1),
        DROPPED_BITS => half_pow(DROPPED_BITS as u32),
        _ => Probability::zero(),
    }
}

fn tail_from(lower: i32) -> Probability {
    (lower.max(0)..=DROPPED_BITS).map(p_l0).sum()
}

/// Probability that the residual of an unscaled FP16 split at exponent `e_v`
/// is subnormal or zero in FP16.
pub fn p_underflow_gradual(e_v: i32) -> Probability {
    tail_from(e_v - L_F16 + B_F16 - 2 + 1)
}

/// Probability that the residual is lost entirely.
pub fn p_underflow(e_v: i32) -> Probability {
    tail_from(e_v + B_F16 - 2 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnderflowPoint {
    pub e_v: i32,
    pub p_u: Probability,
    pub p_u_plus_gu: Probability,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnderflowCurve {
    pub points: Vec<UnderflowPoint>,
}

impl UnderflowCurve {
    pub fn theory(e_min: i32, e_max: i32) -> Self {
        UnderflowCurve {
            points: (e_min..=e_max)
                .map(|e_v| UnderflowPoint {
                    e_v,
                    p_u: p_underflow(e_v),
                    p_u_plus_gu: p_underflow_gradual(e_v),
                })
                .collect(),
        }
    }
}

/// Residual exponent thresholds: below `FP16 emin` the residual is subnormal,
/// below the smallest subnormal it is gone.
fn residual_class(residual_exp: i32) -> (bool, bool) {
    let fmt = FloatFormat::FP16;
    let gradual = residual_exp < fmt.emin();
    let lost = residual_exp < fmt.emin() - fmt.man_bits() as i32;
    (lost, gradual)
}

/// Monte-Carlo rates `(underflow, underflow or gradual underflow)` of the
/// residual of an unscaled FP16 split, over FP32 values with exponent `e_v`
/// and uniform fraction bits. A zero residual counts as underflow at
/// exponent `e_v - 24`.
pub fn empirical_underflow(
    e_v: i32,
    samples: u64,
    seed: u64,
    rounding: RoundingMode,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Domain("empirical_underflow needs at least one sample".into()));
    }
    if !(-126..=127).contains(&e_v) {
        return Err(Error::Domain(format!("e_v = {e_v} is not a normal FP32 exponent")));
    }
    let scheme = SplitScheme::MarkidisHalfHalf(rounding);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(e_v as i64 as u64);
    let (mut u, mut ugu) = (0u64, 0u64);
    for _ in 0..samples {
        let frac: u32 = rng.gen::<u32>() >> 9;
        let v = f32::from_bits(((e_v + 127) as u32) << 23 | frac);
        let pair = split_value(v, scheme);
        if !pair.hi.is_finite() {
            continue;
        }
        let residual = v as f64 - pair.hi;
        let exp = if residual == 0.0 {
            e_v - 24
        } else {
            exponent_of(residual)
        };
        let (lost, gradual) = residual_class(exp);
        u += lost as u64;
        ugu += gradual as u64;
    }
    Ok((u as f64 / samples as f64, ugu as f64 / samples as f64))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MantissaLengthDistribution {
    /// Lengths with nonzero probability only.
    pub probabilities: BTreeMap<u32, Probability>,
    pub expectation: Probability,
}

impl MantissaLengthDistribution {
    pub fn from_counts(counts: &[u64; 24]) -> Self {
        let total: u64 = counts.iter().sum();
        let probabilities: BTreeMap<u32, Probability> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(len, &c)| (len as u32, Ratio::new(c, total)))
            .collect();
        let expectation = probabilities
            .iter()
            .map(|(&len, &p)| p * Ratio::from_integer(len as u64))
            .sum();
        MantissaLengthDistribution {
            probabilities,
            expectation,
        }
    }

    pub fn prob(&self, len: u32) -> Probability {
        self.probabilities.get(&len).copied().unwrap_or_else(Probability::zero)
    }
}

/// Kept mantissa length of every FP32 value in `[1, 2)` under an unscaled
/// FP16 split with the given conversion rounding.
pub fn exhaustive_length_distribution(split_rounding: RoundingMode) -> MantissaLengthDistribution {
    let scheme = SplitScheme::MarkidisHalfHalf(split_rounding);
    let counts = (0u32..1 << 23)
        .into_par_iter()
        .fold(
            || [0u64; 24],
            |mut acc, frac| {
                let v = f32::from_bits(0x3F80_0000 | frac);
                let len = kept_mantissa_length(v, &split_value(v, scheme))
                    .expect("values in [1, 2) are finite and nonzero");
                acc[len as usize] += 1;
                acc
            },
        )
        .reduce(
            || [0u64; 24],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    MantissaLengthDistribution::from_counts(&counts)
}

/// Exact decimal expansion of a dyadic rational, always with a fractional
/// part (`1.0`, `0.0625`).
pub fn dyadic_decimal(r: Probability) -> String {
    let (num, den) = (*r.numer(), *r.denom());
    assert!(den.is_power_of_two(), "{r} is not dyadic");
    let int = num / den;
    let mut rem = num % den;
    let mut digits = String::new();
    while rem != 0 {
        rem *= 10;
        digits.push(char::from(b'0' + (rem / den) as u8));
        rem %= den;
    }
    if digits.is_empty() {
        digits.push('0');
    }
    format!("{int}.{digits}")
}

/// `‖ref - test‖_F / ‖ref‖_F`, both norms accumulated in `f64`. Zero when the
/// matrices agree, even for a zero reference.
pub fn relative_residual<T: Scalar>(test: &Matrix<T>, reference: &Matrix<f64>) -> Result<f64> {
    if !test.same_shape(reference) {
        return Err(Error::Dimension(format!(
            "test is {:?}, reference is {:?}",
            test.shape(),
            reference.shape()
        )));
    }
    let diff = Matrix::new(
        reference.rows(),
        reference.cols(),
        reference
            .iter()
            .zip(test.iter())
            .map(|(&r, &t)| r - t.to_f64().unwrap_or(f64::NAN))
            .collect(),
    )?;
    let num = diff.frobenius_norm();
    let den = reference.frobenius_norm();
    if den == 0.0 {
        return if num == 0.0 { Ok(0.0) } else { Err(Error::ZeroReference) };
    }
    Ok(num / den)
}

/// Relative residual with the run it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub relative_residual: f64,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub scheme: String,
    pub seed: u64,
}

/// `Σ p` over a distribution; exposed for invariant checks.
pub fn total_probability(d: &MantissaLengthDistribution) -> Probability {
    d.probabilities.values().copied().sum()
}

/// `1` as a probability.
pub fn certain() -> Probability {
    Probability::one()
}
