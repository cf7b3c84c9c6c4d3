//! Seeded random FP32 matrices.
//!
//! Every element draws from its own ChaCha8 stream keyed by `(row, col)`, so
//! a matrix is the same whatever order or thread fills it.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Uniform on the open interval `(lo, hi)`, rounded to FP32.
    Urand { lo: f64, hi: f64 },
    /// `±2^e · m` with `e` uniform on `[a, b]`, `m` uniform FP32 in `[1, 2)`
    /// and a fair sign.
    ExpRand { a: i32, b: i32 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Urand { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidSpec(format!("urand needs lo < hi, got ({lo}, {hi})")));
                }
                // The open interval must contain at least one FP32 value.
                let lo32 = lo as f32;
                let above = if (lo32 as f64) <= lo { lo32.next_up() } else { lo32 };
                if !((above as f64) > lo && (above as f64) < hi) {
                    return Err(Error::InvalidSpec(format!(
                        "no FP32 value lies strictly inside ({lo}, {hi})"
                    )));
                }
            }
            Distribution::ExpRand { a, b } => {
                if a > b || a < -126 || b > 127 {
                    return Err(Error::InvalidSpec(format!(
                        "exprand needs -126 <= a <= b <= 127, got ({a}, {b})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f32 {
        match *self {
            Distribution::Urand { lo, hi } => loop {
                let u: f64 = rng.gen();
                let x = (lo + (hi - lo) * u) as f32;
                if (x as f64) > lo && (x as f64) < hi {
                    return x;
                }
            },
            Distribution::ExpRand { a, b } => {
                let e = rng.gen_range(a..=b);
                let frac: u32 = rng.gen::<u32>() >> 9;
                let negative: bool = rng.gen();
                let bits = ((e + 127) as u32) << 23 | frac | (negative as u32) << 31;
                f32::from_bits(bits)
            }
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Urand { lo, hi } => write!(f, "urand:{lo},{hi}"),
            Distribution::ExpRand { a, b } => write!(f, "exprand:{a},{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub dist: Distribution,
    pub seed: u64,
}

impl MatrixSpec {
    pub fn new(rows: usize, cols: usize, dist: Distribution, seed: u64) -> Self {
        MatrixSpec {
            rows,
            cols,
            dist,
            seed,
        }
    }
}

pub fn generate(spec: &MatrixSpec) -> Result<Matrix<f32>> {
    spec.dist.validate()?;
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok(Matrix::par_from_fn(spec.rows, spec.cols, |i, j| {
        let mut rng = base.clone();
        rng.set_stream((i as u64) << 32 | j as u64);
        spec.dist.sample(&mut rng)
    }))
}

/// Decorrelated child seed; splitmix64 finaliser.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which partner band the second exponent-band experiment uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Type2Variant {
    /// Partner drawn from `exp_rand(-100, -35)`.
    #[default]
    List,
    /// Partner drawn from `exp_rand(-35, -15)`.
    Caption,
}

impl FromStr for Type2Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "list" => Ok(Type2Variant::List),
            "caption" => Ok(Type2Variant::Caption),
            _ => Err(Error::Parse {
                what: "type-2 variant",
                input: s.to_string(),
            }),
        }
    }
}

const BAND_WIDE: Distribution = Distribution::ExpRand { a: -15, b: 14 };
const BAND_LOW: Distribution = Distribution::ExpRand { a: -35, b: -15 };
const BAND_TINY: Distribution = Distribution::ExpRand { a: -100, b: -35 };

/// Distributions of `(A, B)` for exponent-band experiment `type_id` in `1..=4`.
pub fn type_distributions(type_id: u8, variant: Type2Variant) -> Result<(Distribution, Distribution)> {
    Ok(match (type_id, variant) {
        (1, _) => (BAND_WIDE, BAND_WIDE),
        (2, Type2Variant::List) => (BAND_WIDE, BAND_TINY),
        (2, Type2Variant::Caption) => (BAND_WIDE, BAND_LOW),
        (3, _) => (BAND_LOW, BAND_LOW),
        (4, _) => (BAND_WIDE, BAND_TINY),
        _ => {
            return Err(Error::InvalidSpec(format!(
                "exponent-band type must be 1..=4, got {type_id}"
            )))
        }
    })
}

/// `A` is `m×k`, `B` is `k×n`.
pub fn type_pair(
    type_id: u8,
    m: usize,
    n: usize,
    k: usize,
    seed: u64,
    variant: Type2Variant,
) -> Result<(Matrix<f32>, Matrix<f32>)> {
    let (da, db) = type_distributions(type_id, variant)?;
    pair_from(da, db, m, n, k, seed)
}

fn pair_from(
    da: Distribution,
    db: Distribution,
    m: usize,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<(Matrix<f32>, Matrix<f32>)> {
    let a = generate(&MatrixSpec::new(m, k, da, sub_seed(seed, 0)))?;
    let b = generate(&MatrixSpec::new(k, n, db, sub_seed(seed, 1)))?;
    Ok((a, b))
}

/// Input distribution of a GEMM experiment, as given on the command line:
/// `urand:lo,hi`, `exprand:a,b` or `type:N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputDist {
    Same(Distribution),
    Type(u8, Type2Variant),
}

impl InputDist {
    pub const UNIFORM: InputDist = InputDist::Same(Distribution::Urand { lo: -1.0, hi: 1.0 });

    pub fn pair(&self, m: usize, n: usize, k: usize, seed: u64) -> Result<(Matrix<f32>, Matrix<f32>)> {
        match *self {
            InputDist::Same(d) => pair_from(d, d, m, n, k, seed),
            InputDist::Type(t, v) => type_pair(t, m, n, k, seed, v),
        }
    }

    pub fn with_type2_variant(self, variant: Type2Variant) -> Self {
        match self {
            InputDist::Type(t, _) => InputDist::Type(t, variant),
            other => other,
        }
    }
}

impl fmt::Display for InputDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputDist::Same(d) => d.fmt(f),
            InputDist::Type(t, _) => write!(f, "type:{t}"),
        }
    }
}

impl FromStr for InputDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse {
            what: "distribution",
            input: s.to_string(),
        };
        let (kind, args) = s.trim().split_once(':').ok_or_else(bad)?;
        let nums: Vec<&str> = args.split(',').map(str::trim).collect();
        let dist = match (kind, nums.as_slice()) {
            ("urand", [lo, hi]) => InputDist::Same(Distribution::Urand {
                lo: lo.parse().map_err(|_| bad())?,
                hi: hi.parse().map_err(|_| bad())?,
            }),
            ("exprand", [a, b]) => InputDist::Same(Distribution::ExpRand {
                a: a.parse().map_err(|_| bad())?,
                b: b.parse().map_err(|_| bad())?,
            }),
            ("type", [t]) => {
                let t: u8 = t.parse().map_err(|_| bad())?;
                type_distributions(t, Type2Variant::List)?;
                InputDist::Type(t, Type2Variant::List)
            }
            _ => return Err(bad()),
        };
        if let InputDist::Same(d) = dist {
            d.validate()?;
        }
        Ok(dist)
    }
}
