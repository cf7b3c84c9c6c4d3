//! Arbitrary-precision rounding oracle shared by the property suites.
#![allow(dead_code)]

use num_bigint::{BigInt, Sign};
use num_traits::{Signed, ToPrimitive, Zero};
use tcgemm::{FloatFormat, RoundingMode};

/// `mant * 2^exp`, exact.
#[derive(Clone, Debug)]
pub struct Exact {
    pub mant: BigInt,
    pub exp: i32,
}

impl Exact {
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite());
        if x == 0.0 {
            return Exact { mant: BigInt::zero(), exp: 0 };
        }
        let bits = x.to_bits();
        let field = ((bits >> 52) & 0x7ff) as i32;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if field == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), field - 1075)
        };
        let mant = BigInt::from(m);
        Exact {
            mant: if x < 0.0 { -mant } else { mant },
            exp: e,
        }
    }

    fn aligned(&self, exp: i32) -> BigInt {
        &self.mant << (self.exp - exp) as usize
    }

    pub fn add(&self, other: &Exact) -> Exact {
        let exp = self.exp.min(other.exp);
        Exact {
            mant: self.aligned(exp) + other.aligned(exp),
            exp,
        }
    }

    pub fn mul(&self, other: &Exact) -> Exact {
        Exact {
            mant: &self.mant * &other.mant,
            exp: self.exp + other.exp,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    /// Exact conversion; panics if the value needs more than 53 bits.
    pub fn to_f64(&self) -> f64 {
        let m = self.mant.to_i64().expect("fits in i64");
        assert!(m.unsigned_abs() <= 1 << 53);
        tcgemm::fpkit::ldexp(m as f64, self.exp)
    }
}

/// Rounds to `precision` significant bits; quanta never go below
/// `2^min_quantum_exp` when given.
pub fn round_exact(v: &Exact, precision: u32, min_quantum_exp: Option<i32>, mode: RoundingMode) -> Exact {
    if v.is_zero() {
        return Exact { mant: BigInt::zero(), exp: 0 };
    }
    let lead = v.exp + v.mant.bits() as i32 - 1;
    let mut q = lead - (precision as i32 - 1);
    if let Some(qmin) = min_quantum_exp {
        q = q.max(qmin);
    }
    if v.exp >= q {
        return v.clone();
    }
    let shift = (q - v.exp) as usize;
    let mag = v.mant.abs();
    let mut quot = &mag >> shift;
    let rem = &mag - (&quot << shift);
    let half = BigInt::from(1) << (shift - 1);
    let up = match mode {
        RoundingMode::TowardZero => false,
        RoundingMode::NearestAway => rem >= half,
        RoundingMode::NearestEven => rem > half || (rem == half && quot.bit(0)),
    };
    if up {
        quot += 1;
    }
    let mant = if v.mant.sign() == Sign::Minus { -quot } else { quot };
    Exact { mant, exp: q }
}

/// Rounds into `fmt`, with IEEE overflow behaviour.
pub fn round_to_format_oracle(v: &Exact, fmt: FloatFormat, mode: RoundingMode) -> f64 {
    let r = if fmt.subnormals_enabled() {
        round_exact(v, fmt.precision(), Some(fmt.emin() - fmt.man_bits() as i32), mode)
    } else if !v.is_zero() && v.exp + v.mant.bits() as i32 - 1 < fmt.emin() {
        // flush-to-zero grid below the normal range: multiples of min_normal
        round_exact(v, 1, Some(fmt.emin()), mode)
    } else {
        round_exact(v, fmt.precision(), None, mode)
    };
    let x = r.to_f64();
    if x.abs() > fmt.max_finite() {
        let inf = match mode {
            RoundingMode::TowardZero => fmt.max_finite(),
            _ => f64::INFINITY,
        };
        return inf.copysign(x);
    }
    x
}

pub fn round_significand_oracle(v: &Exact, bits: u32, mode: RoundingMode) -> f64 {
    round_exact(v, bits, None, mode).to_f64()
}
