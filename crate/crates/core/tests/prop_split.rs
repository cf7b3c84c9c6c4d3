use proptest::prelude::*;
use tcgemm::fpkit::{exp2i, exponent_of, round_to_format, FloatFormat, RoundingMode};
use tcgemm::split::*;
use tcgemm::Matrix;

fn mode() -> impl Strategy<Value = RoundingMode> {
    prop::sample::select(RoundingMode::ALL.to_vec())
}

fn scheme() -> impl Strategy<Value = SplitScheme> {
    mode().prop_flat_map(|m| {
        prop::sample::select(vec![
            SplitScheme::MarkidisHalfHalf(m),
            SplitScheme::ScaledHalfHalf(m),
            SplitScheme::Tf32Tf32(m),
        ])
    })
}

/// Normal FP32 value with exponent in `[lo, hi]`.
fn f32_with_exp(lo: i32, hi: i32) -> impl Strategy<Value = f32> {
    (lo..=hi, 0u32..1 << 23, any::<bool>()).prop_map(|(e, frac, neg)| {
        f32::from_bits(((e + 127) as u32) << 23 | frac | (neg as u32) << 31)
    })
}

fn any_finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    #[test]
    fn parts_live_in_the_format(v in any_finite_f32(), s in scheme()) {
        let p = split_value(v, s);
        prop_assert!(s.format().contains(p.hi) || p.hi.is_infinite());
        prop_assert!(s.format().contains(p.lo));
        prop_assert_eq!(p.scale_log2, s.scale_log2());
        prop_assert_eq!(p.hi, round_to_format(v as f64, s.format(), s.rounding()));
    }

    #[test]
    fn high_precision_band_keeps_22_bits(v in any_finite_f32(), s in scheme()) {
        prop_assume!(v != 0.0);
        if classify_representability(v, s) == Representability::HighPrecision {
            let p = split_value(v, s);
            let rel = ((v as f64 - p.reconstruct()) / v as f64).abs();
            // nearest rounding loses half an ulp per part, RZ a whole one
            let mut bound = high_precision_bound();
            if s.rounding() == RoundingMode::TowardZero {
                bound *= 4.0;
            }
            if exponent_of(v as f64) == exponent_bands(s).high_from {
                bound *= 2.0;
            }
            prop_assert!(rel <= bound, "{:e} {} rel {:e}", v, s, rel);
        }
    }

    #[test]
    fn classification_follows_exponent_bands(v in f32_with_exp(-126, 15), s in scheme()) {
        let b = exponent_bands(s);
        let e = exponent_of(v as f64);
        let c = classify_representability(v, s);
        if split_value(v, s).hi.is_infinite() {
            prop_assert_eq!(c, Representability::OutOfRange);
        } else if e >= b.high_from {
            prop_assert_eq!(c, Representability::HighPrecision);
        } else if e <= b.out_of_range_at {
            prop_assert_eq!(c, Representability::OutOfRange);
        } else {
            prop_assert_eq!(c, Representability::Degraded);
        }
    }

    #[test]
    fn toward_zero_split_does_not_grow(v in any_finite_f32(), s in scheme()) {
        let p = split_value(v, SplitScheme::MarkidisHalfHalf(RoundingMode::TowardZero));
        prop_assert!(p.hi.abs() <= (v as f64).abs());
        prop_assert!(p.reconstruct().abs() <= (v as f64).abs());
        let _ = s;
    }

    #[test]
    fn kept_length_is_consistent(v in any_finite_f32(), s in scheme()) {
        prop_assume!(v != 0.0);
        let p = split_value(v, s);
        let len = kept_mantissa_length(v, &p).unwrap();
        prop_assert!(len <= 23);
        let err = (v as f64 - p.reconstruct()).abs();
        if err == 0.0 {
            prop_assert_eq!(len, 23);
        } else if p.reconstruct().is_finite() && len > 0 && len < 23 {
            // err lies in [2^(e_v - len - 1), 2^(e_v - len))
            let e_v = exponent_of(v as f64);
            prop_assert!(err >= exp2i(e_v - len as i32 - 1) && err < exp2i(e_v - len as i32));
        }
    }

    /// Scaling the residual before conversion changes nothing when the
    /// unscaled residual is already a normal FP16 value.
    #[test]
    fn scaling_transparent_in_normal_band(v in f32_with_exp(-1, 3), m in mode()) {
        let plain = split_value(v, SplitScheme::MarkidisHalfHalf(m));
        let scaled = split_value(v, SplitScheme::ScaledHalfHalf(m));
        prop_assert_eq!(plain.hi, scaled.hi);
        prop_assert_eq!(plain.reconstruct(), scaled.reconstruct());
    }

    /// Over the wider band the two agree whenever the unscaled residual fits.
    #[test]
    fn scaling_transparent_when_residual_fits(v in f32_with_exp(-13, 3), m in mode()) {
        let plain = split_value(v, SplitScheme::MarkidisHalfHalf(m));
        let scaled = split_value(v, SplitScheme::ScaledHalfHalf(m));
        if plain.lo == v as f64 - plain.hi {
            prop_assert_eq!(plain.reconstruct(), scaled.reconstruct());
        }
        // the scaled split is never worse
        let err = |p: &SplitPair| (v as f64 - p.reconstruct()).abs();
        prop_assert!(err(&scaled) <= err(&plain));
    }

    #[test]
    fn matrix_split_is_elementwise(data in prop::collection::vec(any_finite_f32(), 12), s in scheme()) {
        let m = Matrix::new(3, 4, data).unwrap();
        let sm = split_matrix(&m, s);
        let rec = sm.reconstruct();
        for i in 0..3 {
            for j in 0..4 {
                let p = split_value(m.at(i, j), s);
                prop_assert_eq!(sm.hi.at(i, j), p.hi);
                prop_assert_eq!(sm.lo.at(i, j), p.lo);
                prop_assert!(rec.at(i, j) == p.reconstruct() || p.hi.is_infinite());
            }
        }
    }

    #[test]
    fn halfhalf_matrix_reconstruction_error(data in prop::collection::vec(f32_with_exp(-14, 15), 64)) {
        let m = Matrix::new(8, 8, data).unwrap();
        let sm = split_matrix(&m, SplitScheme::HALFHALF);
        let rec = sm.reconstruct();
        for (orig, r) in m.iter().zip(rec.iter()) {
            let orig = *orig as f64;
            if orig.abs() < FloatFormat::FP16.max_finite() {
                prop_assert!(((orig - r) / orig).abs() <= high_precision_bound());
            }
        }
    }
}
