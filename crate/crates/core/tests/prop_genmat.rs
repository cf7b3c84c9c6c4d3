use proptest::prelude::*;
use tcgemm::genmat::*;

fn dist() -> impl Strategy<Value = Distribution> {
    prop_oneof![
        (-1e3f64..1e3, 1e-3f64..1e3).prop_map(|(lo, w)| Distribution::Urand { lo, hi: lo + w }),
        (-126i32..=127, 0i32..40).prop_map(|(a, w)| Distribution::ExpRand { a, b: (a + w).min(127) }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reproducible(d in dist(), seed in any::<u64>(), rows in 1usize..20, cols in 1usize..20) {
        let spec = MatrixSpec::new(rows, cols, d, seed);
        prop_assert_eq!(generate(&spec).unwrap().map(|v| v.to_bits()), generate(&spec).unwrap().map(|v| v.to_bits()));
    }

    #[test]
    fn values_respect_the_distribution(d in dist(), seed in any::<u64>()) {
        let m = generate(&MatrixSpec::new(16, 16, d, seed)).unwrap();
        for &v in m.iter() {
            match d {
                Distribution::Urand { lo, hi } => prop_assert!((v as f64) > lo && (v as f64) < hi),
                Distribution::ExpRand { a, b } => {
                    let e = tcgemm::fpkit::exponent_of(v as f64);
                    prop_assert!(v.is_normal() && e >= a && e <= b);
                }
            }
        }
    }

    #[test]
    fn independent_of_thread_count(d in dist(), seed in any::<u64>()) {
        let spec = MatrixSpec::new(33, 17, d, seed);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| generate(&spec).unwrap());
        prop_assert_eq!(single, generate(&spec).unwrap());
    }
}

#[test]
fn uniform_moments() {
    let m = generate(&MatrixSpec::new(1000, 1000, Distribution::Urand { lo: -1.0, hi: 1.0 }, 7)).unwrap();
    let n = 1e6;
    let mean = m.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = m.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let sigma = (1.0f64 / 3.0 / n).sqrt();
    assert!(mean.abs() <= 4.0 * sigma, "{mean}");
    assert!((var - 1.0 / 3.0).abs() <= 0.05 / 3.0, "{var}");
}

#[test]
fn exponent_histogram_is_uniform() {
    let (a, b) = (-15, 14);
    let m = generate(&MatrixSpec::new(1000, 1000, Distribution::ExpRand { a, b }, 11)).unwrap();
    let bins = (b - a + 1) as usize;
    let mut hist = vec![0u64; bins];
    let mut negative = 0u64;
    for &v in m.iter() {
        hist[(tcgemm::fpkit::exponent_of(v as f64) - a) as usize] += 1;
        negative += (v < 0.0) as u64;
    }
    let n = 1e6;
    let p = 1.0 / bins as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    for (i, &c) in hist.iter().enumerate() {
        assert!((c as f64 - n * p).abs() <= 4.0 * sigma, "bin {i}: {c}");
    }
    assert!((negative as f64 - n / 2.0).abs() <= 4.0 * (n / 4.0).sqrt());
}

#[test]
fn type_pairs_have_the_right_shapes() {
    for t in 1..=4 {
        let (a, b) = type_pair(t, 5, 6, 7, 3, Type2Variant::List).unwrap();
        assert_eq!(a.shape(), (5, 7));
        assert_eq!(b.shape(), (7, 6));
    }
    let (_, list) = type_pair(2, 4, 4, 4, 3, Type2Variant::List).unwrap();
    let (_, caption) = type_pair(2, 4, 4, 4, 3, Type2Variant::Caption).unwrap();
    assert!(list.iter().all(|v| v.abs() < 2f32.powi(-34)));
    assert!(caption.iter().all(|v| v.abs() >= 2f32.powi(-35) && v.abs() < 2f32.powi(-14)));
}
