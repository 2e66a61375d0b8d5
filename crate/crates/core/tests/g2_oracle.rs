use num_complex::Complex64;
use proptest::prelude::*;
use qtask_core::g2::{self, G2Fft};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight from the definition, on (re, im) pairs: for every lag, sum
/// conj(s1[n]) s2[n] conj(s1[n+k]) s2[n+k] over the overlap.
fn brute_force(s1: &[(f64, f64)], s2: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mul = |a: (f64, f64), b: (f64, f64)| (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0);
    let conj = |a: (f64, f64)| (a.0, -a.1);
    let n = s1.len();
    (0..n)
        .map(|k| {
            let mut acc = (0.0, 0.0);
            for m in 0..n - k {
                let t = mul(mul(conj(s1[m]), s2[m]), mul(conj(s1[m + k]), s2[m + k]));
                acc = (acc.0 + t.0, acc.1 + t.1);
            }
            acc
        })
        .collect()
}

fn signals(seed: u64, n: usize) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sig = || {
        (0..n)
            .map(|_| {
                (
                    f64::from(rng.gen_range(-32768..32768i32)),
                    f64::from(rng.gen_range(-32768..32768i32)),
                )
            })
            .collect()
    };
    (sig(), sig())
}

fn complex(v: &[(f64, f64)]) -> Vec<Complex64> {
    v.iter().map(|&(r, i)| Complex64::new(r, i)).collect()
}

fn normwise(got: &[Complex64], want: &[(f64, f64)]) -> f64 {
    let scale = want.iter().map(|w| w.0.hypot(w.1)).fold(0.0, f64::max);
    got.iter()
        .zip(want)
        .map(|(g, w)| (g.re - w.0).hypot(g.im - w.1))
        .fold(0.0, f64::max)
        / scale
}

#[test]
fn direct_matches_brute_force() {
    for n in [1, 2, 16, 33, 64] {
        for seed in 0..100 {
            let (a, b) = signals(seed, n);
            let want = brute_force(&a, &b);
            let got = g2::g2_direct_all(&complex(&a), &complex(&b)).unwrap();
            let err = normwise(&got, &want);
            assert!(err <= 1e-12, "n={n} seed={seed}: {err:e}");
        }
    }
}

#[test]
fn fft_matches_direct() {
    let mut worst = 0.0f64;
    for n in [16, 64, 256, 1024] {
        let mut plan = G2Fft::new(n);
        for seed in 0..100 {
            let (a, b) = signals(1000 + seed, n);
            let (a, b) = (complex(&a), complex(&b));
            let direct = g2::g2_direct_all(&a, &b).unwrap();
            let fft = plan.g2(&a, &b).unwrap();
            let err = g2::max_relative_error(&fft, &direct);
            worst = worst.max(err);
            assert!(err <= 1e-9, "n={n} seed={seed}: {err:e}");
        }
    }
    assert!(worst > 0.0);
}

#[test]
fn selected_lags_and_errors() {
    let (a, b) = signals(5, 40);
    let (a, b) = (complex(&a), complex(&b));
    let all = g2::g2_direct_all(&a, &b).unwrap();
    let some = g2::g2_direct(&a, &b, &[0, 7, 39]).unwrap();
    assert_eq!(some, vec![all[0], all[7], all[39]]);
    assert!(matches!(
        g2::g2_direct(&a, &b, &[40]),
        Err(g2::G2Error::LagOutOfRange { lag: 40, len: 40 })
    ));
    assert!(matches!(
        g2::g2_fft(&a, &b[..3]),
        Err(g2::G2Error::LengthMismatch(40, 3))
    ));
    assert_eq!(g2::fft_len(1024), 2048);
    assert_eq!(g2::butterflies(1024), 22_528);
}

proptest! {
    #[test]
    fn fft_agrees_for_any_length(n in 1usize..300, seed in any::<u64>()) {
        let (a, b) = signals(seed, n);
        let want = brute_force(&a, &b);
        let got = g2::g2_fft(&complex(&a), &complex(&b)).unwrap();
        prop_assert!(normwise(&got, &want) <= 1e-9);
    }

    #[test]
    fn zero_lag_is_sum_of_squared_products(n in 1usize..200, seed in any::<u64>()) {
        let (a, b) = signals(seed, n);
        let got = g2::g2_direct(&complex(&a), &complex(&b), &[0]).unwrap()[0];
        let want: Complex64 = complex(&a).iter().zip(complex(&b)).map(|(x, y)| (x.conj() * y).powi(2)).sum();
        prop_assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0));
    }
}
