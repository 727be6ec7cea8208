use std::f64::consts::PI;

use manifold_core::bounds::*;
use manifold_core::geometry::{AffineSubspace, PointCloud};
use manifold_core::linalg;
use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::Rng as _;

fn s_g_by_hand(d: usize, v: f64, tau: f64, eps: f64, delta: f64, c: f64) -> f64 {
    let d = d as f64;
    let u = c * v * (1.0 / tau.powf(d) + 1.0 / (tau * eps).powf(d / 2.0));
    c * (u / (eps * eps) * (u / eps).ln().powi(4) + (1.0 / delta).ln() / (eps * eps))
}

#[test]
fn sample_complexity_by_hand() {
    let p = BoundParams::new(1, 1.0, 0.5, 0.5, 0.5).unwrap();
    // U = 2 + 2 = 4, U/eps = 8.
    let expected = 4.0 / 0.25 * 8f64.ln().powi(4) + 2f64.ln() / 0.25;
    assert!((sample_complexity(&p).unwrap() - expected).abs() <= 1e-9 * expected);
    assert!(
        (sample_complexity(&p).unwrap() - s_g_by_hand(1, 1.0, 0.5, 0.5, 0.5, 1.0)).abs()
            <= 1e-9 * expected
    );
}

#[test]
fn covering_limits() {
    let p = BoundParams::new(1, 2.0 * PI, 0.5, 0.1, 0.1).unwrap();
    assert!((covering_bound(&p, 0.5).unwrap() - 25.132741228718345).abs() < 1e-9);
    assert!(covering_bound(&p, 0.0).is_err());
    assert!(BoundParams::new(1, 1.0, 1.5, 0.1, 0.1).is_err());
    assert!(BoundParams::new(1, 1.0, 0.5, 0.1, 1.0).is_err());
}

#[test]
fn chaining_constant_profile_closed_form() {
    for (f0, g0, eps, s) in [
        (3.0, 1.5, 0.1, 10),
        (10.0, 2.0, 0.01, 1000),
        (0.5, 0.3, 0.2, 7),
    ] {
        let q = chaining_bound(&FatProfile::constant(f0, g0), eps, s).unwrap();
        let closed = eps + 12.0 * (f0 / s as f64).sqrt() * (g0 - eps / 4.0);
        assert!((q - closed).abs() < 1e-6, "{q} vs {closed}");
    }
    assert_eq!(chaining_bound(&FatProfile::zero(), 0.3, 5).unwrap(), 0.3);
    let prof = FatProfile::maxmin(3, 2, 1.0);
    let a = chaining_bound(&prof, 0.05, 100).unwrap() - 0.05;
    let b = chaining_bound(&prof, 0.05, 400).unwrap() - 0.05;
    assert!((a / b - 2.0).abs() < 1e-6);
}

#[test]
fn jl_scaled_norm_is_unbiased() {
    let mut rng = linalg::rng(1);
    let x = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0)).normalize() * 0.9;
    let cloud = PointCloud::new(vec![x.clone()]).unwrap();
    let mean = (0..500)
        .map(|s| {
            let p = jl_project(&cloud, 6, s).unwrap();
            p.scale * p.coordinates(&x).norm_squared()
        })
        .sum::<f64>()
        / 500.0;
    assert!(
        (mean - x.norm_squared()).abs() <= 0.05 * x.norm_squared(),
        "{mean}"
    );
    assert!(jl_project(&cloud, 31, 0).is_err());
}

#[test]
fn rademacher_pair_enumeration() {
    // Rows f and -f with f = (1, 1): sup is |s1 + s2| / 2, mean 0.5 over the four sign patterns.
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
    let est = empirical_rademacher(&m, 4000, 3).unwrap();
    assert!((est.mean - 0.5).abs() <= 3.0 * est.std_error + 1e-12);
}

#[test]
fn sauer_shelah_against_binomials() {
    fn binom(n: u64, k: u64) -> BigUint {
        (0..k).fold(BigUint::from(1u32), |acc, i| acc * (n - i) / (i + 1))
    }
    for vc in 0..8usize {
        for k in 0..30usize {
            let expected: BigUint = (0..=vc.min(k)).map(|i| binom(k as u64, i as u64)).sum();
            let got = sauer_shelah(vc, k);
            assert_eq!(got, expected);
            if vc >= k {
                assert_eq!(got, BigUint::from(2u32).pow(k as u32));
            }
            if vc > 2 && k >= 2 {
                assert!(got <= BigUint::from(k).pow(vc as u32));
            }
        }
    }
}

fn random_plane(n: usize, d: usize, rng: &mut linalg::Rng) -> AffineSubspace {
    let basis = linalg::random_frame(n, d, rng);
    let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let base = dir.normalize() * rng.random_range(0.0..0.95);
    AffineSubspace::new(base, basis).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bounds_are_monotone(
        d in 1usize..4,
        v in 0.1f64..10.0,
        tau in 0.05f64..0.9,
        eps in 0.01f64..0.5,
        delta in 0.01f64..0.5,
        f in 1.01f64..3.0,
    ) {
        let p = BoundParams::new(d, v, tau, eps, delta).unwrap();
        let s = sample_complexity(&p).unwrap();
        let u = covering_bound(&p, eps).unwrap();
        let bigger_v = BoundParams { volume: v * f, ..p };
        let smaller_tau = BoundParams { tau: tau / f, ..p };
        let bigger_eps = BoundParams { eps: (eps * f).min(0.99), ..p };
        let bigger_delta = BoundParams { delta: (delta * f).min(0.99), ..p };
        // U ln^4(U / eps) is increasing once U >= eps; a cover needs at least one ball.
        prop_assume!(covering_bound(&bigger_eps, bigger_eps.eps).unwrap() >= 1.0);
        prop_assert!(covering_bound(&bigger_v, eps).unwrap() >= u);
        prop_assert!(covering_bound(&smaller_tau, eps).unwrap() >= u);
        prop_assert!(sample_complexity(&bigger_v).unwrap() >= s);
        prop_assert!(sample_complexity(&smaller_tau).unwrap() >= s);
        prop_assert!(sample_complexity(&bigger_eps).unwrap() <= s);
        prop_assert!(sample_complexity(&bigger_delta).unwrap() <= s);
        let by_hand = s_g_by_hand(d, v, tau, eps, delta, 1.0);
        prop_assert!((s - by_hand).abs() <= 1e-9 * by_hand);
    }

    #[test]
    fn lifting_identity_holds(seed in 0u64..1_000_000, n in 1usize..=8, planes in 1usize..=5, dfrac in 0.0f64..1.0) {
        let mut rng = linalg::rng(seed);
        let d = ((n + 1) as f64 * dfrac) as usize % (n + 1);
        let hs: Vec<AffineSubspace> = (0..planes).map(|_| random_plane(n, d, &mut rng)).collect();
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)).normalize() * rng.random_range(0.0..1.0);
        let check = lift_identity_check(&x, &hs).unwrap();
        let brute = hs.iter().map(|h| h.residual(&x).norm_squared()).fold(f64::INFINITY, f64::min);
        prop_assert!((check.lhs - brute).abs() <= 1e-12);
        prop_assert!((check.lhs - check.rhs).abs() <= 1e-9);
        prop_assert!(check.psi_norm <= 1.0 + 1e-12 && check.max_phi_norm <= 1.0 + 1e-12);
    }

    #[test]
    fn rademacher_of_symmetric_class_is_nonnegative(seed in 0u64..10_000, rows in 1usize..5, s in 1usize..12) {
        let mut rng = linalg::rng(seed);
        let half = DMatrix::from_fn(rows, s, |_, _| rng.random_range(-1.0..1.0));
        let full = DMatrix::from_fn(2 * rows, s, |i, j| if i < rows { half[(i, j)] } else { -half[(i - rows, j)] });
        prop_assert!(empirical_rademacher(&full, 50, seed).unwrap().mean >= 0.0);
    }

    #[test]
    fn fat_bound_is_nonincreasing(k in 1usize..20, l in 1usize..20, g in 0.01f64..2.0, f in 1.0f64..3.0) {
        prop_assert!(fat_bound_maxmin(k, l, g * f, 1.0) <= fat_bound_maxmin(k, l, g, 1.0));
        prop_assert_eq!(fat_bound_maxmin(k, l, 2.0 + g, 1.0), 0.0);
    }
}
