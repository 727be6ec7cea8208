use std::f64::consts::PI;

use manifold_core::geometry::io::{read_binary, read_csv, write_binary, write_csv};
use manifold_core::geometry::{
    dist_to_affine, estimate_tangent, federer_reach, greedy_net, hausdorff_distance,
    AffineSubspace, PointCloud,
};
use manifold_core::linalg::{self, principal_angles};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng as _;

fn circle(count: usize, radius: f64) -> (PointCloud, Vec<AffineSubspace>) {
    let mut pts = Vec::new();
    let mut tans = Vec::new();
    for i in 0..count {
        let t = 2.0 * PI * i as f64 / count as f64;
        let p = DVector::from_row_slice(&[radius * t.cos(), radius * t.sin()]);
        tans.push(
            AffineSubspace::new(
                p.clone(),
                DMatrix::from_column_slice(2, 1, &[-t.sin(), t.cos()]),
            )
            .unwrap(),
        );
        pts.push(p);
    }
    (PointCloud::new(pts).unwrap(), tans)
}

fn torus(count: usize, big: f64, small: f64, seed: u64) -> (PointCloud, Vec<AffineSubspace>) {
    let mut rng = linalg::rng(seed);
    let mut pts = Vec::new();
    let mut tans = Vec::new();
    for _ in 0..count {
        let (u, v): (f64, f64) = (
            rng.random_range(0.0..2.0 * PI),
            rng.random_range(0.0..2.0 * PI),
        );
        let p = DVector::from_row_slice(&[
            (big + small * v.cos()) * u.cos(),
            (big + small * v.cos()) * u.sin(),
            small * v.sin(),
        ]);
        let du = DVector::from_row_slice(&[-u.sin(), u.cos(), 0.0]);
        let dv = DVector::from_row_slice(&[-v.sin() * u.cos(), -v.sin() * u.sin(), v.cos()]);
        tans.push(AffineSubspace::new(p.clone(), DMatrix::from_columns(&[du, dv])).unwrap());
        pts.push(p);
    }
    (PointCloud::new(pts).unwrap(), tans)
}

fn random_cloud(n: usize, count: usize, seed: u64) -> PointCloud {
    let mut rng = linalg::rng(seed);
    PointCloud::new(
        (0..count)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

#[test]
fn circle_and_torus_reach() {
    let (c, t) = circle(2000, 1.0);
    let r = federer_reach(&c, &t).unwrap().value();
    assert!((0.9..=1.05).contains(&r), "{r}");
    let (c, t) = torus(500, 2.0, 0.5, 3);
    let r = federer_reach(&c, &t).unwrap().value();
    assert!((0.4..=0.55).contains(&r), "{r}");
}

#[test]
fn reach_argpair_attains_value() {
    let (c, t) = circle(300, 0.7);
    let est = federer_reach(&c, &t).unwrap();
    let (a, b) = est.pair().unwrap();
    assert_ne!(a, b);
    let diff = c.point(a) - c.point(b);
    let val = diff.norm_squared() / (2.0 * t[a].residual(c.point(b)).norm());
    assert!((val - est.value()).abs() <= 1e-12 * val);
}

#[test]
fn tangent_estimates() {
    let mut rng = linalg::rng(8);
    let frame = linalg::random_frame(5, 2, &mut rng);
    let pts: Vec<DVector<f64>> = (0..200)
        .map(|_| &frame * DVector::from_fn(2, |_, _| rng.random_range(-0.5..0.5)))
        .collect();
    let cloud = PointCloud::new(pts).unwrap();
    for i in [0, 17, 99] {
        let t = estimate_tangent(&cloud, i, 0.3, 2).unwrap();
        assert!(principal_angles(t.basis(), &frame)
            .iter()
            .all(|a| *a < 1e-8));
        assert_eq!(t.base(), cloud.point(i));
    }
    let (c, tans) = circle(1000, 1.0);
    for i in [0, 250, 777] {
        let t = estimate_tangent(&c, i, 0.1, 1).unwrap();
        assert!(principal_angles(t.basis(), tans[i].basis())[0] < 0.15);
    }
}

#[test]
fn dist_to_affine_matches_least_squares() {
    let mut rng = linalg::rng(2);
    for _ in 0..50 {
        let basis = linalg::random_frame(6, 3, &mut rng);
        // Non-orthonormal spanning set for an independent least-squares solve.
        let span = &basis
            * DMatrix::from_fn(3, 3, |i, j| {
                if i == j {
                    2.0
                } else {
                    rng.random_range(-0.3..0.3)
                }
            });
        let base = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let h = AffineSubspace::new(base.clone(), basis).unwrap();
        let coef = (span.transpose() * &span)
            .lu()
            .solve(&(span.transpose() * (&x - &base)))
            .unwrap();
        let brute = (&x - &base - &span * coef).norm();
        assert!((dist_to_affine(&x, &h).unwrap() - brute).abs() < 1e-9);
    }
    let axis = AffineSubspace::new(
        DVector::zeros(2),
        DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
    )
    .unwrap();
    assert!(dist_to_affine(&DVector::from_row_slice(&[1.0, 2.0, 3.0]), &axis).is_err());
}

#[test]
fn hausdorff_matches_brute_force() {
    for seed in 0..5 {
        let a = random_cloud(3, 50, seed);
        let b = random_cloud(3, 50, seed + 100);
        let directed = |x: &PointCloud, y: &PointCloud| {
            x.points()
                .iter()
                .map(|p| {
                    y.points()
                        .iter()
                        .map(|q| (p - q).norm())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        let brute = directed(&a, &b).max(directed(&b, &a));
        assert_eq!(hausdorff_distance(&a, &b).unwrap(), brute);
        assert_eq!(hausdorff_distance(&b, &a).unwrap(), brute);
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn binary_header_layout() {
    let cloud = random_cloud(3, 4, 1);
    let mut buf = Vec::new();
    write_binary(&cloud, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"MNFD");
    assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
    assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 4);
    assert_eq!(buf.len(), 16 + 8 * (4 * 3 + 4));
    assert_eq!(read_binary(&buf[..]).unwrap(), cloud);
    let mut text = Vec::new();
    write_csv(&cloud, &mut text, true).unwrap();
    let back = read_csv(&text[..], true).unwrap();
    for (p, q) in back.points().iter().zip(cloud.points()) {
        assert!((p - q).norm() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn net_covers_and_packs(seed in 0u64..1_000_000, n in 1usize..=20, count in 1usize..=2000) {
        let cloud = random_cloud(n, count, seed);
        let scale = (n as f64).sqrt();
        for r in [0.05, 0.1, 0.3, 0.6, 1.2].map(|f| f * scale) {
            let net = greedy_net(&cloud, r).unwrap();
            prop_assert_eq!(net[0], 0);
            for p in cloud.points() {
                prop_assert!(net.iter().any(|&j| (p - cloud.point(j)).norm() < r));
            }
            for (a, &i) in net.iter().enumerate() {
                for &j in &net[a + 1..] {
                    prop_assert!((cloud.point(i) - cloud.point(j)).norm() >= r);
                }
            }
        }
    }

    #[test]
    fn reach_is_scale_covariant(radius in 0.2f64..1.0, lambda in 0.1f64..5.0, count in 20usize..200) {
        let (c, t) = circle(count, radius);
        let base = federer_reach(&c, &t).unwrap().value();
        let scaled = c.map_points(|p| p * lambda).unwrap();
        let tans: Vec<AffineSubspace> =
            t.iter().map(|h| AffineSubspace::new(h.base() * lambda, h.basis().clone()).unwrap()).collect();
        let r = federer_reach(&scaled, &tans).unwrap().value();
        prop_assert!((r - lambda * base).abs() <= 1e-9 * lambda * base);
    }

    #[test]
    fn reach_never_grows_when_points_are_added(seed in 0u64..10_000, count in 10usize..80, extra in 1usize..40) {
        let (c, t) = torus(count + extra, 0.6, 0.25, seed);
        let sub: Vec<usize> = (0..count).collect();
        let small = federer_reach(&c.subset(&sub).unwrap(), &t[..count]).unwrap().value();
        let all = federer_reach(&c, &t).unwrap().value();
        prop_assert!(all <= small);
    }

    #[test]
    fn distance_decomposition(seed in 0u64..10_000, n in 1usize..8, dfrac in 0.0f64..1.0) {
        let mut rng = linalg::rng(seed);
        let d = ((n as f64 + 1.0) * dfrac) as usize % (n + 1);
        let basis = linalg::random_frame(n, d, &mut rng);
        let base = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let h = AffineSubspace::new(base.clone(), basis).unwrap();
        let dist = dist_to_affine(&x, &h).unwrap();
        let along = (h.project(&x) - &base).norm();
        prop_assert!((dist * dist + along * along - (&x - &base).norm_squared()).abs() < 1e-12);
    }
}
