use std::f64::consts::PI;

use manifold_core::asdf::{
    self, AsdfConfig, AsdfThresholds, Cylinder, CylinderPacket, ValidateOptions,
};
use manifold_core::geometry::{self, AffineSubspace, PointCloud};
use manifold_core::linalg;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn circle(count: usize) -> (PointCloud, Vec<AffineSubspace>) {
    let mut pts = Vec::new();
    let mut tan = Vec::new();
    for i in 0..count {
        let t = 2.0 * PI * i as f64 / count as f64;
        let p = DVector::from_row_slice(&[t.cos(), t.sin()]);
        tan.push(
            AffineSubspace::new(
                p.clone(),
                DMatrix::from_row_slice(2, 1, &[-t.sin(), t.cos()]),
            )
            .unwrap(),
        );
        pts.push(p);
    }
    (PointCloud::new(pts).unwrap(), tan)
}

fn torus_point(u: f64, v: f64, big: f64, small: f64) -> (DVector<f64>, DMatrix<f64>) {
    let p = DVector::from_row_slice(&[
        (big + small * v.cos()) * u.cos(),
        (big + small * v.cos()) * u.sin(),
        small * v.sin(),
    ]);
    let du = DVector::from_row_slice(&[-u.sin(), u.cos(), 0.0]);
    let dv = DVector::from_row_slice(&[-v.sin() * u.cos(), -v.sin() * u.sin(), v.cos()]);
    (p, DMatrix::from_columns(&[du, dv]))
}

fn torus(nu: usize, nv: usize, big: f64, small: f64) -> (PointCloud, Vec<AffineSubspace>) {
    let mut pts = Vec::new();
    let mut tan = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            let (p, t) = torus_point(
                2.0 * PI * i as f64 / nu as f64,
                2.0 * PI * j as f64 / nv as f64,
                big,
                small,
            );
            tan.push(AffineSubspace::new(p.clone(), t).unwrap());
            pts.push(p);
        }
    }
    (PointCloud::new(pts).unwrap(), tan)
}

fn flat_packet() -> CylinderPacket {
    let mut pts = Vec::new();
    for i in -10..=10 {
        for j in -10..=10 {
            pts.push(DVector::from_row_slice(&[
                i as f64 * 0.01,
                j as f64 * 0.01,
                0.0,
            ]));
        }
    }
    let cloud = PointCloud::new(pts).unwrap();
    let basis = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let tan: Vec<_> = cloud
        .points()
        .iter()
        .map(|p| AffineSubspace::new(p.clone(), basis.clone()).unwrap())
        .collect();
    asdf::ideal_packet(&cloud, &tan, 0.5, 0.1).unwrap()
}

fn fd_check(packet: &CylinderPacket, z: &DVector<f64>) -> (f64, f64) {
    let jet = asdf::asdf_grad_hess(packet, z).unwrap();
    let h = 1e-5;
    let n = z.len();
    let mut g = DVector::zeros(n);
    let mut hs = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[k] += h;
        zm[k] -= h;
        g[k] = (asdf::asdf_eval(packet, &zp).unwrap() - asdf::asdf_eval(packet, &zm).unwrap())
            / (2.0 * h);
        let col = (asdf::asdf_grad_hess(packet, &zp).unwrap().grad
            - asdf::asdf_grad_hess(packet, &zm).unwrap().grad)
            / (2.0 * h);
        hs.set_column(k, &col);
    }
    let scale_g = jet.grad.norm().max(jet.value.sqrt()).max(1e-3);
    let scale_h = jet.hess.norm().max(1.0);
    (
        (g - &jet.grad).norm() / scale_g,
        (hs - &jet.hess).norm() / scale_h,
    )
}

#[test]
fn circle_ideal_packet_size_and_tangents() {
    let (cloud, tan) = circle(2000);
    let p = asdf::ideal_packet(&cloud, &tan, 0.5, 0.1).unwrap();
    let expect = (2.0 * PI / 0.025).ceil();
    assert!(
        (p.len() as f64) >= 0.5 * expect && (p.len() as f64) <= 1.5 * expect,
        "{}",
        p.len()
    );
    for c in p.cylinders() {
        let t = c.center[1].atan2(c.center[0]);
        let a = DMatrix::from_row_slice(2, 1, &[-t.sin(), t.cos()]);
        let ang = linalg::principal_angles(&a, &c.tangent())[0];
        assert!(ang < 0.1);
    }
    let rep = asdf::validate_packet(&p, ValidateOptions::default());
    assert!(rep.is_valid(), "{}", rep.summary());
    let single = asdf::ideal_packet(&cloud.subset(&[3]).unwrap(), &tan[3..4], 0.5, 0.1).unwrap();
    assert_eq!(single.len(), 1);
}

#[test]
fn symmetric_overlap_has_no_tangential_gradient() {
    let c1 = Cylinder::new(
        DMatrix::identity(2, 2),
        DVector::from_row_slice(&[-0.05, 0.0]),
        0.1,
        1,
    )
    .unwrap();
    let c2 = Cylinder::new(
        DMatrix::identity(2, 2),
        DVector::from_row_slice(&[0.05, 0.0]),
        0.1,
        1,
    )
    .unwrap();
    let t = 0.1f64;
    let r = DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]);
    let rl = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
    let c1 = Cylinder::new(rl, c1.center, 0.1, 1).unwrap();
    let c2 = Cylinder::new(r, c2.center, 0.1, 1).unwrap();
    let p =
        CylinderPacket::new_unchecked(vec![c1, c2], 1.0, asdf::AlignmentConstants::for_ratio(0.1))
            .unwrap();
    let jet = asdf::asdf_grad_hess(&p, &DVector::from_row_slice(&[0.0, 0.03])).unwrap();
    assert!(jet.grad[0].abs() < 1e-14);
    let (eg, eh) = fd_check(&p, &DVector::from_row_slice(&[0.0, 0.03]));
    assert!(eg < 1e-5 && eh < 1e-5);
}

#[test]
fn derivatives_on_three_fixtures() {
    let (cc, ct) = circle(2000);
    let circle_p = asdf::ideal_packet(&cc, &ct, 0.5, 0.1).unwrap();
    let (tc, tt) = torus(160, 40, 0.6, 0.25);
    let torus_p = asdf::ideal_packet(&tc, &tt, 0.25, 0.2).unwrap();
    let flat = flat_packet();
    let mut rng = linalg::rng(11);
    for (p, cloud) in [(&flat, None), (&circle_p, Some(&cc)), (&torus_p, Some(&tc))] {
        let mut checked = 0;
        while checked < 30 {
            let z = match cloud {
                None => DVector::from_row_slice(&[
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.03..0.03),
                ]),
                Some(c) => {
                    let base = c.point(rng.random_range(0..c.len()));
                    let off = DVector::from_fn(base.len(), |_, _| {
                        rng.random_range(-0.5..0.5) * p.tau_bar()
                    });
                    base + off
                }
            };
            if asdf::asdf_eval(p, &z).is_err() {
                continue;
            }
            let (eg, eh) = fd_check(p, &z);
            assert!(eg < 1e-5 && eh < 1e-5, "{eg} {eh} at {z}");
            checked += 1;
        }
    }
}

#[test]
fn pi_hi_matches_eigendecomposition() {
    let mut rng = linalg::rng(5);
    let cfg = AsdfConfig::default();
    for _ in 0..20 {
        let q = linalg::random_rotation(5, &mut rng);
        let eigs = [0.01, 0.02, 1.9, 2.0, 2.1];
        let h = &q * DMatrix::from_diagonal(&DVector::from_row_slice(&eigs)) * q.transpose();
        let p = asdf::pi_hi(&h, 3, 0.25, &cfg).unwrap();
        let top = q.columns(2, 3);
        let oracle = &top * top.transpose();
        assert!((p.projector - oracle).amax() < 1e-8);
    }
}

#[test]
fn circle_base_points_and_bundle() {
    let (cc, ct) = circle(2000);
    let p = asdf::ideal_packet(&cc, &ct, 0.5, 0.1).unwrap();
    let cfg = AsdfConfig::default();
    for k in 0..12 {
        let phi = 0.5 * k as f64;
        let z0 = DVector::from_row_slice(&[1.02 * phi.cos(), 1.02 * phi.sin()]);
        let c = asdf::solve_base_point(&p, &z0, &cfg).unwrap();
        assert!((c.base_point.norm() - 1.0).abs() < 5e-3);
        let again = asdf::solve_base_point(&p, &c.base_point, &cfg).unwrap();
        assert!((again.base_point - &c.base_point).norm() < 1e-10);
        let z = DVector::from_row_slice(&[0.97 * (phi + 0.01).cos(), 0.97 * (phi + 0.01).sin()]);
        let (chart, v) = asdf::bundle_coordinates(&p, &z, &cfg).unwrap();
        assert!((&chart.base_point + &v - &z).norm() < 1e-8);
        assert!((&chart.projector_hi * &v - &v).norm() < 1e-10);
    }
    let far = asdf::solve_base_point(&p, &DVector::from_row_slice(&[3.0, 3.0]), &cfg);
    assert!(far.is_err());
}

#[test]
fn circle_conditions_and_rotated_violation() {
    let (cc, ct) = circle(2000);
    let p = asdf::ideal_packet(&cc, &ct, 0.5, 0.1).unwrap();
    let idx: Vec<usize> = (0..2000).step_by(100).collect();
    let sample: Vec<_> = idx.iter().map(|&i| cc.point(i).clone()).collect();
    let frames: Vec<_> = idx
        .iter()
        .map(|&i| linalg::rotation_from_tangent(ct[i].basis()))
        .collect();
    let rep =
        asdf::check_asdf_conditions(&p, &sample, &frames, 0.05, AsdfThresholds::default()).unwrap();
    assert!(rep.passed(), "{:?}", rep);
    assert!(rep.c1 >= 0.1 && rep.big_c1 <= 10.0);

    let flat = flat_packet();
    let z = DVector::zeros(3);
    let rep = asdf::check_asdf_conditions(
        &flat,
        &[z.clone()],
        &[DMatrix::identity(3, 3)],
        0.0,
        AsdfThresholds::default(),
    )
    .unwrap();
    assert!((rep.c1 - 1.0).abs() < 1e-12 && (rep.big_c1 - 1.0).abs() < 1e-12);

    let mut cyl = flat.cylinders().to_vec();
    let i0 = (0..cyl.len())
        .min_by(|&a, &b| cyl[a].center.norm().total_cmp(&cyl[b].center.norm()))
        .unwrap();
    let z = cyl[i0].center.clone();
    let r = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    cyl[i0] = Cylinder::new(r, cyl[i0].center.clone(), cyl[i0].scale, 2).unwrap();
    let bad = CylinderPacket::new_unchecked(cyl, flat.tau(), flat.alignment).unwrap();
    let rep = asdf::check_asdf_conditions(
        &bad,
        &[z],
        &[DMatrix::identity(3, 3)],
        0.05,
        AsdfThresholds::default(),
    )
    .unwrap();
    assert!(!rep.passed());
}

#[test]
fn flat_mesh_is_exact() {
    let p = flat_packet();
    let cfg = AsdfConfig::default();
    let mut seeds = Vec::new();
    for i in -4..=4 {
        for j in -4..=4 {
            seeds.push(DVector::from_row_slice(&[
                i as f64 * 0.02,
                j as f64 * 0.02,
                0.01 * ((i + j) as f64).sin(),
            ]));
        }
    }
    let mesh = asdf::extract_putative_manifold(&p, &PointCloud::new(seeds).unwrap(), &cfg).unwrap();
    assert_eq!(mesh.len(), 81);
    let normal = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    for c in &mesh.charts {
        assert!(c.base_point[2].abs() < 1e-10 && c.residual < 1e-10);
        assert!((&c.projector_hi - &normal).amax() < 1e-9);
    }
}

#[test]
fn circle_mesh_reach() {
    let (cc, ct) = circle(2000);
    let p = asdf::ideal_packet(&cc, &ct, 0.5, 0.1).unwrap();
    let mut rng = linalg::rng(3);
    let seeds: Vec<_> = (0..200)
        .map(|_| {
            let t: f64 = rng.random_range(0.0..2.0 * PI);
            let r: f64 = rng.random_range(0.97..1.03);
            DVector::from_row_slice(&[r * t.cos(), r * t.sin()])
        })
        .collect();
    let mesh = asdf::extract_putative_manifold(
        &p,
        &PointCloud::new(seeds).unwrap(),
        &AsdfConfig::default(),
    )
    .unwrap();
    let pts = mesh.base_points();
    let tans: Vec<_> = mesh
        .charts
        .iter()
        .map(|c| AffineSubspace::new(c.base_point.clone(), c.tangent_basis()).unwrap())
        .collect();
    let reach = geometry::reach_of_points(&pts, &tans).unwrap().value();
    assert!(reach >= 0.25, "{reach}");
    assert!(pts.iter().all(|b| (b.norm() - 1.0).abs() < 0.02));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pi_hi_is_a_projector(seed in 0u64..10_000, codim in 1usize..4) {
        let mut rng = linalg::rng(seed);
        let n = 5;
        let q = linalg::random_rotation(n, &mut rng);
        let mut eigs: Vec<f64> = (0..n).map(|i| if i < n - codim { rng.random_range(-0.2..0.2) } else { rng.random_range(1.5..2.5) }).collect();
        eigs.sort_by(f64::total_cmp);
        let h = &q * DMatrix::from_diagonal(&DVector::from_vec(eigs)) * q.transpose();
        let p = asdf::pi_hi(&h, codim, 0.25, &AsdfConfig::default()).unwrap().projector;
        prop_assert!((&p - p.transpose()).amax() < 1e-9);
        prop_assert!((&p * &p - &p).amax() < 1e-9);
        prop_assert!((p.trace() - codim as f64).abs() < 1e-6);
    }

    #[test]
    fn bump_stays_in_unit_interval(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let b = asdf::bump_theta(&DVector::from_row_slice(&[x, y]));
        prop_assert!((0.0..=1.0).contains(&b.value));
    }
}
