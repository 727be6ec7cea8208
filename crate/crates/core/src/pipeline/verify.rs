use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::evaluate::{Certificate, Residual};
use super::TestConfig;
use crate::asdf::bundle_coordinates;
use crate::error::Result;
use crate::geometry::{greedy_net_points, reach_of_points, AffineSubspace, PointCloud};
use crate::linalg::gram_schmidt;
use crate::whitney::global_section;

/// Outcome of re-checking a certificate against the data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub dense_points: usize,
    #[serde(serialize_with = "super::report::ser_f64")]
    pub reach: f64,
    /// Required reach is `reach_constant * tau`.
    pub reach_constant: f64,
    pub reach_ok: bool,
    pub certified_loss: f64,
    #[serde(serialize_with = "super::report::ser_f64")]
    pub dense_loss: f64,
    pub loss_ok: bool,
    pub max_c2_proxy: f64,
    pub c2_bound: f64,
    pub c2_ok: bool,
    pub integrity_ok: bool,
    pub failures: Vec<String>,
}

/// Relative agreement required between the certified and the recomputed loss.
pub const LOSS_AGREEMENT: f64 = 0.1;

/// Points of the output manifold with tangents from central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSample {
    pub points: Vec<DVector<f64>>,
    /// Orthonormal `n x d` tangent bases.
    pub tangents: Vec<DMatrix<f64>>,
}

/// Dense sample of the output manifold: `b + s(b)` at every mesh base point, with
/// the tangent spanned by the central differences of `b' + s(b')` over base points
/// `b'` reached from tangential offsets `b +- h t_k`, `h = tau_bar / 10`.
pub fn dense_output_sample(cert: &Certificate, config: &TestConfig) -> OutputSample {
    let packet = &cert.packet;
    let cfg = config.asdf_config();
    let h = 0.1 * packet.tau_bar();
    let lift = |z: &DVector<f64>| -> Option<DVector<f64>> {
        let (chart, _) = bundle_coordinates(packet, z, &cfg).ok()?;
        let s = global_section(packet, &cert.sections, &chart).ok()?;
        Some(&chart.base_point + s)
    };
    let samples: Vec<(DVector<f64>, DMatrix<f64>)> = cert
        .mesh
        .charts
        .par_iter()
        .filter_map(|chart| {
            let s = global_section(packet, &cert.sections, chart).ok()?;
            let t = chart.tangent_basis();
            let mut diffs = DMatrix::zeros(t.nrows(), t.ncols());
            for k in 0..t.ncols() {
                let plus = lift(&(&chart.base_point + t.column(k) * h))?;
                let minus = lift(&(&chart.base_point - t.column(k) * h))?;
                diffs.set_column(k, &(plus - minus));
            }
            let q = gram_schmidt(&diffs, 1e-12);
            (q.ncols() == t.ncols()).then(|| (&chart.base_point + s, q))
        })
        .collect();
    let (points, tangents) = samples.into_iter().unzip();
    OutputSample { points, tangents }
}

/// Re-checks a certificate: reach of the densely sampled output manifold with
/// difference tangents, the loss recomputed against that sample (tangent-plane distances,
/// out-of-tube residuals reused), the section coefficient bounds and the packet's
/// integrity. `cloud` is in ambient coordinates.
pub fn verify_certificate(
    cert: &Certificate,
    certified_loss: f64,
    residuals: &[Residual],
    cloud: &PointCloud,
    config: &TestConfig,
) -> Result<VerificationReport> {
    let packet = &cert.packet;
    let tb = packet.tau_bar();
    let d = packet.d();
    let c2_bound = 2.0 * tb / packet.tau();
    let max_c2 = cert.sections.max_c2_proxy();
    let c2_ok = max_c2 <= c2_bound * (1.0 + 1e-9);
    let mut failures = Vec::new();
    let integrity = packet.integrity();
    if let Err(e) = &integrity {
        failures.push(format!("packet integrity: {e}"));
    }
    if !c2_ok {
        failures.push(format!(
            "section coefficient {max_c2:.3e} exceeds {c2_bound:.3e}"
        ));
    }
    let mut report = VerificationReport {
        passed: false,
        dense_points: 0,
        reach: 0.0,
        reach_constant: config.reach_constant,
        reach_ok: false,
        certified_loss,
        dense_loss: f64::INFINITY,
        loss_ok: false,
        max_c2_proxy: max_c2,
        c2_bound,
        c2_ok,
        integrity_ok: integrity.is_ok(),
        failures,
    };
    if integrity.is_err() {
        return Ok(report);
    }
    let dense = dense_output_sample(cert, config);
    report.dense_points = dense.points.len();
    if dense.points.len() < d + 1 {
        report
            .failures
            .push("output manifold sample is empty".into());
        return Ok(report);
    }
    let pts = dense.points;
    let tans = pts
        .iter()
        .zip(dense.tangents)
        .map(|(p, t)| AffineSubspace::new(p.clone(), t))
        .collect::<Result<Vec<_>>>()?;
    // Pairs closer than the difference step carry no curvature information; the
    // estimate runs on a net of spacing `reach_net_frac * tau_bar`.
    let net = greedy_net_points(&pts, config.reach_net_frac * tb)?;
    let net_pts: Vec<DVector<f64>> = net.iter().map(|&i| pts[i].clone()).collect();
    let net_tans: Vec<AffineSubspace> = net.iter().map(|&i| tans[i].clone()).collect();
    let reach = reach_of_points(&net_pts, &net_tans)?.value();
    report.reach = reach;
    report.reach_ok = reach >= config.reach_constant * packet.tau();
    if !report.reach_ok {
        report.failures.push(format!(
            "output reach {reach:.4} below {:.4}",
            config.reach_constant * packet.tau()
        ));
    }

    let reduced: Vec<DVector<f64>> = cloud
        .points()
        .iter()
        .map(|p| cert.basis.tr_mul(p))
        .collect();
    let dense_loss: f64 = residuals
        .par_iter()
        .map(|r| {
            if !r.in_tube {
                return r.weight * r.residual * r.residual;
            }
            let z = &reduced[r.index];
            let orth = (cloud.point(r.index) - &cert.basis * z).norm();
            let (k, _) = pts
                .iter()
                .enumerate()
                .map(|(k, p)| (k, (p - z).norm_squared()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("sample is nonempty");
            let dist = tans[k].residual(z).norm();
            r.weight * (dist * dist + orth * orth)
        })
        .sum();
    report.dense_loss = dense_loss;
    report.loss_ok = (dense_loss - certified_loss).abs()
        <= LOSS_AGREEMENT * certified_loss.max(dense_loss) + 1e-14;
    if !report.loss_ok {
        report.failures.push(format!(
            "recomputed loss {dense_loss:.4e} differs from certified {certified_loss:.4e}"
        ));
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}
