use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bump::profile;
use super::field::{active_cylinders, asdf_grad_hess, AsdfJet};
use super::packet::CylinderPacket;
use super::AsdfConfig;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::linalg;

/// Spectral projection onto the top `codim` eigenvectors of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralProjection {
    pub projector: DMatrix<f64>,
    /// Orthonormal columns spanning the projector's range.
    pub fiber_basis: DMatrix<f64>,
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// `lambda_{n-codim} - lambda_{n-codim-1}` (0-based, ascending); infinite when
    /// `codim` is `0` or `n`.
    pub gap: f64,
    /// Whether the top eigenvalues lie in `[cbar2, cbar3]`.
    pub in_interval: bool,
}

/// Projector onto the span of the top `codim` eigenvectors of `hessian`.
pub fn pi_hi(
    hessian: &DMatrix<f64>,
    codim: usize,
    gap_tol: f64,
    cfg: &AsdfConfig,
) -> Result<SpectralProjection> {
    let n = hessian.nrows();
    if hessian.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: hessian.ncols(),
        });
    }
    if codim > n {
        return Err(Error::InvalidParameter(
            "codimension exceeds dimension".into(),
        ));
    }
    let asym = (hessian - hessian.transpose()).amax();
    if asym > 1e-9 * (1.0 + hessian.amax()) {
        return Err(Error::InvalidParameter(format!(
            "matrix is not symmetric (defect {asym:.3e})"
        )));
    }
    let sym = (hessian + hessian.transpose()) * 0.5;
    let (vals, vecs) = linalg::sym_eigen_ascending(&sym);
    let fiber_basis = vecs.columns(n - codim, codim).into_owned();
    let projector = &fiber_basis * fiber_basis.transpose();
    let gap = if codim == 0 || codim == n {
        f64::INFINITY
    } else {
        vals[n - codim] - vals[n - codim - 1]
    };
    if gap < gap_tol {
        return Err(Error::InsufficientGap { gap, tol: gap_tol });
    }
    let in_interval = vals[n - codim..]
        .iter()
        .all(|&l| l >= cfg.cbar2 && l <= cfg.cbar3);
    Ok(SpectralProjection {
        projector,
        fiber_basis,
        eigenvalues: vals,
        gap,
        in_interval,
    })
}

/// A point of the putative manifold with its normal fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleChart {
    pub base_point: DVector<f64>,
    pub projector_hi: DMatrix<f64>,
    pub fiber_basis: DMatrix<f64>,
    pub owning_cylinder: usize,
    /// `|Pi_hi(z) dF(z)|` at the base point.
    pub residual: f64,
}

impl BundleChart {
    /// Orthonormal basis of the complement of the fiber.
    pub fn tangent_basis(&self) -> DMatrix<f64> {
        linalg::orthonormal_complement(&self.fiber_basis)
    }
}

struct NewtonState {
    jet: AsdfJet,
    proj: SpectralProjection,
    zeta: DVector<f64>,
}

fn newton_state(
    packet: &CylinderPacket,
    z: &DVector<f64>,
    cfg: &AsdfConfig,
) -> Result<NewtonState> {
    let jet = asdf_grad_hess(packet, z)?;
    let proj = pi_hi(&jet.hess, packet.n() - packet.d(), cfg.gap_tol, cfg)?;
    let zeta = &proj.projector * &jet.grad;
    Ok(NewtonState { jet, proj, zeta })
}

fn owning_cylinder(packet: &CylinderPacket, z: &DVector<f64>) -> usize {
    let d = packet.d();
    let two_tb = 2.0 * packet.tau_bar();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, 0);
    for (i, c) in active_cylinders(packet, z) {
        let w = c.to_local(z);
        let t = w.rows(0, d).norm();
        let th = profile(t / two_tb).0;
        if th > best.0 || (th == best.0 && t < best.1) {
            best = (th, t, i);
        }
    }
    best.2
}

/// Damped Newton on `zeta(z) = Pi_hi(z) dF(z)` with moves restricted to the
/// current fiber span.
pub fn solve_base_point(
    packet: &CylinderPacket,
    z0: &DVector<f64>,
    cfg: &AsdfConfig,
) -> Result<BundleChart> {
    let mut z = z0.clone();
    let mut st = newton_state(packet, &z, cfg)?;
    let mut steps = 0;
    loop {
        let res = st.zeta.norm();
        if res <= cfg.newton_tol {
            return Ok(BundleChart {
                owning_cylinder: owning_cylinder(packet, &z),
                base_point: z,
                projector_hi: st.proj.projector,
                fiber_basis: st.proj.fiber_basis,
                residual: res,
            });
        }
        if steps >= cfg.max_newton_steps {
            return Err(Error::NoConvergence(steps));
        }
        steps += 1;
        let nb = &st.proj.fiber_basis;
        let reduced = nb.transpose() * &st.jet.hess * nb;
        let rhs = nb.transpose() * &st.jet.grad;
        let coef = reduced
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NoConvergence(steps))?;
        let delta = -(nb * coef);
        let mut t = 1.0;
        let mut accepted = None;
        let mut escaped = false;
        for _ in 0..=cfg.max_halvings {
            let cand = &z + &delta * t;
            match newton_state(packet, &cand, cfg) {
                Ok(s) if s.zeta.norm() < res => {
                    accepted = Some((cand, s));
                    break;
                }
                Ok(_) => {}
                Err(Error::OutOfDomain) | Err(Error::DegenerateCover) => escaped = true,
                Err(Error::InsufficientGap { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        match accepted {
            Some((zn, s)) => {
                z = zn;
                st = s;
            }
            None if escaped => return Err(Error::EscapedDomain),
            None => return Err(Error::NoConvergence(steps)),
        }
    }
}

/// Sampled putative manifold: deduplicated charts.
#[derive(Debug, Clone, PartialEq)]
pub struct PutativeMesh {
    pub charts: Vec<BundleChart>,
    /// Largest Newton residual over the charts.
    pub tolerance: f64,
}

impl PutativeMesh {
    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn base_points(&self) -> Vec<DVector<f64>> {
        self.charts.iter().map(|c| c.base_point.clone()).collect()
    }

    /// Index and distance of the chart whose base point is nearest to `z`.
    pub fn nearest(&self, z: &DVector<f64>) -> Option<(usize, f64)> {
        self.charts
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (&c.base_point - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Base points as CSV rows and projectors as a JSON sidecar.
    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
        for c in &self.charts {
            let row: Vec<String> = c.base_point.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(f, "{}", row.join(","))?;
        }
        f.flush()?;
        let side: Vec<ChartJson> = self
            .charts
            .iter()
            .map(|c| ChartJson {
                owning_cylinder: c.owning_cylinder,
                residual: c.residual,
                projector: c.projector_hi.transpose().iter().copied().collect(),
            })
            .collect();
        let doc = serde_json::json!({ "tolerance": self.tolerance, "charts": side });
        std::fs::write(json_path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ChartJson {
    owning_cylinder: usize,
    residual: f64,
    projector: Vec<f64>,
}

/// Solves from every seed in parallel, drops failures, and merges base points
/// closer than `tau_bar * cfg.dedup_frac` (sequential pass in lexicographic order).
pub fn extract_putative_manifold(
    packet: &CylinderPacket,
    seeds: &PointCloud,
    cfg: &AsdfConfig,
) -> Result<PutativeMesh> {
    if seeds.dim() != packet.n() {
        return Err(Error::DimensionMismatch {
            expected: packet.n(),
            got: seeds.dim(),
        });
    }
    let mut charts: Vec<BundleChart> = seeds
        .points()
        .par_iter()
        .filter_map(|z| solve_base_point(packet, z, cfg).ok())
        .collect();
    if charts.is_empty() {
        return Err(Error::EmptyMesh);
    }
    charts.sort_by(|a, b| {
        a.base_point
            .iter()
            .zip(b.base_point.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let r = packet.tau_bar() * cfg.dedup_frac;
    let mut kept: Vec<BundleChart> = Vec::with_capacity(charts.len());
    for c in charts {
        if kept
            .iter()
            .all(|k| (&k.base_point - &c.base_point).norm() >= r)
        {
            kept.push(c);
        }
    }
    let tolerance = kept.iter().map(|c| c.residual).fold(0.0, f64::max);
    Ok(PutativeMesh {
        charts: kept,
        tolerance,
    })
}

/// Decomposes `z = base + v` with `base` on the putative manifold and `v` in the
/// fiber at `base`, by alternating fiber solves and tangential corrections.
pub fn bundle_coordinates(
    packet: &CylinderPacket,
    z: &DVector<f64>,
    cfg: &AsdfConfig,
) -> Result<(BundleChart, DVector<f64>)> {
    let mut chart = solve_base_point(packet, z, cfg)?;
    for _ in 0..cfg.bundle_max_iter {
        let diff = z - &chart.base_point;
        let v = &chart.projector_hi * &diff;
        let r = &diff - &v;
        if r.norm() <= cfg.bundle_tol {
            return Ok((chart, v));
        }
        chart = solve_base_point(packet, &(&chart.base_point + r), cfg)?;
    }
    Err(Error::DecompositionFailed(format!(
        "no convergence after {} iterations",
        cfg.bundle_max_iter
    )))
}
