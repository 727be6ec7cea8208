use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::field::asdf_grad_hess;
use super::packet::CylinderPacket;
use crate::error::{Error, Result};

/// Thresholds for [`check_asdf_conditions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsdfThresholds {
    pub c1_min: f64,
    pub big_c1_max: f64,
    pub derivative_max: f64,
}

impl Default for AsdfThresholds {
    fn default() -> Self {
        Self {
            c1_min: 0.1,
            big_c1_max: 10.0,
            derivative_max: 100.0,
        }
    }
}

/// Empirical constants of the rescaled function `F_hat(w) = F(z + tau_bar Theta w) / tau_bar^2`
/// over a grid in the unit cylinder around each sample point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsdfConditionReport {
    /// `min (F_hat + rho^2) / (|y|^2 + rho^2)`.
    pub c1: f64,
    /// `max (F_hat + rho^2) / (|y|^2 + rho^2)`.
    pub big_c1: f64,
    pub max_grad: f64,
    pub max_hess: f64,
    pub points_checked: usize,
    /// Sample indices with a grid point outside the domain.
    pub domain_escapes: Vec<usize>,
    pub violations: Vec<String>,
}

impl AsdfConditionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.domain_escapes.is_empty()
    }
}

fn unit_cylinder_grid(d: usize, n: usize, per_axis: usize) -> Vec<DVector<f64>> {
    let vals: Vec<f64> = (0..per_axis)
        .map(|k| -1.0 + 2.0 * k as f64 / (per_axis - 1) as f64)
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let w = DVector::from_iterator(n, idx.iter().map(|&k| vals[k]));
        if w.rows(0, d).norm() <= 1.0 + 1e-12 && w.rows(d, n - d).norm() <= 1.0 + 1e-12 {
            out.push(w);
        }
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            return out;
        }
    }
}

/// Evaluates the two-sided quadratic comparison and the derivative magnitudes of
/// `F_hat` on a 5-per-axis grid. `frames[i]` is orthogonal with the tangent
/// directions at `sample[i]` first. Derivatives are the analytic ones, rescaled.
pub fn check_asdf_conditions(
    packet: &CylinderPacket,
    sample: &[DVector<f64>],
    frames: &[DMatrix<f64>],
    rho: f64,
    thresholds: AsdfThresholds,
) -> Result<AsdfConditionReport> {
    if sample.len() != frames.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: frames.len(),
        });
    }
    if sample.is_empty() {
        return Err(Error::EmptyInput("sample"));
    }
    let (n, d) = (packet.n(), packet.d());
    let tb = packet.tau_bar();
    let grid = unit_cylinder_grid(d, n, 5);
    let rho2 = rho * rho;
    let mut rep = AsdfConditionReport {
        c1: f64::INFINITY,
        big_c1: 0.0,
        max_grad: 0.0,
        max_hess: 0.0,
        points_checked: 0,
        domain_escapes: Vec::new(),
        violations: Vec::new(),
    };
    for (i, (z, theta)) in sample.iter().zip(frames).enumerate() {
        if z.len() != n || theta.nrows() != n || theta.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: z.len(),
            });
        }
        for w in &grid {
            let y2 = w.rows(d, n - d).norm_squared();
            if rho2 == 0.0 && y2 == 0.0 {
                continue;
            }
            let p = z + theta * w * tb;
            let jet = match asdf_grad_hess(packet, &p) {
                Ok(j) => j,
                Err(_) => {
                    if rep.domain_escapes.last() != Some(&i) {
                        rep.domain_escapes.push(i);
                    }
                    continue;
                }
            };
            let f_hat = jet.value / (tb * tb);
            let ratio = (f_hat + rho2) / (y2 + rho2);
            rep.c1 = rep.c1.min(ratio);
            rep.big_c1 = rep.big_c1.max(ratio);
            rep.max_grad = rep
                .max_grad
                .max((theta.transpose() * &jet.grad).norm() / tb);
            rep.max_hess = rep
                .max_hess
                .max((theta.transpose() * &jet.hess * theta).norm());
            rep.points_checked += 1;
        }
    }
    if rep.points_checked == 0 {
        rep.c1 = f64::NAN;
        rep.violations
            .push("no grid point inside the domain".into());
    }
    if rep.c1 < thresholds.c1_min {
        rep.violations
            .push(format!("c1 = {:.4} below {}", rep.c1, thresholds.c1_min));
    }
    if rep.big_c1 > thresholds.big_c1_max {
        rep.violations.push(format!(
            "C1 = {:.4} above {}",
            rep.big_c1, thresholds.big_c1_max
        ));
    }
    let dmax = rep.max_grad.max(rep.max_hess);
    if dmax > thresholds.derivative_max {
        rep.violations.push(format!(
            "derivative magnitude {dmax:.4} above {}",
            thresholds.derivative_max
        ));
    }
    Ok(rep)
}
