//! The quadratic lift that turns squared distance to an affine plane into an
//! inner product: `d(x, H)^2 = |x|^2 + sqrt(3(d+5)) Phi(H) . Psi(x)`.
//!
//! With `P` the orthogonal projector onto the plane's directions and `c` its point
//! nearest the origin (so `P c = 0`),
//! `d(x, H)^2 = |x|^2 - 2 c.x + |c|^2 - x^T P x`, which gives
//! `Phi(H) = (|c|^2, -P, -2c) / sqrt(d+5)` and `Psi(x) = (1, x x^T, x) / sqrt(3)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AffineSubspace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub psi_norm: f64,
    pub max_phi_norm: f64,
}

/// `Psi(x) = (1, vec(x x^T), x) / sqrt(3)`.
pub fn lift_psi(x: &DVector<f64>) -> DVector<f64> {
    let n = x.len();
    let mut out = DVector::zeros(1 + n * n + n);
    out[0] = 1.0;
    for i in 0..n {
        for j in 0..n {
            out[1 + i * n + j] = x[i] * x[j];
        }
    }
    for i in 0..n {
        out[1 + n * n + i] = x[i];
    }
    out / 3f64.sqrt()
}

/// `Phi(H) = (|c|^2, -vec(P), -2c) / sqrt(d+5)` for a plane of dimension at most `d`.
pub fn lift_phi(h: &AffineSubspace, d: usize) -> DVector<f64> {
    let n = h.ambient_dim();
    let c = h.nearest_to_origin();
    let p = h.projector();
    let mut out = DVector::zeros(1 + n * n + n);
    out[0] = c.norm_squared();
    for i in 0..n {
        for j in 0..n {
            out[1 + i * n + j] = -p[(i, j)];
        }
    }
    for i in 0..n {
        out[1 + n * n + i] = -2.0 * c[i];
    }
    out / ((d + 5) as f64).sqrt()
}

/// Evaluates both sides of the lifting identity for `x` against a family of planes.
pub fn lift_identity_check(x: &DVector<f64>, planes: &[AffineSubspace]) -> Result<LiftCheck> {
    if planes.is_empty() {
        return Err(Error::EmptyInput("plane family"));
    }
    if x.norm() > 1.0 + 1e-9 {
        return Err(Error::InvalidParameter(
            "x must lie in the unit ball".into(),
        ));
    }
    let mut d = 0;
    for h in planes {
        if h.ambient_dim() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: h.ambient_dim(),
            });
        }
        if h.nearest_to_origin().norm() > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(
                "plane does not meet the unit ball".into(),
            ));
        }
        d = d.max(h.dim());
    }
    let lhs = planes
        .iter()
        .map(|h| h.residual(x).norm_squared())
        .fold(f64::INFINITY, f64::min);
    let psi = lift_psi(x);
    let mut best = f64::INFINITY;
    let mut max_phi: f64 = 0.0;
    for h in planes {
        let phi = lift_phi(h, d);
        max_phi = max_phi.max(phi.norm());
        best = best.min(phi.dot(&psi));
    }
    let rhs = x.norm_squared() + (3.0 * (d + 5) as f64).sqrt() * best;
    let psi_norm = psi.norm();
    if psi_norm > 1.0 + 1e-9 || max_phi > 1.0 + 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "lift norms exceed one: psi {psi_norm}, phi {max_phi}"
        )));
    }
    Ok(LiftCheck {
        lhs,
        rhs,
        psi_norm,
        max_phi_norm: max_phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn plane_containing_x() {
        let x = DVector::from_row_slice(&[0.3, 0.4]);
        let h = AffineSubspace::new(
            DVector::zeros(2),
            DMatrix::from_column_slice(2, 1, &[0.6, 0.8]),
        )
        .unwrap();
        let r = lift_identity_check(&x, &[h]).unwrap();
        assert!(r.lhs.abs() < 1e-15 && r.rhs.abs() < 1e-12);
    }

    #[test]
    fn point_plane() {
        let x = DVector::from_row_slice(&[0.3, -0.1, 0.5]);
        let c = DVector::from_row_slice(&[-0.2, 0.4, 0.1]);
        let r = lift_identity_check(&x, &[AffineSubspace::point(c.clone())]).unwrap();
        assert!((r.lhs - (&x - &c).norm_squared()).abs() < 1e-15);
        assert!((r.lhs - r.rhs).abs() < 1e-9);
    }

    #[test]
    fn far_plane_rejected() {
        let x = DVector::zeros(2);
        let h = AffineSubspace::point(DVector::from_row_slice(&[2.0, 0.0]));
        assert!(lift_identity_check(&x, &[h]).is_err());
    }
}
