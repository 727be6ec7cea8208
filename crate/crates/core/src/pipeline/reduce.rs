use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Projection of a cloud onto a data-spanned subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// Coordinates `B^T x` of every point.
    pub cloud: PointCloud,
    /// `n x k`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub report: ReductionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    pub ambient_dim: usize,
    pub requested_dim: usize,
    pub reduced_dim: usize,
    /// Basis vectors contributed by net points.
    pub from_net: usize,
    /// Requested dimension not reached because the data span is smaller.
    pub rank_deficient: bool,
    pub identity: bool,
}

impl Reduction {
    /// Embeds reduced coordinates back into the ambient space.
    pub fn lift(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.basis * y
    }
}

const RANK_TOL: f64 = 1e-10;

/// Pivoted Gram-Schmidt: repeatedly appends the candidate with the largest residual.
fn extend_basis(
    cols: &mut Vec<DVector<f64>>,
    candidates: &[&DVector<f64>],
    target: usize,
    scale: f64,
) -> usize {
    let mut resid: Vec<DVector<f64>> = candidates
        .iter()
        .map(|c| {
            let mut r = (*c).clone();
            for b in cols.iter() {
                r -= b * b.dot(&r);
            }
            r
        })
        .collect();
    let mut added = 0;
    while cols.len() < target {
        let Some((k, norm)) = resid
            .iter()
            .map(|r| r.norm())
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        if norm <= RANK_TOL * scale {
            break;
        }
        let mut q = &resid[k] / norm;
        // Second pass for numerical orthogonality.
        for b in cols.iter() {
            q -= b * b.dot(&q);
        }
        let q = q.normalize();
        for r in resid.iter_mut() {
            *r -= &q * q.dot(r);
        }
        cols.push(q);
        added += 1;
    }
    added
}

/// Projects onto the span of the net points, extended by the `extra_dim` directions
/// of largest residual among the remaining points. Target dimension is
/// `min(n, |net| + extra_dim)`; when that equals `n` the basis is the identity.
pub fn reduce_dimension(
    cloud: &PointCloud,
    net_indices: &[usize],
    extra_dim: usize,
) -> Result<Reduction> {
    let target = (net_indices.len() + extra_dim).min(cloud.dim());
    reduce_dimension_to(cloud, net_indices, target)
}

/// [`reduce_dimension`] with an explicit target dimension. Net points enter the
/// basis first, largest residual first; the basis shrinks when the data span is
/// smaller than `target`.
pub fn reduce_dimension_to(
    cloud: &PointCloud,
    net_indices: &[usize],
    target: usize,
) -> Result<Reduction> {
    let n = cloud.dim();
    if target == 0 || target > n {
        return Err(Error::InvalidParameter(format!(
            "target dimension {target} must lie in [1, {n}]"
        )));
    }
    if let Some(&i) = net_indices.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::InvalidParameter(format!(
            "net index {i} out of range"
        )));
    }
    if target == n {
        return Ok(Reduction {
            cloud: cloud.clone(),
            basis: DMatrix::identity(n, n),
            report: ReductionReport {
                ambient_dim: n,
                requested_dim: target,
                reduced_dim: n,
                from_net: 0,
                rank_deficient: false,
                identity: true,
            },
        });
    }
    let scale = cloud
        .points()
        .iter()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut cols = Vec::with_capacity(target);
    let net: Vec<&DVector<f64>> = net_indices.iter().map(|&i| cloud.point(i)).collect();
    let from_net = extend_basis(&mut cols, &net, target, scale);
    let rest: Vec<&DVector<f64>> = cloud.points().iter().collect();
    extend_basis(&mut cols, &rest, target, scale);
    if cols.is_empty() {
        return Err(Error::InsufficientData(
            "every point is at the origin".into(),
        ));
    }
    let basis = DMatrix::from_columns(&cols);
    let reduced = PointCloud::with_weights(
        cloud.points().iter().map(|p| basis.tr_mul(p)).collect(),
        cloud.weights().to_vec(),
    )?;
    let reduced = if cloud.is_unit_ball() {
        reduced.into_unit_ball()?
    } else {
        reduced
    };
    Ok(Reduction {
        cloud: reduced,
        report: ReductionReport {
            ambient_dim: n,
            requested_dim: target,
            reduced_dim: cols.len(),
            from_net,
            rank_deficient: cols.len() < target,
            identity: false,
        },
        basis,
    })
}
