//! Point-cloud primitives: weighted clouds, affine subspaces, greedy nets,
//! local tangent estimation, Federer reach and Hausdorff distance.

pub mod io;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Pairs whose normal deviation falls below this are skipped by [`federer_reach`].
pub const REACH_ZERO_DIST: f64 = 1e-14;

/// Weighted finite point set in R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
    dim: usize,
    unit_ball: bool,
}

impl PointCloud {
    /// Uniformly weighted cloud. Fails on empty input or ragged dimensions.
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyInput("point cloud"));
        }
        Self::with_weights(points, vec![1.0 / n as f64; n])
    }

    /// Cloud with explicit weights, normalized to sum to one.
    pub fn with_weights(points: Vec<DVector<f64>>, weights: Vec<f64>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyInput("point cloud"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "ambient dimension must be at least 1".into(),
            ));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            points,
            weights,
            dim,
            unit_ball: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_row_slice(r)).collect())
    }

    /// Sets the unit-ball flag after checking `|x| <= 1 + 1e-9` for every point.
    pub fn into_unit_ball(mut self) -> Result<Self> {
        if let Some((i, p)) = self
            .points
            .iter()
            .enumerate()
            .find(|(_, p)| p.norm() > 1.0 + 1e-9)
        {
            return Err(Error::InvalidParameter(format!(
                "point {i} has norm {} outside the unit ball",
                p.norm()
            )));
        }
        self.unit_ball = true;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_unit_ball(&self) -> bool {
        self.unit_ball
    }

    pub fn point(&self, i: usize) -> &DVector<f64> {
        &self.points[i]
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sub-cloud on the given indices, weights renormalized.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let pts = idx.iter().map(|&i| self.points[i].clone()).collect();
        let w = idx.iter().map(|&i| self.weights[i]).collect();
        let mut out = Self::with_weights(pts, w)?;
        out.unit_ball = self.unit_ball;
        Ok(out)
    }

    /// Applies `f` to every point, keeping weights.
    pub fn map_points(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Result<Self> {
        let pts = self.points.iter().map(f).collect();
        Self::with_weights(pts, self.weights.clone())
    }

    /// Weighted mean of the points.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for (p, w) in self.points.iter().zip(&self.weights) {
            m.axpy(*w, p, 1.0);
        }
        m
    }
}

/// Affine subspace `base + span(basis)` with an orthonormal basis (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSubspace {
    base: DVector<f64>,
    basis: DMatrix<f64>,
}

impl AffineSubspace {
    pub fn new(base: DVector<f64>, basis: DMatrix<f64>) -> Result<Self> {
        if basis.nrows() != base.len() {
            return Err(Error::DimensionMismatch {
                expected: base.len(),
                got: basis.nrows(),
            });
        }
        if basis.ncols() > basis.nrows() {
            return Err(Error::InvalidParameter(
                "more basis vectors than ambient dimensions".into(),
            ));
        }
        if basis.ncols() > 0 && linalg::orthogonality_defect(&basis) > 1e-10 {
            return Err(Error::InvalidParameter("basis is not orthonormal".into()));
        }
        Ok(Self { base, basis })
    }

    /// Orthonormalizes the spanning vectors (columns) first; dependent ones are dropped.
    pub fn from_spanning(base: DVector<f64>, span: &DMatrix<f64>) -> Result<Self> {
        let basis = linalg::gram_schmidt(span, 1e-12);
        Self::new(base, basis)
    }

    /// The single point `{c}`.
    pub fn point(c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            base: c,
            basis: DMatrix::zeros(n, 0),
        }
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.base.len()
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let w = x - &self.base;
        &self.base + &self.basis * (self.basis.transpose() * w)
    }

    /// `x` minus its projection, computed without cancellation.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let w = x - &self.base;
        let c = self.basis.transpose() * &w;
        w - &self.basis * c
    }

    /// Orthogonal projector onto the direction space.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Point of the subspace nearest the origin.
    pub fn nearest_to_origin(&self) -> DVector<f64> {
        self.project(&DVector::zeros(self.ambient_dim()))
    }

    /// Same subspace with `base` moved to the point nearest the origin.
    pub fn reanchored(&self) -> Self {
        Self {
            base: self.nearest_to_origin(),
            basis: self.basis.clone(),
        }
    }

    /// Applies the rigid motion `x -> r x + t`.
    pub fn transformed(&self, r: &DMatrix<f64>, t: &DVector<f64>) -> Self {
        Self {
            base: r * &self.base + t,
            basis: r * &self.basis,
        }
    }
}

/// Federer reach estimate; `Unbounded` is the +infinity sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ReachEstimate {
    Finite { value: f64, pair: (usize, usize) },
    Unbounded,
}

impl ReachEstimate {
    pub fn value(&self) -> f64 {
        match self {
            ReachEstimate::Finite { value, .. } => *value,
            ReachEstimate::Unbounded => f64::INFINITY,
        }
    }

    pub fn pair(&self) -> Option<(usize, usize)> {
        match self {
            ReachEstimate::Finite { pair, .. } => Some(*pair),
            ReachEstimate::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, ReachEstimate::Unbounded)
    }
}

/// Greedy r-net: scan in input order, keep every point not within `< r` of an
/// already selected one.
pub fn greedy_net(cloud: &PointCloud, r: f64) -> Result<Vec<usize>> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "net radius must be positive, got {r}"
        )));
    }
    greedy_net_points(cloud.points(), r)
}

/// [`greedy_net`] over a bare point slice.
pub fn greedy_net_points(points: &[DVector<f64>], r: f64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let r2 = r * r;
    let mut net: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let covered = net.iter().any(|&j| (p - &points[j]).norm_squared() < r2);
        if !covered {
            net.push(i);
        }
    }
    Ok(net)
}

/// Indices of points within `radius` (inclusive) of `center`.
pub fn neighbors_within(points: &[DVector<f64>], center: &DVector<f64>, radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (*p - center).norm_squared() <= r2)
        .map(|(i, _)| i)
        .collect()
}

/// Local PCA tangent at `center_index`: top-`d` principal directions of the
/// centered neighborhood covariance, anchored at the center point.
pub fn estimate_tangent(
    cloud: &PointCloud,
    center_index: usize,
    radius: f64,
    d: usize,
) -> Result<AffineSubspace> {
    if center_index >= cloud.len() {
        return Err(Error::InvalidParameter(format!(
            "center index {center_index} out of range"
        )));
    }
    tangent_at(cloud.points(), cloud.point(center_index), radius, d)
}

/// [`estimate_tangent`] for an arbitrary center and point slice.
pub fn tangent_at(
    points: &[DVector<f64>],
    center: &DVector<f64>,
    radius: f64,
    d: usize,
) -> Result<AffineSubspace> {
    let n = center.len();
    if d > n {
        return Err(Error::InvalidParameter(format!(
            "tangent dimension {d} exceeds ambient {n}"
        )));
    }
    let idx = neighbors_within(points, center, radius);
    if idx.len() < d + 1 {
        return Err(Error::UnderdeterminedTangent {
            found: idx.len(),
            needed: d + 1,
        });
    }
    let k = idx.len() as f64;
    let mut mean = DVector::zeros(n);
    for &i in &idx {
        mean += &points[i];
    }
    mean /= k;
    let mut cov = DMatrix::zeros(n, n);
    for &i in &idx {
        let c = &points[i] - &mean;
        cov.ger(1.0 / k, &c, &c, 1.0);
    }
    let (vals, vecs) = linalg::sym_eigen_ascending(&cov);
    let top = vals[n - 1];
    if top <= 0.0 || top.abs() < 1e-300 {
        return Err(Error::DegenerateTangent);
    }
    if d > 0 && vals[n - d] <= 1e-14 * top {
        return Err(Error::DegenerateTangent);
    }
    let mut basis = DMatrix::zeros(n, d);
    for j in 0..d {
        basis.set_column(j, &vecs.column(n - 1 - j));
    }
    AffineSubspace::new(center.clone(), basis)
}

/// Euclidean distance from `x` to `h`.
pub fn dist_to_affine(x: &DVector<f64>, h: &AffineSubspace) -> Result<f64> {
    if x.len() != h.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: h.ambient_dim(),
            got: x.len(),
        });
    }
    Ok(h.residual(x).norm())
}

/// Federer reach: infimum over ordered pairs `a != b` of
/// `|a - b|^2 / (2 dist(b, Tan(a)))`.
pub fn federer_reach(cloud: &PointCloud, tangents: &[AffineSubspace]) -> Result<ReachEstimate> {
    reach_of_points(cloud.points(), tangents)
}

/// [`federer_reach`] over a bare point slice.
pub fn reach_of_points(
    points: &[DVector<f64>],
    tangents: &[AffineSubspace],
) -> Result<ReachEstimate> {
    if points.len() < 2 {
        return Err(Error::InsufficientData(
            "reach needs at least two points".into(),
        ));
    }
    if tangents.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: tangents.len(),
        });
    }
    let best = (0..points.len())
        .into_par_iter()
        .map(|a| {
            let tan = &tangents[a];
            let mut best: Option<(f64, usize)> = None;
            for (b, pb) in points.iter().enumerate() {
                if b == a {
                    continue;
                }
                let dist = tan.residual(pb).norm();
                if dist < REACH_ZERO_DIST {
                    continue;
                }
                let ratio = (pb - &points[a]).norm_squared() / (2.0 * dist);
                if best.map_or(true, |(v, _)| ratio < v) {
                    best = Some((ratio, b));
                }
            }
            best.map(|(v, b)| (v, a, b))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .fold(None::<(f64, usize, usize)>, |acc, cur| match acc {
            Some(a) if a.0 <= cur.0 => Some(a),
            _ => Some(cur),
        });
    Ok(match best {
        Some((value, a, b)) => ReachEstimate::Finite {
            value,
            pair: (a, b),
        },
        None => ReachEstimate::Unbounded,
    })
}

/// Symmetric Hausdorff distance between two finite sets.
pub fn hausdorff_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    hausdorff_points(a.points(), b.points())
}

/// [`hausdorff_distance`] over bare point slices.
pub fn hausdorff_points(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("hausdorff operand"));
    }
    if a[0].len() != b[0].len() {
        return Err(Error::DimensionMismatch {
            expected: a[0].len(),
            got: b[0].len(),
        });
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

fn directed_hausdorff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.par_iter()
        .map(|p| {
            b.iter()
                .map(|q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn net_small_cases() {
        let c = PointCloud::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(greedy_net(&c, 0.1).unwrap(), vec![0]);
        let c = PointCloud::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(greedy_net(&c, 0.5).unwrap(), vec![0, 1]);
    }

    #[test]
    fn circle_net_size() {
        let mut r = linalg::rng(1);
        use rand::Rng;
        let pts: Vec<_> = (0..1000)
            .map(|_| {
                let t: f64 = r.random_range(0.0..2.0 * PI);
                v(&[t.cos(), t.sin()])
            })
            .collect();
        let c = PointCloud::new(pts).unwrap();
        let net = greedy_net(&c, 0.3).unwrap();
        assert!((14..=42).contains(&net.len()), "{}", net.len());
        assert_eq!(net[0], 0);
    }

    #[test]
    fn dist_to_axis() {
        let h = AffineSubspace::new(
            v(&[0.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(dist_to_affine(&v(&[3.0, 4.0]), &h).unwrap(), 4.0);
        assert_eq!(dist_to_affine(&v(&[3.0, 0.0]), &h).unwrap(), 0.0);
        assert!(dist_to_affine(&v(&[3.0]), &h).is_err());
    }

    #[test]
    fn reanchor_is_nearest_to_origin() {
        let h = AffineSubspace::new(
            v(&[5.0, 1.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(h.reanchored().base(), &v(&[0.0, 1.0]));
        assert_eq!(h.nearest_to_origin(), v(&[0.0, 1.0]));
    }

    #[test]
    fn tangent_errors() {
        let c = PointCloud::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![0.01, 0.0, 0.0],
            vec![5.0, 5.0, 5.0],
        ])
        .unwrap();
        assert!(matches!(
            estimate_tangent(&c, 0, 0.1, 2),
            Err(Error::UnderdeterminedTangent {
                found: 2,
                needed: 3
            })
        ));
        let c = PointCloud::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            estimate_tangent(&c, 0, 0.1, 1),
            Err(Error::DegenerateTangent)
        ));
    }

    #[test]
    fn line_reach_is_unbounded() {
        let pts: Vec<_> = (0..20).map(|i| v(&[0.1 * i as f64, 0.0])).collect();
        let tans: Vec<_> = pts
            .iter()
            .map(|p| {
                AffineSubspace::new(p.clone(), DMatrix::from_column_slice(2, 1, &[1.0, 0.0]))
                    .unwrap()
            })
            .collect();
        let c = PointCloud::new(pts).unwrap();
        assert!(federer_reach(&c, &tans).unwrap().is_unbounded());
    }

    #[test]
    fn hausdorff_small() {
        let a = PointCloud::from_rows(&[vec![0.0]]).unwrap();
        let b = PointCloud::from_rows(&[vec![3.0]]).unwrap();
        assert_eq!(hausdorff_distance(&a, &b).unwrap(), 3.0);
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn weights_normalized() {
        let c = PointCloud::with_weights(vec![v(&[0.0]), v(&[1.0])], vec![1.0, 3.0]).unwrap();
        assert_eq!(c.weights(), &[0.25, 0.75]);
        assert!(PointCloud::with_weights(vec![v(&[0.0])], vec![-1.0]).is_err());
        assert!(PointCloud::from_rows(&[vec![2.0]])
            .unwrap()
            .into_unit_ball()
            .is_err());
    }
}
