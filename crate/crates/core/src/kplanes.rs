//! k affine d-planes fitted by alternating minimization (k-means is d = 0), and a
//! harness measuring train/hold-out loss deviations.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineSubspace, PointCloud};
use crate::linalg::{self, Rng};

/// Union of affine planes; each plane has dimension at most `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct KPlanesModel {
    planes: Vec<AffineSubspace>,
    k: usize,
    d: usize,
}

impl KPlanesModel {
    pub fn new(planes: Vec<AffineSubspace>, k: usize, d: usize) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::EmptyInput("plane list"));
        }
        if planes.len() > k {
            return Err(Error::InvalidParameter(format!(
                "{} planes exceed k = {k}",
                planes.len()
            )));
        }
        let n = planes[0].ambient_dim();
        for h in &planes {
            if h.ambient_dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: h.ambient_dim(),
                });
            }
            if h.dim() > d {
                return Err(Error::InvalidParameter(format!(
                    "plane of dimension {} exceeds d = {d}",
                    h.dim()
                )));
            }
        }
        Ok(Self { planes, k, d })
    }

    pub fn planes(&self) -> &[AffineSubspace] {
        &self.planes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ambient_dim(&self) -> usize {
        self.planes[0].ambient_dim()
    }

    /// Every plane passes within `1 + 1e-9` of the origin.
    pub fn intersects_unit_ball(&self) -> bool {
        self.planes
            .iter()
            .all(|h| h.nearest_to_origin().norm() <= 1.0 + 1e-9)
    }

    /// `(min squared distance, nearest plane index)` with ties to the lowest index.
    pub fn nearest(&self, x: &DVector<f64>) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (j, h) in self.planes.iter().enumerate() {
            let d2 = h.residual(x).norm_squared();
            if d2 < best.0 {
                best = (d2, j);
            }
        }
        best
    }

    pub fn to_json(&self) -> serde_json::Value {
        let planes: Vec<PlaneJson> = self
            .planes
            .iter()
            .map(|h| PlaneJson {
                base: h.base().iter().copied().collect(),
                basis: (0..h.dim())
                    .map(|j| h.basis().column(j).iter().copied().collect())
                    .collect(),
            })
            .collect();
        serde_json::json!({ "k": self.k, "d": self.d, "planes": planes })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PlaneJson {
    base: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

/// Weighted mean of the min squared distance to the model.
pub fn kplanes_loss(cloud: &PointCloud, model: &KPlanesModel) -> Result<f64> {
    if cloud.dim() != model.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.ambient_dim(),
            got: cloud.dim(),
        });
    }
    Ok(cloud
        .points()
        .iter()
        .zip(cloud.weights())
        .map(|(p, w)| w * model.nearest(p).0)
        .sum())
}

#[derive(Debug, Clone)]
pub struct KPlanesFit {
    pub model: KPlanesModel,
    pub loss: f64,
    /// Loss after initialization, then after every iteration.
    pub loss_trace: Vec<f64>,
    pub restart: usize,
}

/// Weighted PCA plane: weighted mean plus top-`d` covariance eigenvectors.
fn pca_plane(points: &[&DVector<f64>], weights: &[f64], d: usize) -> AffineSubspace {
    let n = points[0].len();
    let mut total: f64 = weights.iter().sum();
    let uniform;
    let w: &[f64] = if total > 0.0 {
        weights
    } else {
        uniform = vec![1.0; points.len()];
        total = points.len() as f64;
        &uniform
    };
    let mut mean = DVector::zeros(n);
    for (p, wi) in points.iter().zip(w) {
        mean.axpy(wi / total, p, 1.0);
    }
    if d == 0 {
        return AffineSubspace::point(mean);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (p, wi) in points.iter().zip(w) {
        let c = *p - &mean;
        cov.ger(wi / total, &c, &c, 1.0);
    }
    let (_, vecs) = linalg::sym_eigen_ascending(&cov);
    let basis = DMatrix::from_fn(n, d, |i, j| vecs[(i, n - 1 - j)]);
    AffineSubspace::new(mean, basis).expect("eigenvectors are orthonormal")
}

/// Plane through `points[center]` with directions from PCA of its `m` nearest points.
fn local_plane(cloud: &PointCloud, center: usize, m: usize, d: usize) -> AffineSubspace {
    let c = cloud.point(center);
    let mut order: Vec<(f64, usize)> = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| ((p - c).norm_squared(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let near: Vec<&DVector<f64>> = order
        .iter()
        .take(m.max(1))
        .map(|&(_, i)| cloud.point(i))
        .collect();
    let w = vec![1.0; near.len()];
    let pca = pca_plane(&near, &w, d);
    AffineSubspace::new(c.clone(), pca.basis().clone()).expect("orthonormal basis")
}

/// k-means++ style seeding followed by local-PCA planes at the seeds.
pub fn initialize_kplanes(
    cloud: &PointCloud,
    k: usize,
    d: usize,
    seed: u64,
) -> Result<Vec<AffineSubspace>> {
    let n_pts = cloud.len();
    if k == 0 || k > n_pts {
        return Err(Error::Infeasible(format!("k = {k} with {n_pts} points")));
    }
    if d >= cloud.dim() {
        return Err(Error::InvalidParameter(format!(
            "d = {d} must be below n = {}",
            cloud.dim()
        )));
    }
    let mut rng = linalg::rng(seed);
    let mut centers = vec![rng.random_range(0..n_pts)];
    let mut d2: Vec<f64> = cloud
        .points()
        .iter()
        .map(|p| (p - cloud.point(centers[0])).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().zip(cloud.weights()).map(|(a, w)| a * w).sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, (a, w)) in d2.iter().zip(cloud.weights()).enumerate() {
                let m = a * w;
                if m > 0.0 {
                    pick = Some(i);
                    if u < m {
                        break;
                    }
                    u -= m;
                }
            }
            pick.expect("positive total mass")
        } else {
            (0..n_pts).find(|i| !centers.contains(i)).expect("k <= N")
        };
        centers.push(next);
        for (i, p) in cloud.points().iter().enumerate() {
            d2[i] = d2[i].min((p - cloud.point(next)).norm_squared());
        }
    }
    let m = n_pts.div_ceil(k);
    Ok(centers
        .iter()
        .map(|&c| local_plane(cloud, c, m, d))
        .collect())
}

fn assign(cloud: &PointCloud, planes: &[AffineSubspace]) -> (Vec<usize>, Vec<f64>, f64) {
    let model = KPlanesModel {
        planes: planes.to_vec(),
        k: planes.len(),
        d: 0,
    };
    let mut labels = Vec::with_capacity(cloud.len());
    let mut dists = Vec::with_capacity(cloud.len());
    let mut loss = 0.0;
    for (p, w) in cloud.points().iter().zip(cloud.weights()) {
        let (d2, j) = model.nearest(p);
        labels.push(j);
        dists.push(d2);
        loss += w * d2;
    }
    (labels, dists, loss)
}

fn fit_once(
    cloud: &PointCloud,
    k: usize,
    d: usize,
    max_iters: usize,
    seed: u64,
) -> Result<(Vec<AffineSubspace>, Vec<f64>)> {
    let mut planes = initialize_kplanes(cloud, k, d, seed)?;
    let (mut labels, mut dists, mut loss) = assign(cloud, &planes);
    let mut trace = vec![loss];
    let m = cloud.len().div_ceil(k);
    for _ in 0..max_iters {
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let members: Vec<usize> = (0..cloud.len()).filter(|&i| labels[i] == j).collect();
            if members.is_empty() {
                // Re-seed at the point currently worst served.
                let far = (0..cloud.len()).fold(0, |b, i| if dists[i] > dists[b] { i } else { b });
                next.push(local_plane(cloud, far, m, d));
            } else {
                let pts: Vec<&DVector<f64>> = members.iter().map(|&i| cloud.point(i)).collect();
                let w: Vec<f64> = members.iter().map(|&i| cloud.weights()[i]).collect();
                next.push(pca_plane(&pts, &w, d));
            }
        }
        let (l2, d2, new_loss) = assign(cloud, &next);
        if new_loss > loss {
            break;
        }
        let improvement = loss - new_loss;
        planes = next;
        labels = l2;
        dists = d2;
        loss = new_loss;
        trace.push(loss);
        if improvement < 1e-10 {
            break;
        }
    }
    Ok((planes, trace))
}

/// Best of `restarts` alternating-minimization runs; restart `i` uses seed `seed + i`.
pub fn fit_kplanes(
    cloud: &PointCloud,
    k: usize,
    d: usize,
    restarts: usize,
    max_iters: usize,
    seed: u64,
) -> Result<KPlanesFit> {
    if k == 0 || k > cloud.len() {
        return Err(Error::Infeasible(format!(
            "k = {k} with {} points",
            cloud.len()
        )));
    }
    let runs: Vec<Result<(Vec<AffineSubspace>, Vec<f64>)>> = (0..restarts.max(1))
        .into_par_iter()
        .map(|i| fit_once(cloud, k, d, max_iters, seed.wrapping_add(i as u64)))
        .collect();
    let mut best: Option<(usize, Vec<AffineSubspace>, Vec<f64>)> = None;
    for (i, run) in runs.into_iter().enumerate() {
        let (planes, trace) = run?;
        let loss = *trace.last().expect("trace nonempty");
        if best.as_ref().map_or(true, |b| loss < *b.2.last().unwrap()) {
            best = Some((i, planes, trace));
        }
    }
    let (restart, planes, loss_trace) = best.expect("at least one restart");
    let planes = planes.iter().map(AffineSubspace::reanchored).collect();
    let model = KPlanesModel::new(planes, k, d)?;
    Ok(KPlanesFit {
        loss: *loss_trace.last().unwrap(),
        model,
        loss_trace,
        restart,
    })
}

/// Source of unit-ball samples for [`deviation_experiment`].
pub trait Sampler: Sync {
    fn sample(&self, count: usize, rng: &mut Rng) -> Vec<DVector<f64>>;
}

/// Always returns the same point.
pub struct PointMass(pub DVector<f64>);

impl Sampler for PointMass {
    fn sample(&self, count: usize, _rng: &mut Rng) -> Vec<DVector<f64>> {
        vec![self.0.clone(); count]
    }
}

/// Uniform on the unit circle in the first two coordinates of R^n.
pub struct UniformCircle {
    pub n: usize,
}

impl Sampler for UniformCircle {
    fn sample(&self, count: usize, rng: &mut Rng) -> Vec<DVector<f64>> {
        (0..count)
            .map(|_| {
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                let mut v = DVector::zeros(self.n.max(2));
                v[0] = t.cos();
                v[1] = t.sin();
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviationStats {
    pub deviations: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

/// Fits on `s` samples and compares against a `10 s` hold-out, `trials` times.
/// When `s < k` the fit uses `s` planes.
pub fn deviation_experiment(
    sampler: &dyn Sampler,
    k: usize,
    d: usize,
    s: usize,
    trials: usize,
    seed: u64,
) -> Result<DeviationStats> {
    if s == 0 || trials == 0 || k == 0 {
        return Err(Error::InvalidParameter(
            "k, s and trials must be positive".into(),
        ));
    }
    let deviations: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = linalg::rng(linalg::split_seed(seed, t as u64));
            let train = PointCloud::new(sampler.sample(s, &mut rng))?;
            let hold = PointCloud::new(sampler.sample(10 * s, &mut rng))?;
            let fit = fit_kplanes(&train, k.min(s), d, 3, 100, rng.random())?;
            Ok((fit.loss - kplanes_loss(&hold, &fit.model)?).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = deviations.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let max = *sorted.last().unwrap();
    Ok(DeviationStats {
        deviations,
        median,
        mean,
        max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn single_mean() {
        let c = PointCloud::with_weights(
            vec![v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 0.6])],
            vec![1.0, 2.0, 1.0],
        )
        .unwrap();
        let fit = fit_kplanes(&c, 1, 0, 2, 10, 0).unwrap();
        let mean = c.mean();
        assert!((fit.model.planes()[0].base() - &mean).norm() < 1e-12);
        let var: f64 = c
            .points()
            .iter()
            .zip(c.weights())
            .map(|(p, w)| w * (p - &mean).norm_squared())
            .sum();
        assert!((fit.loss - var).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_keep_initialization() {
        let c = PointCloud::from_rows(&[
            vec![0.0, 0.1],
            vec![0.2, 0.3],
            vec![-0.5, 0.4],
            vec![0.6, -0.2],
        ])
        .unwrap();
        let init = initialize_kplanes(&c, 2, 1, 5).unwrap();
        let fit = fit_kplanes(&c, 2, 1, 1, 0, 5).unwrap();
        assert_eq!(fit.loss_trace.len(), 1);
        for (a, b) in init.iter().zip(fit.model.planes()) {
            assert_eq!(a.reanchored(), *b);
        }
    }

    #[test]
    fn k_greater_than_n_fails() {
        let c = PointCloud::from_rows(&[vec![0.0, 0.1]]).unwrap();
        assert!(matches!(
            fit_kplanes(&c, 2, 0, 1, 5, 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn k_equals_n_reaches_zero() {
        let c = PointCloud::from_rows(&[
            vec![0.0, 0.1],
            vec![0.2, 0.3],
            vec![-0.5, 0.4],
            vec![0.6, -0.2],
        ])
        .unwrap();
        let fit = fit_kplanes(&c, 4, 0, 3, 50, 1).unwrap();
        assert!(fit.loss < 1e-20);
    }

    #[test]
    fn point_mass_has_no_deviation() {
        let st = deviation_experiment(&PointMass(v(&[0.3, 0.1])), 2, 0, 5, 4, 9).unwrap();
        assert!(st.deviations.iter().all(|x| *x == 0.0));
        let st = deviation_experiment(&UniformCircle { n: 2 }, 8, 0, 1, 4, 9).unwrap();
        assert!(st.deviations.iter().all(|x| x.is_finite()));
    }
}
