use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::linalg::{self, Rng};

/// Ground-truth manifold families for synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// `d`-sphere of the given radius, centered at the origin in the first `d + 1` coordinates.
    Sphere { d: usize, radius: f64 },
    /// Torus of revolution in the first three coordinates, area-uniform.
    Torus { big_r: f64, small_r: f64 },
    /// Union of `k` random affine `d`-planes, uniform on each plane within the ball.
    Kplanes { k: usize, d: usize },
    /// Uniform in the unit ball.
    UniformBall,
}

impl SyntheticKind {
    /// Defaults per kind name: sphere (circle of radius 0.8), torus (0.6, 0.25),
    /// kplanes (3 lines), uniform_ball.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sphere" => Ok(Self::Sphere { d: 1, radius: 0.8 }),
            "torus" => Ok(Self::Torus {
                big_r: 0.6,
                small_r: 0.25,
            }),
            "kplanes" => Ok(Self::Kplanes { k: 3, d: 1 }),
            "uniform_ball" | "uniform-ball" => Ok(Self::UniformBall),
            _ => Err(Error::InvalidParameter(format!(
                "unknown synthetic kind '{name}'"
            ))),
        }
    }

    /// Intrinsic dimension, `n` for the ball.
    pub fn intrinsic_dim(&self, n: usize) -> usize {
        match self {
            Self::Sphere { d, .. } | Self::Kplanes { d, .. } => *d,
            Self::Torus { .. } => 2,
            Self::UniformBall => n,
        }
    }
}

/// Generated cloud plus the parameters of the manifold it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub cloud: PointCloud,
    pub metadata: serde_json::Value,
}

fn uniform_in_ball(n: usize, rng: &mut Rng) -> DVector<f64> {
    let v = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(rng));
    let r = rng.random::<f64>().powf(1.0 / n as f64);
    v.normalize() * r
}

/// Deterministic sample of `count` points in `R^n`, isotropic Gaussian noise of
/// standard deviation `noise`, every point clipped radially to the unit ball.
pub fn generate_synthetic(
    kind: &SyntheticKind,
    n: usize,
    noise: f64,
    count: usize,
    seed: u64,
) -> Result<SyntheticData> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be positive".into()));
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidParameter("noise must be nonnegative".into()));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let mut rng = linalg::rng(seed);
    let mut meta = serde_json::to_value(kind)?;
    let mut pts: Vec<DVector<f64>> = Vec::with_capacity(count);
    match kind {
        SyntheticKind::Sphere { d, radius } => {
            if d + 1 > n || !(*radius > 0.0 && *radius <= 1.0) {
                return Err(Error::InvalidParameter(
                    "sphere needs d + 1 <= n and radius in (0, 1]".into(),
                ));
            }
            for _ in 0..count {
                let u = DVector::<f64>::from_fn(d + 1, |_, _| StandardNormal.sample(&mut rng))
                    .normalize()
                    * *radius;
                let mut p = DVector::zeros(n);
                p.rows_mut(0, d + 1).copy_from(&u);
                pts.push(p);
            }
        }
        SyntheticKind::Torus { big_r, small_r } => {
            if n < 3 || !(*small_r > 0.0 && *small_r < *big_r && big_r + small_r <= 1.0) {
                return Err(Error::InvalidParameter(
                    "torus needs n >= 3 and 0 < r < R with R + r <= 1".into(),
                ));
            }
            while pts.len() < count {
                let u = rng.random_range(0.0..2.0 * PI);
                let v = rng.random_range(0.0..2.0 * PI);
                // Area element is proportional to R + r cos v.
                if rng.random::<f64>() * (big_r + small_r) > big_r + small_r * v.cos() {
                    continue;
                }
                let mut p = DVector::zeros(n);
                p[0] = (big_r + small_r * v.cos()) * u.cos();
                p[1] = (big_r + small_r * v.cos()) * u.sin();
                p[2] = small_r * v.sin();
                pts.push(p);
            }
        }
        SyntheticKind::Kplanes { k, d } => {
            if *k == 0 || *d == 0 || *d > n {
                return Err(Error::InvalidParameter(
                    "kplanes needs k >= 1 and 1 <= d <= n".into(),
                ));
            }
            let planes: Vec<_> = (0..*k)
                .map(|_| {
                    (
                        uniform_in_ball(n, &mut rng) * 0.5,
                        linalg::random_frame(n, *d, &mut rng),
                    )
                })
                .collect();
            while pts.len() < count {
                let (base, frame) = &planes[rng.random_range(0..*k)];
                let c = DVector::from_fn(*d, |_, _| rng.random_range(-1.0..1.0));
                let p = base + frame * c;
                if p.norm() <= 1.0 {
                    pts.push(p);
                }
            }
            meta["planes"] = serde_json::json!(planes
                .iter()
                .map(|(b, f)| serde_json::json!({
                    "base": b.iter().copied().collect::<Vec<_>>(),
                    "basis": (0..*d).map(|j| f.column(j).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>(),
                }))
                .collect::<Vec<_>>());
        }
        SyntheticKind::UniformBall => {
            for _ in 0..count {
                pts.push(uniform_in_ball(n, &mut rng));
            }
        }
    }
    if noise > 0.0 {
        let dist = Normal::new(0.0, noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for p in &mut pts {
            for x in p.iter_mut() {
                *x += dist.sample(&mut rng);
            }
        }
    }
    for p in &mut pts {
        let r = p.norm();
        if r > 1.0 {
            *p /= r;
        }
    }
    meta["n"] = serde_json::json!(n);
    meta["noise"] = serde_json::json!(noise);
    meta["count"] = serde_json::json!(count);
    meta["seed"] = serde_json::json!(seed);
    let cloud = PointCloud::new(pts)?.into_unit_ball()?;
    Ok(SyntheticData {
        cloud,
        metadata: meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_radius_exact() {
        let s = generate_synthetic(&SyntheticKind::Sphere { d: 2, radius: 0.8 }, 3, 0.0, 100, 1)
            .unwrap();
        assert!(s
            .cloud
            .points()
            .iter()
            .all(|p| (p.norm() - 0.8).abs() < 1e-12));
        assert_eq!(s.metadata["radius"], 0.8);
    }

    #[test]
    fn ball_second_moment() {
        let s = generate_synthetic(&SyntheticKind::UniformBall, 3, 0.0, 1000, 2).unwrap();
        let m: f64 = s
            .cloud
            .points()
            .iter()
            .map(|p| p.norm_squared())
            .sum::<f64>()
            / 1000.0;
        assert!((m / 0.6 - 1.0).abs() < 0.05, "{m}");
    }

    #[test]
    fn deterministic_and_clipped() {
        let k = SyntheticKind::Torus {
            big_r: 0.6,
            small_r: 0.25,
        };
        let a = generate_synthetic(&k, 4, 0.05, 300, 7).unwrap();
        let b = generate_synthetic(&k, 4, 0.05, 300, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.cloud.points().iter().all(|p| p.norm() <= 1.0));
        assert!(generate_synthetic(&k, 2, 0.0, 10, 1).is_err());
    }
}
