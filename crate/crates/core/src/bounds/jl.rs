use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::linalg;

/// Random orthogonal projection onto a g-dimensional subspace of R^n.
#[derive(Debug, Clone)]
pub struct JlProjection {
    /// Projected points, expressed in ambient R^n coordinates.
    pub cloud: PointCloud,
    /// The `n/g` factor that makes scaled squared norms unbiased.
    pub scale: f64,
    /// Orthonormal `n x g` frame of the subspace.
    pub frame: DMatrix<f64>,
}

impl JlProjection {
    /// Coordinates of `x` in the subspace frame.
    pub fn coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        self.frame.transpose() * x
    }

    /// Orthogonal projection of `x`, in ambient coordinates.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.frame * (self.frame.transpose() * x)
    }

    /// `(n/g) <Px, Py>`.
    pub fn scaled_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.scale * self.coordinates(x).dot(&self.coordinates(y))
    }
}

/// Projects `cloud` onto a uniformly random g-subspace built by orthonormalizing an
/// i.i.d. standard-normal frame. `g = n` yields the identity frame.
pub fn jl_project(cloud: &PointCloud, g: usize, seed: u64) -> Result<JlProjection> {
    let n = cloud.dim();
    if g == 0 || g > n {
        return Err(Error::InvalidParameter(format!(
            "projection dimension {g} must lie in 1..={n}"
        )));
    }
    let frame = if g == n {
        DMatrix::identity(n, n)
    } else {
        linalg::random_frame(n, g, &mut linalg::rng(seed))
    };
    let proj = &frame * frame.transpose();
    let projected = cloud.map_points(|p| &proj * p)?;
    Ok(JlProjection {
        cloud: projected,
        scale: n as f64 / g as f64,
        frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_dimension_is_identity() {
        let c = PointCloud::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 0.4]]).unwrap();
        let p = jl_project(&c, 3, 9).unwrap();
        assert_eq!(p.scale, 1.0);
        assert_eq!(p.cloud.points(), c.points());
        assert!(jl_project(&c, 4, 9).is_err());
    }

    #[test]
    fn vector_in_subspace_is_fixed() {
        let c = PointCloud::from_rows(&[vec![0.0; 6]]).unwrap();
        let p = jl_project(&c, 2, 4).unwrap();
        let x = p.frame.column(0) * 0.3 - p.frame.column(1) * 0.2;
        assert!((p.project(&x) - &x).norm() < 1e-14);
    }
}
