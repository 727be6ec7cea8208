//! Radial bump: `theta(x) = 1` for `|x| <= 1/4`, `0` for `|x| >= 1`, with a
//! C-infinity monotone transition built from `g(u) = exp(-1/u)`:
//! `h(s) = g(1-s) / (g(1-s) + g(s))`, `s = (|x| - 1/4) / (3/4)`.
//! Every derivative of `h` vanishes at both ends of the ramp.

use nalgebra::{DMatrix, DVector};

/// Value, gradient and Hessian of the bump at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpValue {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

const INNER: f64 = 0.25;
const WIDTH: f64 = 0.75;

fn g3(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let g = (-1.0 / u).exp();
    let u2 = u * u;
    (g, g / u2, g * (1.0 / (u2 * u2) - 2.0 / (u2 * u)))
}

/// Ramp `h(s)` and its first two derivatives in `s`.
pub fn ramp(s: f64) -> (f64, f64, f64) {
    if s <= 0.0 {
        return (1.0, 0.0, 0.0);
    }
    if s >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let (ga, ga1, ga2) = g3(1.0 - s);
    let (b, b1, b2) = g3(s);
    let (a, a1, a2) = (ga, -ga1, ga2);
    let sum = a + b;
    let num = a1 * b - a * b1;
    let num1 = a2 * b - a * b2;
    let h = a / sum;
    let h1 = num / (sum * sum);
    let h2 = num1 / (sum * sum) - 2.0 * num * (a1 + b1) / (sum * sum * sum);
    (h, h1, h2)
}

/// Radial profile `p(t)` and its derivatives in `t = |x|`.
pub fn profile(t: f64) -> (f64, f64, f64) {
    let (h, h1, h2) = ramp((t - INNER) / WIDTH);
    (h, h1 / WIDTH, h2 / (WIDTH * WIDTH))
}

/// Bump value only.
pub fn bump_value(x: &DVector<f64>) -> f64 {
    profile(x.norm()).0
}

/// Bump value with gradient and Hessian.
pub fn bump_theta(x: &DVector<f64>) -> BumpValue {
    let d = x.len();
    let t = x.norm();
    if t <= INNER || t >= 1.0 {
        let value = if t <= INNER { 1.0 } else { 0.0 };
        return BumpValue {
            value,
            grad: DVector::zeros(d),
            hess: DMatrix::zeros(d, d),
        };
    }
    let (p, p1, p2) = profile(t);
    let u = x / t;
    let grad = &u * p1;
    let uu = &u * u.transpose();
    let hess = &uu * p2 + (DMatrix::identity(d, d) - &uu) * (p1 / t);
    BumpValue {
        value: p,
        grad,
        hess,
    }
}
