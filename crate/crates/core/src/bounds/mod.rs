//! Sample-complexity formulas, fat-shattering bounds, the chaining integral and
//! the Monte-Carlo estimators that back them.
//!
//! Controlled constants are explicit inputs; every formula here is a pure function.

mod jl;
mod lifting;
mod rademacher;

pub use jl::{jl_project, JlProjection};
pub use lifting::{lift_identity_check, lift_phi, lift_psi, LiftCheck};
pub use rademacher::{empirical_rademacher, RademacherEstimate};

use std::f64::consts::E;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the hypothesis class: intrinsic dimension, volume, reach,
/// accuracy, confidence and the controlled constant `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub d: usize,
    pub volume: f64,
    pub tau: f64,
    pub eps: f64,
    pub delta: f64,
    pub c: f64,
}

impl BoundParams {
    pub fn new(d: usize, volume: f64, tau: f64, eps: f64, delta: f64) -> Result<Self> {
        let p = Self {
            d,
            volume,
            tau,
            eps,
            delta,
            c: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_c(mut self, c: f64) -> Result<Self> {
        self.c = c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.d == 0 {
            return bad("d must be positive");
        }
        if !(self.volume > 0.0) {
            return bad("V must be positive");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must lie in (0, 1)");
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("eps must lie in (0, 1)");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if !(self.c > 0.0) {
            return bad("C must be positive");
        }
        Ok(())
    }
}

/// `U_G(1/r) = C V (tau^-d + (tau r)^(-d/2))`.
pub fn covering_bound(p: &BoundParams, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "r must be positive, got {r}"
        )));
    }
    let d = p.d as f64;
    Ok(p.c * p.volume * (p.tau.powf(-d) + (p.tau * r).powf(-d / 2.0)))
}

/// `s_G(eps, delta) = C (U/eps^2 ln^4(U/eps) + eps^-2 ln(1/delta))` with `U = U_G(1/eps)`.
pub fn sample_complexity(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    let u = covering_bound(p, p.eps)?;
    Ok(sample_complexity_from_u(u, p.eps, p.delta, p.c))
}

/// [`sample_complexity`] with the covering number supplied directly.
pub fn sample_complexity_from_u(u: f64, eps: f64, delta: f64, c: f64) -> f64 {
    let e2 = eps * eps;
    c * (u / e2 * (u / eps).ln().powi(4) + (1.0 / delta).ln() / e2)
}

/// `fat_gamma(F_{k,l}) <= x ln^2 x` with `x = C k l / gamma^2`; the log argument is
/// clamped below at `e`, and the bound is exactly zero for `gamma > 2`.
pub fn fat_bound_maxmin(k: usize, l: usize, gamma: f64, c: f64) -> f64 {
    if gamma > 2.0 {
        return 0.0;
    }
    let x = c * (k as f64) * (l as f64) / (gamma * gamma);
    let lg = x.max(E).ln();
    x * lg * lg
}

/// A nonincreasing fat-shattering profile `gamma -> fat_gamma`, zero above its ceiling.
#[derive(Clone)]
pub struct FatProfile {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support_ceiling: f64,
}

impl fmt::Debug for FatProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FatProfile")
            .field("support_ceiling", &self.support_ceiling)
            .finish()
    }
}

impl FatProfile {
    pub fn new(eval: impl Fn(f64) -> f64 + Send + Sync + 'static, support_ceiling: f64) -> Self {
        Self {
            eval: Arc::new(eval),
            support_ceiling,
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, 0.0)
    }

    /// `f0` on `[0, gamma0]`, zero beyond.
    pub fn constant(f0: f64, gamma0: f64) -> Self {
        Self::new(move |_| f0, gamma0)
    }

    /// The k-plane max-min class profile of [`fat_bound_maxmin`].
    pub fn maxmin(k: usize, l: usize, c: f64) -> Self {
        Self::new(move |g| fat_bound_maxmin(k, l, g, c), 2.0)
    }

    pub fn support_ceiling(&self) -> f64 {
        self.support_ceiling
    }

    pub fn eval(&self, gamma: f64) -> f64 {
        if gamma > self.support_ceiling {
            0.0
        } else {
            (self.eval)(gamma).max(0.0)
        }
    }
}

/// `eps + 12 * integral_{eps/4}^{ceiling/c} sqrt(profile(c eta) / s) d eta`, adaptive Simpson
/// at relative tolerance 1e-8.
pub fn chaining_bound(profile: &FatProfile, eps: f64, s: usize) -> Result<f64> {
    chaining_bound_scaled(profile, eps, s, 1.0)
}

/// [`chaining_bound`] with an explicit scale constant `c` on the profile argument.
pub fn chaining_bound_scaled(profile: &FatProfile, eps: f64, s: usize, c: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::InvalidParameter("s must be at least 1".into()));
    }
    if !(c > 0.0) || !(eps >= 0.0) {
        return Err(Error::InvalidParameter(
            "eps must be nonnegative and c positive".into(),
        ));
    }
    let lo = eps / 4.0;
    let hi = profile.support_ceiling() / c;
    if !(hi > lo) {
        return Ok(eps);
    }
    let sf = s as f64;
    let f = |eta: f64| (profile.eval(c * eta) / sf).sqrt();
    let integral = adaptive_simpson(&f, lo, hi, 1e-8)?;
    Ok(eps + 12.0 * integral)
}

/// Adaptive Simpson quadrature to a relative tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    // Coarse composite pass fixes the absolute target.
    let panels = 64;
    let h = (b - a) / panels as f64;
    let mut coarse = 0.0;
    let mut pieces = Vec::with_capacity(panels);
    for i in 0..panels {
        let x0 = a + h * i as f64;
        let x1 = if i + 1 == panels { b } else { x0 + h };
        let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
        let s = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        coarse += s;
        pieces.push((x0, x1, f0, fm, f1, s));
    }
    if !coarse.is_finite() {
        return Err(Error::InvalidParameter("integrand is not finite".into()));
    }
    if coarse == 0.0 {
        return Ok(0.0);
    }
    let tol = rel_tol * coarse.abs() / panels as f64;
    let mut total = 0.0;
    for (x0, x1, f0, fm, f1, s) in pieces {
        total += simpson_rec(f, x0, x1, f0, fm, f1, s, tol, 60)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::InvalidParameter("integrand is not finite".into()));
    }
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(
        simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
    )
}

/// `sum_{i=0}^{vc} binom(k, i)`.
pub fn sauer_shelah(vc: usize, k: usize) -> BigUint {
    let mut term = BigUint::from(1u32);
    let mut total = BigUint::from(1u32);
    for i in 0..vc.min(k) {
        term = term * BigUint::from(k - i) / BigUint::from(i + 1);
        total += &term;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn covering_example() {
        let p = BoundParams::new(1, 2.0 * PI, 0.5, 0.1, 0.1).unwrap();
        assert!((covering_bound(&p, 0.5).unwrap() - 8.0 * PI).abs() < 1e-12);
        let p2 = p.with_c(2.0).unwrap();
        assert_eq!(
            covering_bound(&p2, 0.5).unwrap(),
            2.0 * covering_bound(&p, 0.5).unwrap()
        );
        let q = BoundParams::new(2, 1.0, 0.1, 0.1, 0.1).unwrap();
        assert!((covering_bound(&q, 1e6).unwrap() - 100.0).abs() < 1e-2);
    }

    #[test]
    fn delta_halving_adds_log2() {
        let p = BoundParams::new(1, 1.0, 0.5, 0.5, 0.5).unwrap();
        let q = BoundParams { delta: 0.25, ..p };
        let diff = sample_complexity(&q).unwrap() - sample_complexity(&p).unwrap();
        assert!((diff - 4.0 * 2f64.ln()).abs() < 1e-9);
        let edge = sample_complexity_from_u(1.0, 1.0, (-1.0f64).exp(), 1.0);
        assert!((edge - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fat_examples() {
        assert_eq!(fat_bound_maxmin(3, 7, 2.5, 1.0), 0.0);
        assert_eq!(fat_bound_maxmin(1, 1, 1.0, 1.0), 1.0);
        let ratio = fat_bound_maxmin(2, 1, 0.01, 1.0) / fat_bound_maxmin(1, 1, 0.01, 1.0);
        assert!((1.9..=2.6).contains(&ratio), "{ratio}");
    }

    #[test]
    fn chaining_examples() {
        assert_eq!(chaining_bound(&FatProfile::zero(), 0.3, 10).unwrap(), 0.3);
        let (f0, g0, eps, s) = (5.0, 1.5, 0.2, 40);
        let closed = eps + 12.0 * (f0 / s as f64).sqrt() * (g0 - eps / 4.0);
        let q = chaining_bound(&FatProfile::constant(f0, g0), eps, s).unwrap();
        assert!((q - closed).abs() < 1e-6);
        let p = FatProfile::maxmin(2, 3, 1.0);
        let a = chaining_bound(&p, 0.1, 100).unwrap() - 0.1;
        let b = chaining_bound(&p, 0.1, 400).unwrap() - 0.1;
        assert!((a / b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn sauer_shelah_examples() {
        assert_eq!(sauer_shelah(0, 9), BigUint::from(1u32));
        assert_eq!(sauer_shelah(2, 4), BigUint::from(11u32));
        assert_eq!(sauer_shelah(7, 5), BigUint::from(32u32));
        assert_eq!(sauer_shelah(200, 200), BigUint::from(1u32) << 200usize);
    }
}
