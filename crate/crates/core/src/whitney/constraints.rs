use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::sketch::SketchedData;
use super::{coeffs_per_site, hessian_index};
use crate::error::{Error, Result};

/// Taylor-compatibility constant.
pub const COMPAT_CONSTANT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    CoefficientBound { site: usize, coef: usize },
    ValueCompatibility { from: usize, to: usize },
    GradientCompatibility { from: usize, to: usize, axis: usize },
}

/// `sum_j alpha(x_j)^2 <= beta`, with `alpha` a sparse functional on the scalar
/// jet coordinates applied to each of the `m` output components.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub beta: f64,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub sites: Vec<DVector<f64>>,
    /// Output components.
    pub m: usize,
    pub budget: f64,
    pub pair_radius_floor: f64,
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn d(&self) -> usize {
        self.sites[0].len()
    }

    /// Length of the flat field vector.
    pub fn dim(&self) -> usize {
        self.sites.len() * coeffs_per_site(self.d()) * self.m
    }

    /// `alpha_i(x_j)` for every component `j`.
    pub fn apply(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let m = self.m;
        let mut out = DVector::zeros(m);
        for &(k, c) in &self.constraints[i].coeffs {
            for j in 0..m {
                out[j] += c * x[k * m + j];
            }
        }
        out
    }

    /// `sum_k alpha_k^2`, the squared norm of the functional.
    pub fn functional_norm2(&self, i: usize) -> f64 {
        self.constraints[i].coeffs.iter().map(|(_, c)| c * c).sum()
    }

    /// Largest ratio `|A_i x| / sqrt(beta_i)` and its index.
    pub fn worst_ratio(&self, x: &DVector<f64>) -> (f64, usize) {
        let mut best = (0.0, 0);
        for i in 0..self.constraints.len() {
            let r = self.apply(i, x).norm() / self.constraints[i].beta.sqrt();
            if r > best.0 {
                best = (r, i);
            }
        }
        best
    }

    pub fn is_feasible(&self, x: &DVector<f64>) -> bool {
        matches!(separation_oracle(self, x), OracleAnswer::Yes)
    }
}

/// Halfspace `offset - normal . y >= 0`: negative at the queried point and
/// nonnegative on the constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub normal: DVector<f64>,
    pub offset: f64,
    pub constraint: usize,
}

impl Cut {
    pub fn eval(&self, y: &DVector<f64>) -> f64 {
        self.offset - self.normal.dot(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleAnswer {
    Yes,
    No(Cut),
}

fn nearest_neighbor_distances(sites: &[DVector<f64>]) -> Vec<f64> {
    sites
        .iter()
        .enumerate()
        .map(|(i, s)| {
            sites
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, t)| (s - t).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Coefficient bounds `|c| <= M` for every jet coefficient, and for site pairs
/// with `|x - y| <= 4 max(eps_bar, nn(x), nn(y))` the compatibility bounds
/// `|P_x(y) - P_y(y)| <= 3 M |x-y|^2` and `|d_a P_x(y) - d_a P_y(y)| <= 3 M |x-y|`.
pub fn build_constraints(
    sites: &[DVector<f64>],
    m: usize,
    budget: f64,
    eps_bar: f64,
) -> Result<ConstraintSet> {
    let first = sites.first().ok_or(Error::EmptyInput("sites"))?;
    let d = first.len();
    if !(budget > 0.0) {
        return Err(Error::InvalidParameter("budget must be positive".into()));
    }
    if m == 0 || d == 0 {
        return Err(Error::InvalidParameter(
            "dimensions must be positive".into(),
        ));
    }
    for (i, s) in sites.iter().enumerate() {
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.len(),
            });
        }
        if sites[..i].iter().any(|t| t == s) {
            return Err(Error::DuplicateSite(i));
        }
    }
    let q = coeffs_per_site(d);
    let m2 = budget * budget;
    let mut constraints = Vec::new();
    for s in 0..sites.len() {
        for coef in 0..q {
            constraints.push(Constraint {
                coeffs: vec![(s * q + coef, 1.0)],
                beta: m2,
                kind: ConstraintKind::CoefficientBound { site: s, coef },
            });
        }
    }
    if sites.len() > 1 {
        let nn = nearest_neighbor_distances(sites);
        for x in 0..sites.len() {
            for y in 0..sites.len() {
                if x == y {
                    continue;
                }
                let h = &sites[y] - &sites[x];
                let r = h.norm();
                if r > 4.0 * eps_bar.max(nn[x]).max(nn[y]) {
                    continue;
                }
                // P_x(y) - P_y(y) = v_x + g_x.h + h^T H_x h / 2 - v_y.
                let mut c = vec![(x * q, 1.0), (y * q, -1.0)];
                for a in 0..d {
                    c.push((x * q + 1 + a, h[a]));
                    for b in a..d {
                        let w = if a == b {
                            0.5 * h[a] * h[a]
                        } else {
                            h[a] * h[b]
                        };
                        c.push((x * q + hessian_index(d, a, b), w));
                    }
                }
                constraints.push(Constraint {
                    coeffs: c,
                    beta: (COMPAT_CONSTANT * budget * r * r).powi(2),
                    kind: ConstraintKind::ValueCompatibility { from: x, to: y },
                });
                // d_a P_x(y) - d_a P_y(y) = g_{x,a} + sum_b H_{x,ab} h_b - g_{y,a}.
                for a in 0..d {
                    let mut c = vec![(x * q + 1 + a, 1.0), (y * q + 1 + a, -1.0)];
                    for b in 0..d {
                        c.push((x * q + hessian_index(d, a, b), h[b]));
                    }
                    constraints.push(Constraint {
                        coeffs: c,
                        beta: (COMPAT_CONSTANT * budget * r).powi(2),
                        kind: ConstraintKind::GradientCompatibility {
                            from: x,
                            to: y,
                            axis: a,
                        },
                    });
                }
            }
        }
    }
    Ok(ConstraintSet {
        sites: sites.to_vec(),
        m,
        budget,
        pair_radius_floor: 4.0 * eps_bar,
        constraints,
    })
}

/// `zeta = sum_i mu_i |ybar_i - value_i|^2` on a flat field vector.
pub fn objective(x: &DVector<f64>, sketch: &SketchedData, m: usize) -> Result<f64> {
    let q = check_sketch(x, sketch, m)?;
    let mut z = 0.0;
    for (i, (mu, y)) in sketch.weights.iter().zip(&sketch.targets).enumerate() {
        for j in 0..m {
            let r = y[j] - x[(i * q) * m + j];
            z += mu * r * r;
        }
    }
    Ok(z)
}

/// Gradient of [`objective`].
pub fn objective_grad(x: &DVector<f64>, sketch: &SketchedData, m: usize) -> Result<DVector<f64>> {
    let q = check_sketch(x, sketch, m)?;
    let mut g = DVector::zeros(x.len());
    for (i, (mu, y)) in sketch.weights.iter().zip(&sketch.targets).enumerate() {
        for j in 0..m {
            g[(i * q) * m + j] = -2.0 * mu * (y[j] - x[(i * q) * m + j]);
        }
    }
    Ok(g)
}

fn check_sketch(x: &DVector<f64>, sketch: &SketchedData, m: usize) -> Result<usize> {
    let d = sketch
        .reps
        .first()
        .ok_or(Error::EmptyInput("sketch"))?
        .len();
    let q = coeffs_per_site(d);
    if x.len() != sketch.len() * q * m {
        return Err(Error::DimensionMismatch {
            expected: sketch.len() * q * m,
            got: x.len(),
        });
    }
    if sketch.targets.iter().any(|t| t.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: sketch.targets[0].len(),
        });
    }
    Ok(q)
}

/// Membership in the closed constraint set, or a deep cut from the most violated
/// constraint (largest `|A_i x| / sqrt(beta_i)`).
pub fn separation_oracle(cs: &ConstraintSet, x: &DVector<f64>) -> OracleAnswer {
    let mut worst: Option<(f64, usize, DVector<f64>)> = None;
    for i in 0..cs.constraints.len() {
        let ax = cs.apply(i, x);
        let n2 = ax.norm_squared();
        let beta = cs.constraints[i].beta;
        if n2 <= beta * (1.0 + 1e-12) {
            continue;
        }
        let ratio = n2 / beta;
        if worst.as_ref().map_or(true, |w| ratio > w.0) {
            worst = Some((ratio, i, ax));
        }
    }
    let Some((_, i, ax)) = worst else {
        return OracleAnswer::Yes;
    };
    let m = cs.m;
    let mut normal = DVector::zeros(x.len());
    for &(k, c) in &cs.constraints[i].coeffs {
        for j in 0..m {
            normal[k * m + j] += c * ax[j];
        }
    }
    let offset = ax.norm() * cs.constraints[i].beta.sqrt();
    OracleAnswer::No(Cut {
        normal,
        offset,
        constraint: i,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn zero_is_feasible() {
        let cs = build_constraints(&[v(&[0.0]), v(&[0.2]), v(&[0.5])], 2, 0.3, 0.1).unwrap();
        assert_eq!(
            separation_oracle(&cs, &DVector::zeros(cs.dim())),
            OracleAnswer::Yes
        );
        assert!(cs.constraints.iter().all(|c| c.beta > 0.0));
    }

    #[test]
    fn single_site_bounds() {
        let cs = build_constraints(&[v(&[0.0, 0.0])], 1, 1.0, 0.1).unwrap();
        assert_eq!(cs.constraints.len(), 6);
        let mut x = DVector::zeros(6);
        x[0] = 2.0;
        match separation_oracle(&cs, &x) {
            OracleAnswer::No(cut) => {
                assert!(cut.eval(&x) < 0.0);
                assert!(cut.eval(&DVector::zeros(6)) >= 0.0);
            }
            OracleAnswer::Yes => panic!("value above budget accepted"),
        }
        x[0] = 1.0;
        assert_eq!(separation_oracle(&cs, &x), OracleAnswer::Yes);
    }

    #[test]
    fn duplicate_sites_rejected() {
        assert_eq!(
            build_constraints(&[v(&[0.1]), v(&[0.1])], 1, 1.0, 0.1),
            Err(Error::DuplicateSite(1))
        );
    }
}
