use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::constraints::{
    objective, objective_grad, separation_oracle, ConstraintSet, OracleAnswer,
};
use super::sketch::SketchedData;
use super::WhitneyField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Deep-cut ellipsoid method driven by the separation oracle, with a
    /// certified lower bound from objective cuts.
    CuttingPlane,
    /// Accelerated projected gradient; projections by Dykstra sweeps, followed by a
    /// homogeneous rescaling onto the constraint set.
    ProjectedGradient,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cutting-plane" => Ok(Self::CuttingPlane),
            "projected-gradient" => Ok(Self::ProjectedGradient),
            _ => Err(Error::InvalidParameter(format!("unknown solver '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Iteration budget.
    pub budget: usize,
    /// Additive optimality target.
    pub tol: f64,
    /// Return the best iterate instead of an error when the budget runs out.
    pub accept_partial: bool,
    /// Dykstra sweeps per projection.
    pub dykstra_sweeps: usize,
    /// Jets are fitted under the coefficient budget divided by this factor, leaving
    /// room for the growth of the derivatives under the extension.
    pub budget_divisor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kind: SolverKind::ProjectedGradient,
            budget: 10_000,
            tol: 1e-8,
            accept_partial: false,
            dykstra_sweeps: 30,
            budget_divisor: 1.0,
        }
    }
}

/// A feasible field and its objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionSolution {
    pub field: WhitneyField,
    pub zeta: f64,
    /// Certified lower bound on the optimum (cutting plane only).
    pub lower_bound: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `zeta` over the constraint set. The returned field is always feasible.
pub fn minimize_section(
    sketch: &SketchedData,
    cs: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<SectionSolution> {
    if sketch.reps != cs.sites {
        return Err(Error::InvalidParameter(
            "sketch representatives differ from constraint sites".into(),
        ));
    }
    let (x, zeta, lb, iters, converged) = match opts.kind {
        SolverKind::CuttingPlane => ellipsoid(sketch, cs, opts)?,
        SolverKind::ProjectedGradient => projected_gradient(sketch, cs, opts)?,
    };
    if !converged && !opts.accept_partial {
        return Err(Error::BudgetExceeded {
            budget: opts.budget,
            best: zeta,
        });
    }
    let field = WhitneyField::from_flat(cs.sites.clone(), &x, cs.m)?;
    Ok(SectionSolution {
        field,
        zeta,
        lower_bound: lb,
        iterations: iters,
        converged,
    })
}

type Outcome = (DVector<f64>, f64, Option<f64>, usize, bool);

fn ellipsoid(sketch: &SketchedData, cs: &ConstraintSet, opts: &SolverOptions) -> Result<Outcome> {
    let m = cs.m;
    let dim = cs.dim();
    let nf = dim as f64;
    let radius = cs.budget * ((dim / m) as f64).sqrt() * 1.01;
    let mut c = DVector::zeros(dim);
    let mut p = DMatrix::identity(dim, dim) * (radius * radius);
    let mut best_x = DVector::zeros(dim);
    let mut best = objective(&best_x, sketch, m)?;
    let mut lower = 0.0f64;
    let mut iters = 0;
    let mut converged = best - lower <= opts.tol;
    while !converged && iters < opts.budget {
        iters += 1;
        let (g, depth) = match separation_oracle(cs, &c) {
            OracleAnswer::No(cut) => {
                let depth = -cut.eval(&c);
                (cut.normal, depth)
            }
            OracleAnswer::Yes => {
                let z = objective(&c, sketch, m)?;
                if z < best {
                    best = z;
                    best_x = c.clone();
                }
                let g = objective_grad(&c, sketch, m)?;
                let gpg = g.dot(&(&p * &g));
                lower = lower.max(z - gpg.max(0.0).sqrt());
                if gpg <= 0.0 {
                    lower = lower.max(z);
                }
                converged = best - lower <= opts.tol;
                if converged || gpg <= 0.0 {
                    break;
                }
                (g, 0.0)
            }
        };
        let pg = &p * &g;
        let gpg = g.dot(&pg);
        if !(gpg > 0.0) {
            break;
        }
        let s = gpg.sqrt();
        let alpha = (depth / s).min(0.999_999);
        let b = &pg / s;
        c -= &b * ((1.0 + nf * alpha) / (nf + 1.0));
        let scale = nf * nf / (nf * nf - 1.0) * (1.0 - alpha * alpha);
        let shrink = 2.0 * (1.0 + nf * alpha) / ((nf + 1.0) * (1.0 + alpha));
        p = (&p - &b * b.transpose() * shrink) * scale;
        p = (&p + p.transpose()) * 0.5;
    }
    Ok((best_x, best, Some(lower), iters, converged))
}

fn project_dykstra(cs: &ConstraintSet, x: &DVector<f64>, sweeps: usize) -> DVector<f64> {
    let m = cs.m;
    let mut y = x.clone();
    let mut incr: Vec<Option<Vec<f64>>> = vec![None; cs.constraints.len()];
    for _ in 0..sweeps {
        let mut moved = 0.0f64;
        for (i, con) in cs.constraints.iter().enumerate() {
            // Restore the increment removed at the previous visit.
            if let Some(inc) = &incr[i] {
                for (t, &(k, _)) in con.coeffs.iter().enumerate() {
                    for j in 0..m {
                        y[k * m + j] += inc[t * m + j];
                    }
                }
            }
            let ax = cs.apply(i, &y);
            let r = ax.norm();
            let sb = con.beta.sqrt();
            if r <= sb {
                if incr[i].is_some() {
                    moved = moved.max(1.0);
                }
                incr[i] = None;
                continue;
            }
            let a2 = cs.functional_norm2(i);
            let f = (1.0 - sb / r) / a2;
            let mut inc = vec![0.0; con.coeffs.len() * m];
            for (t, &(k, c)) in con.coeffs.iter().enumerate() {
                for j in 0..m {
                    let dv = f * c * ax[j];
                    y[k * m + j] -= dv;
                    inc[t * m + j] = dv;
                }
            }
            moved = moved.max((r - sb) / sb);
            incr[i] = Some(inc);
        }
        if moved < 1e-12 {
            break;
        }
    }
    y
}

fn rescale_feasible(cs: &ConstraintSet, x: &DVector<f64>) -> DVector<f64> {
    let (ratio, _) = cs.worst_ratio(x);
    if ratio > 1.0 {
        x / (ratio * (1.0 + 1e-15))
    } else {
        x.clone()
    }
}

fn projected_gradient(
    sketch: &SketchedData,
    cs: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<Outcome> {
    let m = cs.m;
    let dim = cs.dim();
    let lip = 2.0 * sketch.weights.iter().copied().fold(0.0, f64::max);
    if !(lip > 0.0) {
        return Ok((
            DVector::zeros(dim),
            objective(&DVector::zeros(dim), sketch, m)?,
            None,
            0,
            true,
        ));
    }
    let mut x = DVector::zeros(dim);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut iters = 0;
    let mut converged = false;
    let mut prev = objective(&x, sketch, m)?;
    let radius = cs.budget * ((dim / m) as f64).sqrt();
    while iters < opts.budget {
        iters += 1;
        let g = objective_grad(&y, sketch, m)?;
        let y_prev = y.clone();
        let xn = project_dykstra(cs, &(&y - g / lip), opts.dykstra_sweeps);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let fx = objective(&xn, sketch, m)?;
        // Restart momentum when the objective goes up.
        if fx > prev {
            y = xn.clone();
            t = 1.0;
        } else {
            y = &xn + (&xn - &x) * ((t - 1.0) / tn);
            t = tn;
        }
        // Gradient-mapping norm times the radius of the feasible set bounds the gap.
        let gap = lip * (&xn - &y_prev).norm() * radius;
        x = xn;
        prev = fx;
        if gap <= opts.tol {
            converged = true;
            break;
        }
    }
    let x = rescale_feasible(cs, &x);
    let z = objective(&x, sketch, m)?;
    Ok((x, z, None, iters, converged))
}
