//! Second-order Whitney fields, the jet-constraint set, its separation oracle and
//! the convex solvers that fit local sections; patching of local sections into a
//! global section of the disc bundle.

mod constraints;
mod section;
mod sketch;
mod solver;

pub use constraints::{
    build_constraints, objective, objective_grad, separation_oracle, Constraint, ConstraintKind,
    ConstraintSet, Cut, OracleAnswer,
};
pub use section::{
    decompose_cloud, fit_local_section, fit_local_section_coords, global_section, mfin_distance,
    partition_weights, BundlePoint, LocalSection, SectionModel, ShepardExtension,
};
pub use sketch::{sketch, sketch_weighted, SketchedData};
pub use solver::{minimize_section, SectionSolution, SolverKind, SolverOptions};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of scalar jet coefficients per site: value, gradient, upper-triangular Hessian.
pub fn coeffs_per_site(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

/// Index of the Hessian entry `(a, b)` with `a <= b` among a site's coefficients.
pub fn hessian_index(d: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    1 + d + a * d - a * (a + 1) / 2 + b
}

/// Degree-two Taylor polynomial with values in `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: DVector<f64>,
    /// `m x d`.
    pub gradient: DMatrix<f64>,
    /// One symmetric `d x d` block per output component.
    pub hessian: Vec<DMatrix<f64>>,
}

impl Jet2 {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            value: DVector::zeros(m),
            gradient: DMatrix::zeros(m, d),
            hessian: vec![DMatrix::zeros(d, d); m],
        }
    }

    pub fn m(&self) -> usize {
        self.value.len()
    }

    pub fn d(&self) -> usize {
        self.gradient.ncols()
    }

    pub fn check(&self) -> Result<()> {
        let (m, d) = (self.m(), self.d());
        if self.gradient.nrows() != m || self.hessian.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.gradient.nrows(),
            });
        }
        for h in &self.hessian {
            if h.nrows() != d || h.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: h.nrows(),
                });
            }
            if (h - h.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidParameter(
                    "jet Hessian is not symmetric".into(),
                ));
            }
        }
        Ok(())
    }

    /// `P(base + h)` for a jet based at `base`.
    pub fn eval_offset(&self, h: &DVector<f64>) -> DVector<f64> {
        let mut v = &self.value + &self.gradient * h;
        for (j, hj) in self.hessian.iter().enumerate() {
            v[j] += 0.5 * h.dot(&(hj * h));
        }
        v
    }

    /// Jacobian of `P` at `base + h`, `m x d`.
    pub fn grad_offset(&self, h: &DVector<f64>) -> DMatrix<f64> {
        let mut g = self.gradient.clone();
        for (j, hj) in self.hessian.iter().enumerate() {
            let row = hj * h;
            for a in 0..self.d() {
                g[(j, a)] += row[a];
            }
        }
        g
    }

    /// Largest coefficient magnitude: value norm, gradient entry, Hessian entry.
    pub fn coefficient_scale(&self) -> f64 {
        let mut s = self.value.norm();
        for a in 0..self.d() {
            s = s.max(self.gradient.column(a).norm());
            for b in a..self.d() {
                s = s.max(
                    self.hessian
                        .iter()
                        .map(|h| h[(a, b)] * h[(a, b)])
                        .sum::<f64>()
                        .sqrt(),
                );
            }
        }
        s
    }
}

/// Jets on a finite set of sites in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitneyField {
    pub sites: Vec<DVector<f64>>,
    pub jets: Vec<Jet2>,
}

#[derive(Serialize, Deserialize)]
struct SiteJson {
    x: Vec<f64>,
    value: Vec<f64>,
    gradient: Vec<f64>,
    hessian: Vec<Vec<f64>>,
}

impl WhitneyField {
    pub fn new(sites: Vec<DVector<f64>>, jets: Vec<Jet2>) -> Result<Self> {
        if sites.len() != jets.len() {
            return Err(Error::DimensionMismatch {
                expected: sites.len(),
                got: jets.len(),
            });
        }
        let first = jets.first().ok_or(Error::EmptyInput("whitney field"))?;
        let (m, d) = (first.m(), first.d());
        for (s, j) in sites.iter().zip(&jets) {
            if s.len() != d || j.m() != m || j.d() != d {
                return Err(Error::InvalidParameter(
                    "inconsistent jet dimensions".into(),
                ));
            }
            j.check()?;
        }
        Ok(Self { sites, jets })
    }

    pub fn zeros(sites: Vec<DVector<f64>>, m: usize) -> Result<Self> {
        let d = sites.first().ok_or(Error::EmptyInput("sites"))?.len();
        let jets = vec![Jet2::zeros(m, d); sites.len()];
        Self::new(sites, jets)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn d(&self) -> usize {
        self.sites[0].len()
    }

    pub fn m(&self) -> usize {
        self.jets[0].m()
    }

    /// Flat coordinates: entry `(site * q + coef) * m + component`.
    pub fn to_flat(&self) -> DVector<f64> {
        let (d, m) = (self.d(), self.m());
        let q = coeffs_per_site(d);
        let mut x = DVector::zeros(self.len() * q * m);
        for (s, jet) in self.jets.iter().enumerate() {
            for j in 0..m {
                x[(s * q) * m + j] = jet.value[j];
                for a in 0..d {
                    x[(s * q + 1 + a) * m + j] = jet.gradient[(j, a)];
                    for b in a..d {
                        x[(s * q + hessian_index(d, a, b)) * m + j] = jet.hessian[j][(a, b)];
                    }
                }
            }
        }
        x
    }

    pub fn from_flat(sites: Vec<DVector<f64>>, x: &DVector<f64>, m: usize) -> Result<Self> {
        let d = sites.first().ok_or(Error::EmptyInput("sites"))?.len();
        let q = coeffs_per_site(d);
        if x.len() != sites.len() * q * m {
            return Err(Error::DimensionMismatch {
                expected: sites.len() * q * m,
                got: x.len(),
            });
        }
        let jets = (0..sites.len())
            .map(|s| {
                let mut jet = Jet2::zeros(m, d);
                for j in 0..m {
                    jet.value[j] = x[(s * q) * m + j];
                    for a in 0..d {
                        jet.gradient[(j, a)] = x[(s * q + 1 + a) * m + j];
                        for b in a..d {
                            let v = x[(s * q + hessian_index(d, a, b)) * m + j];
                            jet.hessian[j][(a, b)] = v;
                            jet.hessian[j][(b, a)] = v;
                        }
                    }
                }
                jet
            })
            .collect();
        Self::new(sites, jets)
    }

    /// `P_{x_s}(y)`.
    pub fn eval_at(&self, s: usize, y: &DVector<f64>) -> DVector<f64> {
        self.jets[s].eval_offset(&(y - &self.sites[s]))
    }

    pub fn coefficient_scale(&self) -> f64 {
        self.jets
            .iter()
            .map(Jet2::coefficient_scale)
            .fold(0.0, f64::max)
    }

    /// Per site `{x, value, gradient (row-major), hessian (upper triangle per component)}`.
    pub fn to_json(&self) -> serde_json::Value {
        let d = self.d();
        let sites: Vec<SiteJson> = self
            .sites
            .iter()
            .zip(&self.jets)
            .map(|(x, jet)| SiteJson {
                x: x.iter().copied().collect(),
                value: jet.value.iter().copied().collect(),
                gradient: jet.gradient.transpose().iter().copied().collect(),
                hessian: jet
                    .hessian
                    .iter()
                    .map(|h| {
                        (0..d)
                            .flat_map(|a| (a..d).map(move |b| (a, b)))
                            .map(|(a, b)| h[(a, b)])
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        serde_json::json!({ "sites": sites })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let sites: Vec<SiteJson> = serde_json::from_value(
            v.get("sites")
                .cloned()
                .ok_or_else(|| Error::Parse("missing sites".into()))?,
        )?;
        let mut xs = Vec::new();
        let mut jets = Vec::new();
        for s in sites {
            let d = s.x.len();
            let m = s.value.len();
            if s.gradient.len() != m * d || s.hessian.len() != m {
                return Err(Error::Parse("jet has wrong shape".into()));
            }
            let mut hessian = Vec::new();
            for h in &s.hessian {
                if h.len() != d * (d + 1) / 2 {
                    return Err(Error::Parse("hessian has wrong shape".into()));
                }
                let mut mat = DMatrix::zeros(d, d);
                let mut k = 0;
                for a in 0..d {
                    for b in a..d {
                        mat[(a, b)] = h[k];
                        mat[(b, a)] = h[k];
                        k += 1;
                    }
                }
                hessian.push(mat);
            }
            jets.push(Jet2 {
                value: DVector::from_vec(s.value),
                gradient: DMatrix::from_row_slice(m, d, &s.gradient),
                hessian,
            });
            xs.push(DVector::from_vec(s.x));
        }
        Self::new(xs, jets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessian_layout() {
        let d = 3;
        let idx: Vec<usize> = (0..d)
            .flat_map(|a| (a..d).map(move |b| hessian_index(d, a, b)))
            .collect();
        assert_eq!(idx, vec![4, 5, 6, 7, 8, 9]);
        assert_eq!(coeffs_per_site(3), 10);
        assert_eq!(hessian_index(3, 2, 1), hessian_index(3, 1, 2));
    }

    #[test]
    fn flat_and_json_roundtrip() {
        let sites = vec![
            DVector::from_row_slice(&[0.0, 0.0]),
            DVector::from_row_slice(&[0.5, 0.1]),
        ];
        let x = DVector::from_fn(2 * 6 * 2, |i, _| (i as f64 * 0.37).sin());
        let f = WhitneyField::from_flat(sites.clone(), &x, 2).unwrap();
        assert_eq!(f.to_flat(), x);
        let back = WhitneyField::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn jet_evaluation() {
        let mut j = Jet2::zeros(1, 1);
        j.value[0] = 1.0;
        j.gradient[(0, 0)] = 2.0;
        j.hessian[0][(0, 0)] = 4.0;
        let h = DVector::from_row_slice(&[0.5]);
        assert!((j.eval_offset(&h)[0] - (1.0 + 1.0 + 0.5)).abs() < 1e-15);
        assert!((j.grad_offset(&h)[(0, 0)] - 4.0).abs() < 1e-15);
    }
}
