use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::constraints::build_constraints;
use super::sketch::sketch_weighted;
use super::solver::{minimize_section, SolverOptions};
use super::WhitneyField;
use crate::asdf::{
    bump_value, bundle_coordinates, AsdfConfig, BundleChart, Cylinder, CylinderPacket,
    MEMBERSHIP_SLACK,
};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Interpolating blend of jets: `f(u) = sum_k lambda_k(u) P_k(u)` with
/// `lambda_k` proportional to `exp(-|u-x_k|^2 / 2h^2) / |u-x_k|^4`. Smooth, reproduces
/// each jet's value and gradient at its site.
#[derive(Debug, Clone, PartialEq)]
pub struct ShepardExtension {
    pub field: WhitneyField,
    pub bandwidth: f64,
}

impl ShepardExtension {
    pub fn new(field: WhitneyField, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) {
            return Err(Error::InvalidParameter("bandwidth must be positive".into()));
        }
        Ok(Self { field, bandwidth })
    }

    pub fn eval(&self, u: &DVector<f64>) -> DVector<f64> {
        self.eval_with_grad(u).0
    }

    /// Value in `R^m` and Jacobian `m x d`.
    pub fn eval_with_grad(&self, u: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let f = &self.field;
        let (m, d) = (f.m(), f.d());
        let h2 = self.bandwidth * self.bandwidth;
        let offs: Vec<DVector<f64>> = f.sites.iter().map(|s| u - s).collect();
        if let Some(k) = offs.iter().position(|o| o.norm_squared() < 1e-300) {
            let jet = &f.jets[k];
            return (jet.value.clone(), jet.gradient.clone());
        }
        let logw: Vec<f64> = offs
            .iter()
            .map(|o| {
                let r2 = o.norm_squared();
                -r2 / (2.0 * h2) - 2.0 * r2.ln()
            })
            .collect();
        let mx = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
        let sum: f64 = w.iter().sum();
        let lam: Vec<f64> = w.iter().map(|x| x / sum).collect();
        let glog: Vec<DVector<f64>> = offs
            .iter()
            .map(|o| o * (-1.0 / h2 - 4.0 / o.norm_squared()))
            .collect();
        let mut gbar = DVector::zeros(d);
        for (l, g) in lam.iter().zip(&glog) {
            gbar += g * *l;
        }
        let mut val = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, d);
        for k in 0..f.len() {
            if lam[k] == 0.0 {
                continue;
            }
            let pk = f.jets[k].eval_offset(&offs[k]);
            let gk = f.jets[k].grad_offset(&offs[k]);
            let glam = (&glog[k] - &gbar) * lam[k];
            val += &pk * lam[k];
            jac += &pk * glam.transpose() + gk * lam[k];
        }
        (val, jac)
    }
}

/// Fitted section over one cylinder, in the cylinder's rescaled frame
/// `u = Pi_d o^{-1}(z) / tau_bar`, values `Pi_{n-d} o^{-1}(z) / tau_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSection {
    pub cylinder: usize,
    pub extension: ShepardExtension,
    /// Sketched objective in rescaled units.
    pub zeta: f64,
    pub lower_bound: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub points: usize,
    /// Coefficient budget `M = 2 tau_bar / tau` before the solver's divisor.
    pub budget: f64,
}

impl LocalSection {
    pub fn field(&self) -> &WhitneyField {
        &self.extension.field
    }

    /// Largest jet coefficient, bounded by [`LocalSection::budget`].
    pub fn c2_proxy(&self) -> f64 {
        self.field().coefficient_scale()
    }
}

/// Fits the local section of `cylinder` to ambient points, split in the cylinder
/// frame into tangential and normal parts. `Ok(None)` when there are no points.
pub fn fit_local_section(
    index: usize,
    cylinder: &Cylinder,
    tau: f64,
    points: &[DVector<f64>],
    weights: &[f64],
    eps_bar: f64,
    opts: &SolverOptions,
) -> Result<Option<LocalSection>> {
    let (d, n) = (cylinder.d, cylinder.n());
    let tb = cylinder.scale;
    let mut us = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for p in points {
        let w = cylinder.to_local(p) / tb;
        us.push(w.rows(0, d).into_owned());
        ys.push(w.rows(d, n - d).into_owned());
    }
    fit_local_section_coords(index, cylinder, tau, &us, &ys, weights, eps_bar, opts)
}

/// [`fit_local_section`] on coordinates already rescaled to the cylinder frame.
#[allow(clippy::too_many_arguments)]
pub fn fit_local_section_coords(
    index: usize,
    cylinder: &Cylinder,
    tau: f64,
    us: &[DVector<f64>],
    ys: &[DVector<f64>],
    weights: &[f64],
    eps_bar: f64,
    opts: &SolverOptions,
) -> Result<Option<LocalSection>> {
    if us.len() != weights.len() || ys.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: us.len(),
            got: weights.len(),
        });
    }
    if us.is_empty() {
        return Ok(None);
    }
    let codim = cylinder.n() - cylinder.d;
    let sk = sketch_weighted(us, ys, weights, eps_bar)?;
    if !(opts.budget_divisor >= 1.0) {
        return Err(Error::InvalidParameter(
            "budget divisor must be at least 1".into(),
        ));
    }
    let budget = 2.0 * cylinder.scale / tau;
    let cs = build_constraints(&sk.reps, codim, budget / opts.budget_divisor, eps_bar)?;
    let sol = minimize_section(&sk, &cs, opts)?;
    let nn = if sk.len() > 1 {
        sk.reps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                sk.reps
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| (a - b).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    let bandwidth = 2.0 * eps_bar.max(nn);
    Ok(Some(LocalSection {
        cylinder: index,
        extension: ShepardExtension::new(sol.field, bandwidth)?,
        zeta: sol.zeta,
        lower_bound: sol.lower_bound,
        iterations: sol.iterations,
        converged: sol.converged,
        points: us.len(),
        budget,
    }))
}

/// A data point decomposed as `base + fiber` over the putative manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct BundlePoint {
    pub base: DVector<f64>,
    pub fiber: DVector<f64>,
    pub weight: f64,
}

/// Local sections for every cylinder of a packet.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionModel {
    pub sections: Vec<Option<LocalSection>>,
    pub eps_bar: f64,
}

impl SectionModel {
    /// Fits each cylinder independently (in parallel) on the decomposed points whose
    /// base lies in the cylinder: inputs are the base's tangential coordinates and the
    /// fiber vector's normal coordinates, both in the cylinder frame.
    pub fn fit(
        packet: &CylinderPacket,
        data: &[BundlePoint],
        eps_bar: f64,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let sections = packet
            .cylinders()
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let (d, n) = (c.d, c.n());
                let tb = c.scale;
                let mut us = Vec::new();
                let mut ys = Vec::new();
                let mut ws = Vec::new();
                for bp in data {
                    if bp.base.len() != n || !c.contains(&bp.base, 1.0, MEMBERSHIP_SLACK) {
                        continue;
                    }
                    us.push(c.rotation.columns(0, d).tr_mul(&(&bp.base - &c.center)) / tb);
                    ys.push(c.rotation.columns(d, n - d).tr_mul(&bp.fiber) / tb);
                    ws.push(bp.weight);
                }
                fit_local_section_coords(i, c, packet.tau(), &us, &ys, &ws, eps_bar, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sections, eps_bar })
    }

    /// Decomposes every point of `cloud` within `2 tau_bar` of the putative manifold
    /// and fits the sections; returns the model with the decomposition (`None` for
    /// points outside the tube).
    pub fn fit_cloud(
        packet: &CylinderPacket,
        cloud: &PointCloud,
        eps_bar: f64,
        opts: &SolverOptions,
        cfg: &AsdfConfig,
    ) -> Result<(Self, Vec<Option<BundlePoint>>)> {
        let dec = decompose_cloud(packet, cloud, cfg);
        let data: Vec<BundlePoint> = dec.iter().flatten().cloned().collect();
        Ok((Self::fit(packet, &data, eps_bar, opts)?, dec))
    }

    /// Section model with no fitted data (every section zero) for each cylinder.
    pub fn zero(packet: &CylinderPacket) -> Result<Self> {
        let d = packet.d();
        let sections = (0..packet.len())
            .map(|i| {
                let f = WhitneyField::zeros(vec![DVector::zeros(d)], packet.n() - d)?;
                Ok(Some(LocalSection {
                    cylinder: i,
                    extension: ShepardExtension::new(f, 1.0)?,
                    zeta: 0.0,
                    lower_bound: Some(0.0),
                    iterations: 0,
                    converged: true,
                    points: 0,
                    budget: 2.0 * packet.tau_bar() / packet.tau(),
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sections,
            eps_bar: 1.0,
        })
    }

    pub fn active(&self) -> usize {
        self.sections.iter().filter(|s| s.is_some()).count()
    }

    /// Largest coefficient over all local sections.
    pub fn max_c2_proxy(&self) -> f64 {
        self.sections
            .iter()
            .flatten()
            .map(LocalSection::c2_proxy)
            .fold(0.0, f64::max)
    }
}

/// Normalized bump weights `theta(Pi_d o_j^{-1} x / tau_bar)` over the cylinders containing `x`.
pub fn partition_weights(packet: &CylinderPacket, x: &DVector<f64>) -> Result<Vec<(usize, f64)>> {
    if x.len() != packet.n() {
        return Err(Error::DimensionMismatch {
            expected: packet.n(),
            got: x.len(),
        });
    }
    let d = packet.d();
    let tb = packet.tau_bar();
    let mut raw = Vec::new();
    for (j, c) in packet.cylinders().iter().enumerate() {
        if !c.contains(x, 1.0, MEMBERSHIP_SLACK) {
            continue;
        }
        let w = c.to_local(x);
        let th = bump_value(&(w.rows(0, d).into_owned() / tb));
        if th > 0.0 {
            raw.push((j, th));
        }
    }
    let total: f64 = raw.iter().map(|r| r.1).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateCover);
    }
    Ok(raw.into_iter().map(|(j, t)| (j, t / total)).collect())
}

/// Bundle decomposition of every point, `None` outside the `2 tau_bar` tube.
pub fn decompose_cloud(
    packet: &CylinderPacket,
    cloud: &PointCloud,
    cfg: &AsdfConfig,
) -> Vec<Option<BundlePoint>> {
    let pts: Vec<(&DVector<f64>, f64)> = cloud
        .points()
        .iter()
        .zip(cloud.weights().iter().copied())
        .collect();
    pts.par_iter()
        .map(|(z, w)| {
            let (chart, v) = bundle_coordinates(packet, z, cfg).ok()?;
            (v.norm() <= 2.0 * packet.tau_bar()).then(|| BundlePoint {
                base: chart.base_point,
                fiber: v,
                weight: *w,
            })
        })
        .collect()
}

/// Fiber coordinates `t` with `Pi_{n-d} o_j^{-1}`-coordinates of `N t` equal to
/// `tau_bar f_j(u)`, `u` the rescaled tangential coordinate of the base.
fn local_section_at(
    packet: &CylinderPacket,
    sec: &LocalSection,
    chart: &BundleChart,
) -> Result<DVector<f64>> {
    let c = &packet.cylinders()[sec.cylinder];
    let (d, n) = (c.d, c.n());
    let tb = c.scale;
    let u = c
        .rotation
        .columns(0, d)
        .tr_mul(&(&chart.base_point - &c.center))
        / tb;
    let target = sec.extension.eval(&u) * tb;
    let a = c.rotation.columns(d, n - d).tr_mul(&chart.fiber_basis);
    a.lu()
        .solve(&target)
        .ok_or_else(|| Error::DecompositionFailed("fiber is tangent to the cylinder".into()))
}

/// `s(x) = sum_j theta_j(x) s_j(x)` at the chart's base point, as an ambient vector
/// in the chart's fiber. Cylinders without a section are dropped and the weights
/// renormalized.
pub fn global_section(
    packet: &CylinderPacket,
    model: &SectionModel,
    chart: &BundleChart,
) -> Result<DVector<f64>> {
    let weights = partition_weights(packet, &chart.base_point)?;
    let mut total = 0.0;
    let mut t = DVector::zeros(chart.fiber_basis.ncols());
    let mut any_section = false;
    for (j, w) in weights {
        let Some(sec) = model.sections.get(j).and_then(|s| s.as_ref()) else {
            continue;
        };
        any_section = true;
        if let Ok(tj) = local_section_at(packet, sec, chart) {
            t += tj * w;
            total += w;
        }
    }
    if !any_section {
        return Err(Error::AllSectionsEmpty);
    }
    if total <= 0.0 {
        return Err(Error::DecompositionFailed(
            "no local section could be evaluated".into(),
        ));
    }
    Ok(&chart.fiber_basis * (t / total))
}

/// Distance from `z` to the output manifold along the fiber through `z`.
/// `OutOfDomain` when `z` is farther than `2 tau_bar` from the putative manifold.
pub fn mfin_distance(
    packet: &CylinderPacket,
    model: &SectionModel,
    z: &DVector<f64>,
    cfg: &AsdfConfig,
) -> Result<f64> {
    let (chart, v) = bundle_coordinates(packet, z, cfg)?;
    if v.norm() > 2.0 * packet.tau_bar() {
        return Err(Error::OutOfDomain);
    }
    let s = global_section(packet, model, &chart)?;
    Ok((v - s).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whitney::Jet2;

    #[test]
    fn shepard_interpolates_values_and_gradients() {
        let sites = vec![
            DVector::from_row_slice(&[0.0]),
            DVector::from_row_slice(&[0.3]),
        ];
        let mut a = Jet2::zeros(1, 1);
        a.value[0] = 0.1;
        a.gradient[(0, 0)] = 0.2;
        let mut b = Jet2::zeros(1, 1);
        b.value[0] = -0.1;
        let e = ShepardExtension::new(WhitneyField::new(sites, vec![a, b]).unwrap(), 0.3).unwrap();
        let (v, g) = e.eval_with_grad(&DVector::from_row_slice(&[1e-7]));
        assert!((v[0] - 0.1).abs() < 1e-6 && (g[(0, 0)] - 0.2).abs() < 1e-4);
        let u = DVector::from_row_slice(&[0.17]);
        let h = 1e-6;
        let fd = (e.eval(&DVector::from_row_slice(&[0.17 + h]))[0]
            - e.eval(&DVector::from_row_slice(&[0.17 - h]))[0])
            / (2.0 * h);
        assert!((fd - e.eval_with_grad(&u).1[(0, 0)]).abs() < 1e-6);
    }
}
