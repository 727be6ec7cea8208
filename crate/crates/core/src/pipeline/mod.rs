//! End-to-end test: dimension reduction, a budgeted search over candidate
//! packets, section fitting, loss evaluation, verdict and verification.
//!
//! Randomness flows from one seed: candidate `i` uses `split_seed(seed, i)`.
//! Packets are evaluated in parallel and the winner is the lexicographic minimum
//! of `(loss, index)`, so results do not depend on thread scheduling.

mod evaluate;
mod packets;
mod reduce;
mod report;
mod synthetic;
mod verify;

pub use evaluate::{
    evaluate_packet, mesh_reach, Certificate, EvaluatedPacket, PacketEvaluation, Residual,
};
pub use packets::{
    candidate_packets, data_driven_packet, max_cylinders, sphere_template, template_parameters,
    unit_ball_volume, unit_sphere_area, Candidate, PacketOrigin, DATA_PCA_RADIUS,
};
pub use reduce::{reduce_dimension, reduce_dimension_to, Reduction, ReductionReport};
pub use report::{budget_estimate, write_residual_csv, BudgetReport};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticKind};
pub use verify::{
    dense_output_sample, verify_certificate, OutputSample, VerificationReport, LOSS_AGREEMENT,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asdf::AsdfConfig;
use crate::bounds::{sample_complexity, BoundParams};
use crate::error::{Error, Result};
use crate::geometry::{greedy_net, PointCloud};
use crate::whitney::{SectionModel, SolverKind, SolverOptions};
use report::json_f64;

/// Class parameters and search settings for [`run_test`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub d: usize,
    pub volume: f64,
    pub tau: f64,
    pub eps: f64,
    pub delta: f64,
    /// Controlled constant: Case One below `c * eps`, Case Two above `eps / c`.
    pub c: f64,
    /// `tau_bar / tau`.
    pub cbar12: f64,
    pub packet_budget: usize,
    pub perturbations_per_packet: usize,
    pub seed: u64,
    /// Sketch radius of the section fits, in units of `tau_bar`.
    pub eps_bar: f64,
    pub solver: SolverKind,
    pub solver_budget: usize,
    /// Fraction of `eps` that the section solves may leave on the table in total.
    pub solver_tol_frac: f64,
    /// Jets are fitted under `M / section_budget_divisor`; the blend of the jets
    /// has derivatives up to this factor larger than the jet coefficients.
    pub section_budget_divisor: f64,
    /// Out-of-tube residuals are this multiple of the distance to the mesh.
    pub out_of_tube_factor: f64,
    /// Extra reduction directions beyond the net span.
    pub extra_dim: usize,
    /// Required output reach in units of `tau`.
    pub reach_constant: f64,
    /// Spacing of the net on which the output reach is estimated, in units of `tau_bar`.
    pub reach_net_frac: f64,
    /// Skip the coverage condition at manifold-boundary cylinders.
    pub exempt_boundary: bool,
}

impl TestConfig {
    pub fn new(d: usize, volume: f64, tau: f64, eps: f64, delta: f64) -> Result<Self> {
        let c = Self {
            d,
            volume,
            tau,
            eps,
            delta,
            c: 1.0,
            cbar12: 0.1,
            packet_budget: 8,
            perturbations_per_packet: 2,
            seed: 0,
            eps_bar: 0.25,
            solver: SolverKind::ProjectedGradient,
            solver_budget: 10_000,
            solver_tol_frac: 0.01,
            section_budget_divisor: 64.0,
            out_of_tube_factor: 1.5,
            extra_dim: 2,
            reach_constant: 0.5,
            reach_net_frac: 0.25,
            exempt_boundary: false,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.bound_params()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.c >= 1.0) {
            return bad("C must be at least 1");
        }
        if !(self.cbar12 > 0.0 && self.cbar12 < 1.0) {
            return bad("cbar12 must lie in (0, 1)");
        }
        if self.packet_budget == 0 {
            return bad("packet budget must be at least 1");
        }
        if !(self.eps_bar > 0.0 && self.solver_tol_frac > 0.0) || self.solver_budget == 0 {
            return bad("eps_bar and the solver budget must be positive");
        }
        if !(self.section_budget_divisor >= 1.0) {
            return bad("section budget divisor must be at least 1");
        }
        if !(self.out_of_tube_factor > 0.0
            && self.reach_constant > 0.0
            && self.reach_net_frac > 0.0)
        {
            return bad(
                "out-of-tube factor, reach constant and reach net spacing must be positive",
            );
        }
        Ok(())
    }

    pub fn bound_params(&self) -> Result<BoundParams> {
        BoundParams::new(self.d, self.volume, self.tau, self.eps, self.delta)
    }

    pub fn tau_bar(&self) -> f64 {
        self.cbar12 * self.tau
    }

    pub fn asdf_config(&self) -> AsdfConfig {
        AsdfConfig {
            cbar12: self.cbar12,
            ..AsdfConfig::default()
        }
    }

    /// Section solves keep the best feasible iterate when the budget runs out. The
    /// objective is in units of `tau_bar^2`; the tolerance spreads
    /// `solver_tol_frac * eps` over `cylinders` sections.
    pub fn solver_options(&self, cylinders: usize) -> SolverOptions {
        let tb = self.tau_bar();
        let tol =
            (self.solver_tol_frac * self.eps / (tb * tb * cylinders.max(1) as f64)).max(1e-14);
        SolverOptions {
            kind: self.solver,
            budget: self.solver_budget,
            tol,
            accept_partial: true,
            budget_divisor: self.section_budget_divisor,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    One,
    Two,
}

/// Outcome of [`run_test`].
#[derive(Debug, Clone, PartialEq)]
pub struct TestVerdict {
    pub case: Case,
    pub best_loss: f64,
    pub threshold_low: f64,
    pub threshold_high: f64,
    pub c: f64,
    pub best_index: usize,
    pub certificate: Certificate,
    pub residuals: Vec<Residual>,
    pub evaluations: Vec<PacketEvaluation>,
    pub samples_used: usize,
    /// Advisory sample size from the class parameters with `C = 1`.
    pub sample_complexity: Option<f64>,
    pub reduction: ReductionReport,
    pub budget: BudgetReport,
}

fn sections_json(model: &SectionModel) -> serde_json::Value {
    let list: Vec<serde_json::Value> = model
        .sections
        .iter()
        .map(|s| match s {
            None => serde_json::Value::Null,
            Some(s) => serde_json::json!({
                "cylinder": s.cylinder,
                "bandwidth": s.extension.bandwidth,
                "zeta": s.zeta,
                "iterations": s.iterations,
                "converged": s.converged,
                "points": s.points,
                "budget": s.budget,
                "c2_proxy": s.c2_proxy(),
                "field": s.field().to_json(),
            }),
        })
        .collect();
    serde_json::json!({ "eps_bar": model.eps_bar, "sections": list })
}

impl Certificate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "packet_index": self.packet_index,
            "origin": self.origin,
            "packet": self.packet.to_json(),
            "sections": sections_json(&self.sections),
            "mesh_size": self.mesh.len(),
            "mesh_tolerance": self.mesh.tolerance,
            "mesh_reach": json_f64(self.mesh_reach.value()),
            "basis_shape": [self.basis.nrows(), self.basis.ncols()],
            "basis": self.basis.transpose().iter().copied().collect::<Vec<_>>(),
        })
    }
}

impl TestVerdict {
    pub fn exit_code(&self) -> i32 {
        match self.case {
            Case::One => 0,
            Case::Two => 10,
        }
    }

    /// Single JSON report; `verification` is attached when present.
    pub fn to_json(
        &self,
        config: &TestConfig,
        verification: Option<&VerificationReport>,
    ) -> serde_json::Value {
        serde_json::json!({
            "case": self.case,
            "best_loss": self.best_loss,
            "threshold_low": self.threshold_low,
            "threshold_high": self.threshold_high,
            "c": self.c,
            "note": "C is the configured controlled constant; the constant of the underlying guarantee is not computable",
            "best_index": self.best_index,
            "samples_used": self.samples_used,
            "sample_complexity": self.sample_complexity.map(json_f64),
            "config": config,
            "reduction": self.reduction,
            "budget": self.budget,
            "packets": self.evaluations,
            "certificate": self.certificate.to_json(),
            "verification": verification,
        })
    }
}

/// Runs the test on `cloud` (inside the unit ball).
pub fn run_test(cloud: &PointCloud, config: &TestConfig) -> Result<TestVerdict> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    if cloud.points().iter().any(|p| p.norm() > 1.0 + 1e-12) {
        return Err(Error::InvalidParameter(
            "points must lie in the unit ball".into(),
        ));
    }
    if config.d >= cloud.dim() {
        return Err(Error::InvalidParameter(format!(
            "d = {} must be below the ambient dimension {}",
            config.d,
            cloud.dim()
        )));
    }
    let net = greedy_net(cloud, config.tau)?;
    let mut red = reduce_dimension(cloud, &net, config.extra_dim)?;
    if red.basis.ncols() <= config.d {
        red = reduce_dimension_to(cloud, &net, (config.d + 1).min(cloud.dim()))?;
    }
    let orth: Vec<f64> = cloud
        .points()
        .iter()
        .zip(red.cloud.points())
        .map(|(p, y)| (p - &red.basis * y).norm())
        .collect();
    let candidates = candidate_packets(
        &red.cloud,
        config.d,
        config.volume,
        config.tau,
        config.cbar12,
        config.perturbations_per_packet,
        config.packet_budget,
        config.seed,
    );
    let results: Vec<std::result::Result<EvaluatedPacket, PacketEvaluation>> = candidates
        .par_iter()
        .map(|cand| match &cand.packet {
            Ok(p) => evaluate_packet(
                cand.index,
                cand.origin.clone(),
                p,
                &red.cloud,
                &orth,
                &red.basis,
                config,
            ),
            Err(e) => Err(PacketEvaluation::rejected(
                cand.index,
                cand.origin.clone(),
                0,
                None,
                Some(e.clone()),
            )),
        })
        .collect();
    let evaluations: Vec<PacketEvaluation> = results
        .iter()
        .map(|r| match r {
            Ok(e) => e.summary.clone(),
            Err(s) => s.clone(),
        })
        .collect();
    let best = results.into_iter().flatten().min_by(|a, b| {
        a.summary
            .loss
            .total_cmp(&b.summary.loss)
            .then(a.summary.index.cmp(&b.summary.index))
    });
    let Some(best) = best else {
        let diag: Vec<String> = evaluations
            .iter()
            .map(|e| {
                format!(
                    "packet {}: {}",
                    e.index,
                    e.error
                        .clone()
                        .or_else(|| e.validation.clone())
                        .unwrap_or_else(|| "rejected".into())
                )
            })
            .collect();
        return Err(Error::NoValidPacket(diag.join("\n")));
    };
    let best_loss = best.summary.loss;
    let case = if best_loss <= config.c * config.eps {
        Case::One
    } else {
        Case::Two
    };
    let sample_complexity = config
        .bound_params()
        .and_then(|p| sample_complexity(&p))
        .ok()
        .filter(|v| v.is_finite());
    Ok(TestVerdict {
        case,
        best_loss,
        threshold_low: config.eps / config.c,
        threshold_high: config.c * config.eps,
        c: config.c,
        best_index: best.summary.index,
        certificate: best.certificate,
        residuals: best.residuals,
        evaluations,
        samples_used: cloud.len(),
        sample_complexity,
        reduction: red.report,
        budget: budget_estimate(config, cloud.dim()),
    })
}

/// Verifies a Case One verdict; a verdict in Case Two is an error.
pub fn verify_output(
    verdict: &TestVerdict,
    cloud: &PointCloud,
    config: &TestConfig,
) -> Result<VerificationReport> {
    if verdict.case != Case::One {
        return Err(Error::InvalidParameter(
            "verification needs a Case One certificate".into(),
        ));
    }
    verify_certificate(
        &verdict.certificate,
        verdict.best_loss,
        &verdict.residuals,
        cloud,
        config,
    )
}
