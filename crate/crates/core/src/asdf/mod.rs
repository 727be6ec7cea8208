//! Cylinder packets and the approximate squared distance function they induce.
//!
//! A packet of congruent `(d, n-d)` cylinders defines `F(z)`, a bump-weighted
//! average of squared normal offsets. Its Hessian splits into a small tangential
//! block and a normal block near `2 I`; the zero set of `Pi_hi(z) dF(z)` is the
//! putative manifold, and the top eigenspaces of the Hessian are its normal fibers.

pub mod bump;
mod bundle;
mod conditions;
mod field;
mod packet;

pub use bump::{bump_theta, bump_value, BumpValue};
pub use bundle::{
    bundle_coordinates, extract_putative_manifold, pi_hi, solve_base_point, BundleChart,
    PutativeMesh, SpectralProjection,
};
pub use conditions::{check_asdf_conditions, AsdfConditionReport, AsdfThresholds};
pub use field::{active_cylinders, asdf_eval, asdf_grad_hess, AsdfJet};
pub use packet::{
    ideal_packet, ideal_packet_pca, validate_packet, AlignmentConstants, ConditionResult, Cylinder,
    CylinderPacket, ValidateOptions, ValidationReport,
};

use serde::{Deserialize, Serialize};

/// Slack on closed-cylinder membership tests.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Numerical constants for the field, the spectral projection and the Newton solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsdfConfig {
    /// `tau_bar / tau`.
    pub cbar12: f64,
    /// Lower end of the admissible interval for the top eigenvalues.
    pub cbar2: f64,
    /// Upper end of the admissible interval for the top eigenvalues.
    pub cbar3: f64,
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_newton_steps: usize,
    pub max_halvings: usize,
    /// Base points closer than `dedup_frac * tau_bar` are merged.
    pub dedup_frac: f64,
    pub bundle_tol: f64,
    pub bundle_max_iter: usize,
}

impl Default for AsdfConfig {
    fn default() -> Self {
        Self {
            cbar12: 0.1,
            cbar2: 0.5,
            cbar3: 4.0,
            gap_tol: 0.25,
            newton_tol: 1e-11,
            max_newton_steps: 50,
            max_halvings: 20,
            dedup_frac: 0.01,
            bundle_tol: 1e-10,
            bundle_max_iter: 100,
        }
    }
}
