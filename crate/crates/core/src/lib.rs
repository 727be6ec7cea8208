//! Desk-scale test of the manifold hypothesis.
//!
//! Given samples in R^n and class parameters (d, V, tau, eps, delta), decide whether a
//! d-manifold of volume at most V and reach at least tau fits the data with
//! mean-squared error about eps, or whether no such manifold does.
//!
//! - [`geometry`]: point clouds, greedy nets, tangents, Federer reach.
//! - [`bounds`]: sample-complexity calculators and empirical-process estimators.
//! - [`kplanes`]: k affine planes fitted by alternating minimization.
//! - [`asdf`]: cylinder packets, the approximate squared-distance function and its
//!   disc bundle.
//! - [`whitney`]: sketching, jet-constrained local sections and patching.
//! - [`pipeline`]: the end-to-end test, synthetic data and reports.

pub mod asdf;
pub mod bounds;
pub mod error;
pub mod geometry;
pub mod kplanes;
pub mod linalg;
pub mod pipeline;
pub mod whitney;

pub use error::{Error, Result};
pub use geometry::{AffineSubspace, PointCloud, ReachEstimate};
