//! Detection probabilities for a point (or spherical) target explored by
//! diffusing nanomachines whose initial positions form a Poisson cluster
//! process, a single cluster, or a homogeneous Poisson process.
//!
//! * [`analytic`] evaluates the closed-form and integral expressions by
//!   adaptive quadrature ([`quadrature`]).
//! * [`simulate`] is an independent particle-based Monte Carlo estimator of
//!   the same quantities.
//! * [`scenario`] and [`report`] drive both from a key–value scenario file and
//!   emit CSV.

pub mod analytic;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod scenario;
pub mod simulate;

pub use model::{
    validate, ClusterModel, DeploymentModel, Estimate, Point3, QuadratureSpec, SimSpec, Spread, SystemParams, Violation,
};
