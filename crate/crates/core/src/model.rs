//! Domain types shared by the analytic, simulation and scenario layers.
//!
//! Lengths are micrometers, times are seconds and diffusion coefficients are
//! micrometers²/second throughout. Every formula consumes raw magnitudes in
//! these units; there is no unit conversion below the CLI.

use std::fmt;
use std::ops::{Add, Sub};

/// A position in 3-D space (micrometers).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

/// Physical parameters of the nanomachines and the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Nanomachine radius `a`.
    pub nm_radius: f64,
    /// Target radius; zero models a point target.
    pub target_radius: f64,
    /// Diffusion coefficient `D`.
    pub diffusion: f64,
}

impl SystemParams {
    pub fn new(nm_radius: f64, target_radius: f64, diffusion: f64) -> Self {
        Self { nm_radius, target_radius, diffusion }
    }

    /// Point-target parameters.
    pub fn point_target(nm_radius: f64, diffusion: f64) -> Self {
        Self::new(nm_radius, 0.0, diffusion)
    }

    /// Contact distance between an NM center and the target center.
    ///
    /// A spherical target of radius `a_t` touched by NMs of radius `a` is the
    /// same event as a point target touched by NMs of radius `a + a_t`, so
    /// all detection math runs on this value.
    pub fn effective_radius(&self) -> f64 {
        self.nm_radius + self.target_radius
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::new(3.0, 0.0, 100.0)
    }
}

/// Spatial spread of the daughters around their cluster center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spread {
    /// Uniform in a ball of the given radius (Matérn).
    Matern { radius: f64 },
    /// Isotropic Gaussian with the given per-axis standard deviation (Thomas).
    Thomas { sigma: f64 },
}

impl Spread {
    pub fn label(&self) -> &'static str {
        match self {
            Spread::Matern { .. } => "matern",
            Spread::Thomas { .. } => "thomas",
        }
    }

    /// The radius or sigma, whichever applies.
    pub fn scale(&self) -> f64 {
        match *self {
            Spread::Matern { radius } => radius,
            Spread::Thomas { sigma } => sigma,
        }
    }

    pub fn with_scale(&self, scale: f64) -> Spread {
        match self {
            Spread::Matern { .. } => Spread::Matern { radius: scale },
            Spread::Thomas { .. } => Spread::Thomas { sigma: scale },
        }
    }
}

/// Daughter process of one cluster: Poisson(`mean_daughters`) points with the
/// given spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterModel {
    pub mean_daughters: f64,
    pub spread: Spread,
}

impl ClusterModel {
    pub fn matern(mean_daughters: f64, radius: f64) -> Self {
        Self { mean_daughters, spread: Spread::Matern { radius } }
    }

    pub fn thomas(mean_daughters: f64, sigma: f64) -> Self {
        Self { mean_daughters, spread: Spread::Thomas { sigma } }
    }
}

/// How the nanomachines are initially placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeploymentModel {
    /// Poisson cluster process with parent density `parent_density`.
    Pcp { parent_density: f64, cluster: ClusterModel },
    /// One cluster whose center is uniform in a ball of `center_region_radius`
    /// around the target.
    SingleCluster { center_region_radius: f64, cluster: ClusterModel },
    /// Homogeneous Poisson point process of NMs.
    Ppp { density: f64 },
}

impl DeploymentModel {
    pub fn kind(&self) -> &'static str {
        match self {
            DeploymentModel::Pcp { .. } => "pcp",
            DeploymentModel::SingleCluster { .. } => "single_cluster",
            DeploymentModel::Ppp { .. } => "ppp",
        }
    }

    pub fn cluster(&self) -> Option<&ClusterModel> {
        match self {
            DeploymentModel::Pcp { cluster, .. } | DeploymentModel::SingleCluster { cluster, .. } => Some(cluster),
            DeploymentModel::Ppp { .. } => None,
        }
    }

    /// Mean number of NMs per unit volume; `None` for a single cluster,
    /// which is not stationary.
    pub fn nm_density(&self) -> Option<f64> {
        match *self {
            DeploymentModel::Pcp { parent_density, cluster } => Some(parent_density * cluster.mean_daughters),
            DeploymentModel::Ppp { density } => Some(density),
            DeploymentModel::SingleCluster { .. } => None,
        }
    }
}

/// Tolerances and truncation policy for the nested quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum bisection depth of a panel (and maximum number of range
    /// doublings for semi-infinite domains).
    pub max_depth: u32,
    /// Thomas daughters are integrated out to `tail_sigma_count * sigma`.
    pub tail_sigma_count: f64,
    /// First truncation of a semi-infinite radial integral is at this
    /// multiple of the decay scale.
    pub outer_tail_constant: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-7, abs_tol: 1e-10, max_depth: 30, tail_sigma_count: 8.0, outer_tail_constant: 4.0 }
    }
}

/// Particle simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub dt: f64,
    pub t_max: f64,
    /// Parents (or PPP points) are sampled in a ball of this radius.
    pub region_radius: f64,
    pub n_realizations: u64,
    pub seed: u64,
    /// Also count crossings of the detection sphere between two samples,
    /// using the Brownian-bridge crossing probability.
    pub bridge_correction: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { dt: 1e-3, t_max: 10.0, region_radius: 250.0, n_realizations: 10_000, seed: 1, bridge_correction: false }
    }
}

/// Monte Carlo estimate of a probability with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    pub hits: u64,
}

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

impl Estimate {
    pub fn from_counts(hits: u64, n: u64) -> Self {
        assert!(n > 0 && hits <= n, "invalid counts {hits}/{n}");
        let nf = n as f64;
        let p = hits as f64 / nf;
        let z2 = Z_95 * Z_95;
        let denom = 1.0 + z2 / nf;
        let center = (p + z2 / (2.0 * nf)) / denom;
        let half = Z_95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
        // The exact bounds touch p̂ at hits = 0 or n; rounding can cross it.
        let ci_low = if hits == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
        let ci_high = if hits == n { 1.0 } else { (center + half).clamp(p, 1.0) };
        Self { p_hat: p, ci_low, ci_high, n, hits }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// One violated invariant found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self { field: field.to_string(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn check_positive(out: &mut Vec<Violation>, field: &str, value: f64) {
    if !(value.is_finite() && value > 0.0) {
        out.push(Violation::new(field, format!("{field} must be positive (got {value})")));
    }
}

fn check_non_negative(out: &mut Vec<Violation>, field: &str, value: f64) {
    if !(value.is_finite() && value >= 0.0) {
        out.push(Violation::new(field, format!("{field} must be non-negative (got {value})")));
    }
}

fn validate_cluster(out: &mut Vec<Violation>, cluster: &ClusterModel) {
    check_non_negative(out, "mean_daughters", cluster.mean_daughters);
    match cluster.spread {
        Spread::Matern { radius } => check_positive(out, "cluster_radius", radius),
        Spread::Thomas { sigma } => check_positive(out, "sigma", sigma),
    }
}

/// Checks every invariant of a parameter set and returns all violations.
///
/// Zero densities and zero mean cluster sizes are legal; they describe an
/// empty deployment whose detection probability is zero.
pub fn validate(params: &SystemParams, deploy: &DeploymentModel) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    check_positive(&mut out, "nm_radius", params.nm_radius);
    check_non_negative(&mut out, "target_radius", params.target_radius);
    check_positive(&mut out, "diffusion", params.diffusion);
    match deploy {
        DeploymentModel::Pcp { parent_density, cluster } => {
            check_non_negative(&mut out, "parent_density", *parent_density);
            validate_cluster(&mut out, cluster);
        }
        DeploymentModel::SingleCluster { center_region_radius, cluster } => {
            check_positive(&mut out, "center_region_radius", *center_region_radius);
            validate_cluster(&mut out, cluster);
        }
        DeploymentModel::Ppp { density } => check_non_negative(&mut out, "density", *density),
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn validate_quadrature(spec: &QuadratureSpec) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    check_positive(&mut out, "rel_tol", spec.rel_tol);
    check_positive(&mut out, "abs_tol", spec.abs_tol);
    if spec.max_depth < 1 {
        out.push(Violation::new("max_depth", "max_depth must be at least 1"));
    }
    if !(spec.tail_sigma_count >= 4.0 && spec.tail_sigma_count.is_finite()) {
        out.push(Violation::new("tail_sigma_count", "tail_sigma_count must be at least 4"));
    }
    if !(spec.outer_tail_constant >= 4.0 && spec.outer_tail_constant.is_finite()) {
        out.push(Violation::new("outer_tail_constant", "outer_tail_constant must be at least 4"));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn validate_sim(spec: &SimSpec) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    check_positive(&mut out, "dt", spec.dt);
    check_positive(&mut out, "t_max", spec.t_max);
    if spec.dt.is_finite() && spec.t_max.is_finite() && spec.dt > spec.t_max {
        out.push(Violation::new("dt", "dt must not exceed t_max"));
    }
    check_positive(&mut out, "region_radius", spec.region_radius);
    if spec.n_realizations < 1 {
        out.push(Violation::new("realizations", "realizations must be at least 1"));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
