//! Particle-based Monte Carlo estimator.
//!
//! Each realization samples a deployment, moves every NM by discrete-time
//! Brownian increments and records the first sample time at which any NM
//! center is within the effective radius of the target.
//!
//! Far from the target several time steps are merged into one Gaussian
//! increment when a union bound guarantees that the skipped sample points
//! reach the detection sphere with probability below [`SKIP_EPSILON`]; the
//! sampled positions at every retained step have exactly the per-step law.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::{detecting_mass_beyond, DetectionQuery};
use crate::model::{
    validate, validate_sim, ClusterModel, DeploymentModel, Estimate, Point3, SimSpec, Spread, SystemParams, Violation,
};

/// Standard-normal threshold used when merging steps: a merged block of
/// duration `τ` is allowed when `h ≥ SKIP_Z·√(6Dτ)`, `h` being the distance
/// to the detection sphere.
pub const SKIP_Z: f64 = 7.5;
/// `12·Φc(SKIP_Z)`: bound on the probability that a merged block hides a
/// sample point inside the detection sphere.
pub const SKIP_EPSILON: f64 = 3.8e-13;

/// Expected number of detecting clusters that may lie outside the sampling
/// region before a run is rejected.
pub const EDGE_MASS_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid parameters: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("configuration error: {0}")]
    Config(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; ")
}

/// Deterministic random stream for one realization.
///
/// ChaCha8 keyed by the run seed, with the realization index as the stream
/// id, so realization `k` draws the same numbers whatever order or thread it
/// runs on.
#[derive(Debug, Clone)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self(rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    n as u64
}

fn unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Point3 {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    Point3::new(s * phi.cos(), s * phi.sin(), z)
}

fn uniform_in_ball<R: Rng + ?Sized>(center: Point3, radius: f64, rng: &mut R) -> Point3 {
    let rho = radius * rng.random::<f64>().cbrt();
    let u = unit_vector(rng);
    center + Point3::new(rho * u.x, rho * u.y, rho * u.z)
}

fn gaussian3<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Point3 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    Point3::new(scale * x, scale * y, scale * z)
}

/// Homogeneous Poisson points of intensity `density` in the ball of radius
/// `region_radius` around the origin.
pub fn sample_parents<R: Rng + ?Sized>(density: f64, region_radius: f64, rng: &mut R) -> Vec<Point3> {
    let n = poisson_count(density * 4.0 / 3.0 * PI * region_radius.powi(3), rng);
    (0..n).map(|_| uniform_in_ball(Point3::ORIGIN, region_radius, rng)).collect()
}

/// Poisson(m̄) daughters around `center`.
pub fn sample_daughters<R: Rng + ?Sized>(cluster: &ClusterModel, center: Point3, rng: &mut R) -> Vec<Point3> {
    let n = poisson_count(cluster.mean_daughters, rng);
    (0..n)
        .map(|_| match cluster.spread {
            Spread::Matern { radius } => uniform_in_ball(center, radius, rng),
            Spread::Thomas { sigma } => center + gaussian3(sigma, rng),
        })
        .collect()
}

/// Discrete-time Brownian walker monitored against a detection sphere.
#[derive(Debug, Clone, Copy)]
pub struct Walker {
    pub a_eff: f64,
    pub diffusion: f64,
    pub dt: f64,
    pub bridge_correction: bool,
}

impl Walker {
    pub fn new(params: &SystemParams, sim: &SimSpec) -> Self {
        Self {
            a_eff: params.effective_radius(),
            diffusion: params.diffusion,
            dt: sim.dt,
            bridge_correction: sim.bridge_correction,
        }
    }

    /// Index of the first sample step (0 = start) at which the walker is
    /// within `a_eff` of the origin, looking at steps `0..=max_steps`.
    pub fn first_hit_step<R: Rng + ?Sized>(&self, start: Point3, max_steps: u64, rng: &mut R) -> Option<u64> {
        let a = self.a_eff;
        let mut pos = start;
        let mut d = pos.norm();
        if d <= a {
            return Some(0);
        }
        if self.diffusion <= 0.0 {
            return None;
        }
        let step_sd = (2.0 * self.diffusion * self.dt).sqrt();
        // Steps that may be merged when the sphere is `h` away: h²/(6·D·dt·z²).
        let merge_coeff = 1.0 / (6.0 * self.diffusion * self.dt * SKIP_Z * SKIP_Z);
        let mut k = 0u64;
        while k < max_steps {
            let h = d - a;
            let remaining = max_steps - k;
            let safe = (h * h * merge_coeff).floor();
            if safe >= remaining as f64 {
                // Cannot reach the sphere before the horizon.
                return None;
            }
            if safe >= 2.0 {
                let n = safe as u64;
                pos = pos + gaussian3(step_sd * (n as f64).sqrt(), rng);
                k += n;
                d = pos.norm();
                if d <= a {
                    return Some(k);
                }
                continue;
            }
            let next = pos + gaussian3(step_sd, rng);
            k += 1;
            let d1 = next.norm();
            if d1 <= a {
                return Some(k);
            }
            if self.bridge_correction {
                // Half-space Brownian-bridge crossing probability.
                let p = (-(d - a) * (d1 - a) / (self.diffusion * self.dt)).exp();
                if rng.random::<f64>() < p {
                    return Some(k);
                }
            }
            pos = next;
            d = d1;
        }
        None
    }
}

/// Number of sample steps up to and including time `t`.
pub fn steps_until(t: f64, dt: f64) -> u64 {
    (t / dt + 1e-9).floor().max(0.0) as u64
}

/// First time at which an NM starting at `start` is detected, if within
/// `sim.t_max`.
pub fn brownian_first_hit<R: Rng + ?Sized>(
    start: Point3,
    a_eff: f64,
    diffusion: f64,
    sim: &SimSpec,
    rng: &mut R,
) -> Option<f64> {
    let walker = Walker { a_eff, diffusion, dt: sim.dt, bridge_correction: sim.bridge_correction };
    walker.first_hit_step(start, steps_until(sim.t_max, sim.dt), rng).map(|k| k as f64 * sim.dt)
}

/// One sampled deployment and its detection outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub parents: Vec<Point3>,
    /// `(cluster index, initial position)`; for a PPP every NM is its own
    /// cluster.
    pub daughters: Vec<(usize, Point3)>,
    pub first_hit_time: Option<f64>,
    /// `(cluster index, first hit step)` for every cluster that detected the
    /// target, in cluster order.
    pub detecting_clusters: Vec<(usize, u64)>,
}

impl Realization {
    pub fn detected(&self) -> bool {
        self.first_hit_time.is_some()
    }

    pub fn first_hit_step(&self) -> Option<u64> {
        self.detecting_clusters.iter().map(|c| c.1).min()
    }
}

fn sample_deployment<R: Rng + ?Sized>(
    deploy: &DeploymentModel,
    region_radius: f64,
    rng: &mut R,
) -> (Vec<Point3>, Vec<(usize, Point3)>) {
    match deploy {
        DeploymentModel::Pcp { parent_density, cluster } => {
            let parents = sample_parents(*parent_density, region_radius, rng);
            let mut daughters = Vec::new();
            for (i, p) in parents.iter().enumerate() {
                daughters.extend(sample_daughters(cluster, *p, rng).into_iter().map(|d| (i, d)));
            }
            (parents, daughters)
        }
        DeploymentModel::SingleCluster { center_region_radius, cluster } => {
            let center = uniform_in_ball(Point3::ORIGIN, *center_region_radius, rng);
            let daughters = sample_daughters(cluster, center, rng).into_iter().map(|d| (0, d)).collect();
            (vec![center], daughters)
        }
        DeploymentModel::Ppp { density } => {
            let points = sample_parents(*density, region_radius, rng);
            let daughters = points.iter().copied().enumerate().collect();
            (points, daughters)
        }
    }
}

/// Samples and propagates realization `index` of a run.
///
/// Within a cluster, NMs after the first detector are only followed up to
/// the cluster's current first-hit step, which leaves both the cluster hit
/// times and the realization hit time unchanged.
pub fn simulate_realization(params: &SystemParams, deploy: &DeploymentModel, sim: &SimSpec, index: u64) -> Realization {
    let mut rng = RngStream::new(sim.seed, index);
    let (parents, daughters) = sample_deployment(deploy, sim.region_radius, &mut rng);
    let walker = Walker::new(params, sim);
    let horizon = steps_until(sim.t_max, sim.dt);
    let mut detecting_clusters: Vec<(usize, u64)> = Vec::new();
    let mut start = 0;
    while start < daughters.len() {
        let cluster = daughters[start].0;
        let end = start + daughters[start..].iter().take_while(|d| d.0 == cluster).count();
        let mut best: Option<u64> = None;
        for &(_, pos) in &daughters[start..end] {
            let limit = match best {
                Some(0) => break,
                Some(b) => b - 1,
                None => horizon,
            };
            if let Some(k) = walker.first_hit_step(pos, limit, &mut rng) {
                best = Some(k);
            }
        }
        if let Some(k) = best {
            detecting_clusters.push((cluster, k));
        }
        start = end;
    }
    let first_hit_time = detecting_clusters.iter().map(|c| c.1).min().map(|k| k as f64 * sim.dt);
    Realization { parents, daughters, first_hit_time, detecting_clusters }
}

/// Per-realization record kept by an experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealizationSummary {
    pub first_hit_step: Option<u64>,
    /// First-hit steps of the detecting clusters, ascending.
    pub cluster_hit_steps: Vec<u64>,
}

/// Result of [`run_detection_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub sim: SimSpec,
    pub summaries: Vec<RealizationSummary>,
}

impl Experiment {
    /// Detection estimate for the event "detected by time `t`".
    pub fn estimate_at(&self, t: f64) -> Estimate {
        let k = steps_until(t, self.sim.dt);
        let hits = self.summaries.iter().filter(|s| s.first_hit_step.is_some_and(|h| h <= k)).count();
        Estimate::from_counts(hits as u64, self.summaries.len() as u64)
    }

    /// Estimate at `t_max`.
    pub fn estimate(&self) -> Estimate {
        self.estimate_at(self.sim.t_max)
    }

    pub fn curve(&self, grid: &[f64]) -> Vec<(f64, Estimate)> {
        grid.iter().map(|&t| (t, self.estimate_at(t))).collect()
    }

    /// Number of clusters that detected the target by `t`, per realization.
    pub fn detecting_cluster_counts(&self, t: f64) -> Vec<u64> {
        let k = steps_until(t, self.sim.dt);
        self.summaries.iter().map(|s| s.cluster_hit_steps.iter().filter(|&&h| h <= k).count() as u64).collect()
    }

    /// Sample mean and unbiased variance of the detecting-cluster count.
    pub fn detecting_cluster_moments(&self, t: f64) -> (f64, f64) {
        let counts = self.detecting_cluster_counts(t);
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<u64>() as f64 / n;
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, var)
    }
}

fn check_inputs(params: &SystemParams, deploy: &DeploymentModel, sim: &SimSpec) -> Result<(), SimError> {
    let mut errs = validate(params, deploy).err().unwrap_or_default();
    errs.extend(validate_sim(sim).err().unwrap_or_default());
    if errs.is_empty() {
        Ok(())
    } else {
        Err(SimError::Invalid(errs))
    }
}

/// Rejects runs whose sampling region truncates a non-negligible part of the
/// process, judged by the analytic tail mass.
pub fn check_edge_effect(params: &SystemParams, deploy: &DeploymentModel, sim: &SimSpec) -> Result<(), SimError> {
    let q = DetectionQuery::new(*params, *deploy, sim.t_max);
    let mass = detecting_mass_beyond(&q, sim.region_radius)
        .map_err(|e| SimError::Config(format!("edge-effect check failed: {e}")))?;
    if mass > EDGE_MASS_TOLERANCE {
        return Err(SimError::Config(format!(
            "region_radius {} truncates the deployment: {mass:.3e} expected detecting clusters lie outside it",
            sim.region_radius
        )));
    }
    Ok(())
}

/// Runs `sim.n_realizations` independent realizations.
///
/// The result depends only on the inputs: realizations use per-index random
/// streams and are collected in index order.
pub fn run_detection_experiment(
    params: &SystemParams,
    deploy: &DeploymentModel,
    sim: &SimSpec,
) -> Result<Experiment, SimError> {
    check_inputs(params, deploy, sim)?;
    check_edge_effect(params, deploy, sim)?;
    let summaries = (0..sim.n_realizations)
        .into_par_iter()
        .map(|i| {
            let r = simulate_realization(params, deploy, sim, i);
            let mut steps: Vec<u64> = r.detecting_clusters.iter().map(|c| c.1).collect();
            steps.sort_unstable();
            RealizationSummary { first_hit_step: steps.first().copied(), cluster_hit_steps: steps }
        })
        .collect();
    Ok(Experiment { sim: *sim, summaries })
}

/// Fraction of realizations in which some NM covers the target at the
/// deployment instant.
pub fn static_detection_experiment(
    params: &SystemParams,
    deploy: &DeploymentModel,
    n: u64,
    seed: u64,
) -> Result<Estimate, SimError> {
    let sim = SimSpec { n_realizations: n, seed, ..SimSpec::default() };
    check_inputs(params, deploy, &sim)?;
    let a = params.effective_radius();
    let a2 = a * a;
    let hits = (0..n)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = RngStream::new(seed, i);
            let (_, daughters) = sample_deployment(deploy, sim.region_radius, &mut rng);
            daughters.iter().any(|(_, p)| p.norm_sq() <= a2)
        })
        .count();
    Ok(Estimate::from_counts(hits as u64, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RngStream {
        RngStream::new(7, 0)
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| RngStream::new(1, 3).next_u64()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        assert_ne!(RngStream::new(1, 3).next_u64(), RngStream::new(1, 4).next_u64());
        assert_ne!(RngStream::new(1, 3).next_u64(), RngStream::new(2, 3).next_u64());
    }

    #[test]
    fn empty_parent_process() {
        assert!(sample_parents(0.0, 250.0, &mut rng()).is_empty());
        assert!(sample_daughters(&ClusterModel::matern(0.0, 10.0), Point3::ORIGIN, &mut rng()).is_empty());
    }

    #[test]
    fn parents_stay_in_region() {
        let mut r = rng();
        for _ in 0..50 {
            assert!(sample_parents(1e-6, 250.0, &mut r).iter().all(|p| p.norm() <= 250.0));
        }
    }

    #[test]
    fn parent_count_mean() {
        // λ·(4/3)π·250³ = 65.45
        let mut r = rng();
        let n = 4000;
        let counts: Vec<f64> = (0..n).map(|_| sample_parents(1e-6, 250.0, &mut r).len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = 1e-6 * 4.0 / 3.0 * PI * 250f64.powi(3);
        assert!((expected - 65.45).abs() < 0.01);
        // Standard error of the mean is √(65.45/4000) ≈ 0.128.
        assert!((mean - expected).abs() < 0.6, "{mean}");
        assert!((var / mean - 1.0).abs() < 0.1, "dispersion {}", var / mean);
    }

    #[test]
    fn matern_second_moment() {
        // E‖Y‖² = 3r²/5 = 60 for r = 10.
        let mut r = rng();
        let c = ClusterModel::matern(20.0, 10.0);
        let mut sum = 0.0;
        let mut n = 0;
        for _ in 0..5000 {
            for p in sample_daughters(&c, Point3::ORIGIN, &mut r) {
                assert!(p.norm() <= 10.0);
                sum += p.norm_sq();
                n += 1;
            }
        }
        let m = sum / n as f64;
        assert!((m - 60.0).abs() < 1.0, "{m}");
    }

    #[test]
    fn thomas_axis_variance() {
        let mut r = rng();
        let c = ClusterModel::thomas(20.0, 10.0);
        let center = Point3::new(5.0, -3.0, 1.0);
        let pts: Vec<Point3> = (0..5000).flat_map(|_| sample_daughters(&c, center, &mut r)).collect();
        let n = pts.len() as f64;
        for axis in 0..3 {
            let get = |p: &Point3| [p.x - center.x, p.y - center.y, p.z - center.z][axis];
            let mean = pts.iter().map(get).sum::<f64>() / n;
            let var = pts.iter().map(|p| (get(p) - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var - 100.0).abs() < 3.0, "axis {axis}: {var}");
        }
    }

    #[test]
    fn start_inside_hits_immediately() {
        let sim = SimSpec::default();
        assert_eq!(brownian_first_hit(Point3::new(1.0, 1.0, 1.0), 3.0, 100.0, &sim, &mut rng()), Some(0.0));
        assert_eq!(brownian_first_hit(Point3::new(3.0, 0.0, 0.0), 3.0, 100.0, &sim, &mut rng()), Some(0.0));
    }

    #[test]
    fn frozen_particle_never_hits() {
        let sim = SimSpec::default();
        assert_eq!(brownian_first_hit(Point3::new(3.1, 0.0, 0.0), 3.0, 0.0, &sim, &mut rng()), None);
    }

    #[test]
    fn unreachable_start_returns_without_sampling() {
        let sim = SimSpec { t_max: 1.0, ..SimSpec::default() };
        let mut r = rng();
        let before = r.clone().next_u64();
        assert_eq!(brownian_first_hit(Point3::new(5000.0, 0.0, 0.0), 3.0, 100.0, &sim, &mut r), None);
        assert_eq!(r.next_u64(), before);
    }

    #[test]
    fn detection_is_monotone_in_time() {
        let params = SystemParams::point_target(3.0, 100.0);
        let deploy = DeploymentModel::Pcp { parent_density: 1e-6, cluster: ClusterModel::matern(5.0, 10.0) };
        let sim = SimSpec { n_realizations: 300, t_max: 5.0, ..SimSpec::default() };
        let exp = run_detection_experiment(&params, &deploy, &sim).unwrap();
        let curve = exp.curve(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(curve.windows(2).all(|w| w[0].1.hits <= w[1].1.hits));
        for s in &exp.summaries {
            assert_eq!(s.first_hit_step.is_some(), !s.cluster_hit_steps.is_empty());
        }
    }

    #[test]
    fn realization_invariants() {
        let params = SystemParams::point_target(3.0, 100.0);
        let deploy = DeploymentModel::Pcp { parent_density: 1e-5, cluster: ClusterModel::thomas(5.0, 10.0) };
        let sim = SimSpec { t_max: 2.0, ..SimSpec::default() };
        for i in 0..20 {
            let r = simulate_realization(&params, &deploy, &sim, i);
            assert_eq!(r.detected(), !r.detecting_clusters.is_empty());
            assert_eq!(r.first_hit_time.is_some(), r.first_hit_step().is_some());
            assert!(r.daughters.iter().all(|(c, _)| *c < r.parents.len()));
        }
    }

    #[test]
    fn empty_deployment_never_detects() {
        let params = SystemParams::point_target(3.0, 100.0);
        let deploy = DeploymentModel::Pcp { parent_density: 0.0, cluster: ClusterModel::matern(5.0, 10.0) };
        let sim = SimSpec { n_realizations: 50, t_max: 1.0, ..SimSpec::default() };
        let e = run_detection_experiment(&params, &deploy, &sim).unwrap().estimate();
        assert_eq!((e.p_hat, e.hits), (0.0, 0));
        let s = static_detection_experiment(&SystemParams::point_target(1e-9, 100.0), &deploy, 100, 1).unwrap();
        assert_eq!(s.hits, 0);
    }

    #[test]
    fn truncating_region_is_rejected() {
        let params = SystemParams::point_target(3.0, 100.0);
        let deploy = DeploymentModel::Pcp { parent_density: 1e-6, cluster: ClusterModel::matern(5.0, 10.0) };
        let sim = SimSpec { region_radius: 40.0, t_max: 10.0, ..SimSpec::default() };
        assert!(matches!(run_detection_experiment(&params, &deploy, &sim), Err(SimError::Config(_))));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let params = SystemParams::point_target(-3.0, 100.0);
        let deploy = DeploymentModel::Ppp { density: 1e-6 };
        assert!(matches!(run_detection_experiment(&params, &deploy, &SimSpec::default()), Err(SimError::Invalid(_))));
    }
}
