//! Detection probabilities, swept volumes, bounds and approximations.
//!
//! The per-NM hitting kernel for a sphere of (effective) radius `a` whose
//! center starts at distance `d` from a point target is
//! `(a/d)·erfc((d − a)/√(4Dt))`. Cluster averages of this kernel are nested
//! radial/angular integrals; the angular variable is `u = cos θ`, so the
//! distance from the target is `γ = √(x² + y² + 2xyu)`.
//!
//! All functions read the radius through [`SystemParams::effective_radius`],
//! so a spherical target of radius `a_t` is handled as a point target seen by
//! NMs of radius `a + a_t`.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use crate::model::{ClusterModel, DeploymentModel, QuadratureSpec, Spread, SystemParams};
use crate::quadrature::{
    self, erfc, integrate_1d_with_breaks, integrate_2d_with_breaks, integrate_semi_infinite_with_breaks, Interval,
    QuadError, QuadResult,
};

/// Inputs shared by every analytic evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionQuery {
    pub params: SystemParams,
    pub deploy: DeploymentModel,
    /// Elapsed time in seconds.
    pub t: f64,
    pub quad: QuadratureSpec,
    /// Cap the per-NM kernel at 1 (it exceeds 1 when the NM already covers
    /// the target).
    pub clamp_kernel: bool,
}

impl DetectionQuery {
    pub fn new(params: SystemParams, deploy: DeploymentModel, t: f64) -> Self {
        Self { params, deploy, t, quad: QuadratureSpec::default(), clamp_kernel: true }
    }

    pub fn at_time(&self, t: f64) -> Self {
        Self { t, ..*self }
    }

    pub fn with_deploy(&self, deploy: DeploymentModel) -> Self {
        Self { deploy, ..*self }
    }

    fn kernel(&self) -> HitKernel {
        HitKernel::new(self.params.effective_radius(), self.params.diffusion, self.t, self.clamp_kernel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Approx,
    UpperBound,
    LowerBound,
    Static,
    Ppp,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Approx => "approx",
            Method::UpperBound => "upper_bound",
            Method::LowerBound => "lower_bound",
            Method::Static => "static",
            Method::Ppp => "ppp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A probability in `[0, 1]` with its propagated quadrature error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    pub p: f64,
    pub est_error: f64,
    pub method: Method,
}

impl DetectionResult {
    fn new(raw: f64, est_error: f64, method: Method) -> Self {
        let p = raw.clamp(0.0, 1.0);
        // Whatever clamping removed is folded into the error estimate.
        Self { p, est_error: est_error + (raw - p).abs(), method }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("{method} needs a {expected} deployment, got {got}")]
    WrongDeployment { method: Method, expected: &'static str, got: &'static str },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{method}: quadrature did not converge (partial value {}, est. error {})", partial.p, partial.est_error)]
    NonConvergence { method: Method, partial: DetectionResult },
}

impl AnalyticError {
    pub fn partial(&self) -> Option<DetectionResult> {
        match self {
            AnalyticError::NonConvergence { partial, .. } => Some(*partial),
            _ => None,
        }
    }
}

/// Per-NM hitting probability as a function of the start distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitKernel {
    pub a: f64,
    /// `√(4Dt)`; zero for a static system.
    pub spread: f64,
    pub clamp: bool,
}

impl HitKernel {
    pub fn new(a: f64, diffusion: f64, t: f64, clamp: bool) -> Self {
        Self { a, spread: (4.0 * diffusion * t).max(0.0).sqrt(), clamp }
    }

    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        if self.spread == 0.0 {
            // The erfc argument tends to ±∞: the kernel collapses to contact.
            return if d <= self.a { 1.0 } else { 0.0 };
        }
        if self.clamp && d <= self.a {
            return 1.0;
        }
        self.a / d * erfc((d - self.a) / self.spread)
    }
}

/// Probability that an NM of radius `a_eff` starting at distance `d` touches
/// the target within `t`; 1 on contact, the contact indicator at `t = 0`.
pub fn hit_prob_point(d: f64, a_eff: f64, diffusion: f64, t: f64) -> f64 {
    HitKernel::new(a_eff, diffusion, t, true).eval(d)
}

/// Expected volume swept by a Brownian sphere of radius `a_eff` within `t`.
pub fn swept_volume_w(a_eff: f64, diffusion: f64, t: f64) -> f64 {
    let a = a_eff;
    4.0 * PI * a.powi(3) / 3.0 + 4.0 * PI * diffusion * a * t + 8.0 * a * a * (PI * diffusion * t).sqrt()
}

/// Volume of the intersection of a ball of radius `a` at the origin with a
/// ball of radius `r` whose center is at distance `x`.
pub fn lens_volume_a(a: f64, r: f64, x: f64) -> f64 {
    if x >= a + r {
        return 0.0;
    }
    if x <= (a - r).abs() {
        return 4.0 / 3.0 * PI * a.min(r).powi(3);
    }
    PI * (a + r - x).powi(2) * (x * x + 2.0 * x * (a + r) - 3.0 * (r - a).powi(2)) / (12.0 * x)
}

/// `e^{−(x²+y²)/2s²}·sinh(xy/s²)/x`, stable for all `x ≥ 0`.
fn gauss_sinh_over_x(x: f64, y: f64, s2: f64) -> f64 {
    if x == 0.0 {
        return y / s2 * (-y * y / (2.0 * s2)).exp();
    }
    let z = x * y / s2;
    if z < 1.0 {
        (-(x * x + y * y) / (2.0 * s2)).exp() * z.sinh() / x
    } else {
        0.5 * ((-(x - y).powi(2) / (2.0 * s2)).exp() - (-(x + y).powi(2) / (2.0 * s2)).exp()) / x
    }
}

fn cluster_extent(cluster: &ClusterModel, quad: &QuadratureSpec) -> f64 {
    match cluster.spread {
        Spread::Matern { radius } => radius,
        Spread::Thomas { sigma } => quad.tail_sigma_count * sigma,
    }
}

/// Distance scale beyond which cluster contributions are negligible.
pub fn decay_scale(q: &DetectionQuery) -> f64 {
    let spread = q.deploy.cluster().map_or(0.0, |c| cluster_extent(c, &q.quad));
    q.params.effective_radius() + spread + (4.0 * q.params.diffusion * q.t).max(0.0).sqrt()
}

/// Mean hitting probability of one daughter of a cluster whose parent is at
/// distance `x` from the target: `∫ kernel(‖x + y‖) f(y) dy`.
pub fn cluster_mean_hit(
    x: f64,
    kernel: &HitKernel,
    cluster: &ClusterModel,
    quad: &QuadratureSpec,
) -> Result<QuadResult, QuadError> {
    let a = kernel.a;
    let extent = cluster_extent(cluster, quad);
    let (weight, norm): (Box<dyn Fn(f64) -> f64>, f64) = match cluster.spread {
        Spread::Matern { radius } => (Box::new(|y: f64| y * y), 3.0 / (2.0 * radius.powi(3))),
        Spread::Thomas { sigma } => {
            let s2 = sigma * sigma;
            (Box::new(move |y: f64| y * y * (-y * y / (2.0 * s2)).exp()), 1.0 / ((2.0 * PI).sqrt() * sigma.powi(3)))
        }
    };
    // γ crosses `a` (a kink, or a jump at t = 0) inside the y-range
    // |x − a| < y < x + a; the unclamped kernel also peaks at y = x.
    let mut y_breaks = vec![(x - a).abs(), x + a];
    if !kernel.clamp {
        y_breaks.push(x);
    }
    let u_break = |y: f64| {
        if x > 0.0 && y > 0.0 {
            let u = (a * a - x * x - y * y) / (2.0 * x * y);
            (u > -1.0 && u < 1.0).then_some(u)
        } else {
            None
        }
    };
    let y_iv = Interval::new(0.0, extent)?;
    let r = if kernel.clamp {
        let integrand = |y: f64, u: f64| {
            let g2 = (x * x + y * y + 2.0 * x * y * u).max(0.0);
            kernel.eval(g2.sqrt()) * weight(y)
        };
        integrate_2d_with_breaks(integrand, y_iv, &y_breaks, Interval::new(-1.0, 1.0)?, u_break, quad)?
    } else {
        // u = s² − 1 absorbs the 1/γ singularity at y = x, u = −1.
        let integrand = |y: f64, s: f64| {
            let g2 = ((x - y).powi(2) + 2.0 * x * y * s * s).max(0.0);
            let g = g2.sqrt();
            if g == 0.0 {
                return 0.0;
            }
            kernel.eval(g) * 2.0 * s * weight(y)
        };
        let s_break = |y: f64| u_break(y).map(|u| (1.0 + u).sqrt());
        integrate_2d_with_breaks(integrand, y_iv, &y_breaks, Interval::new(0.0, 2f64.sqrt())?, s_break, quad)?
    };
    Ok(quadrature::scale(r, norm))
}

fn require_pcp(q: &DetectionQuery, method: Method) -> Result<(f64, ClusterModel), AnalyticError> {
    match q.deploy {
        DeploymentModel::Pcp { parent_density, cluster } => Ok((parent_density, cluster)),
        other => Err(AnalyticError::WrongDeployment { method, expected: "pcp", got: other.kind() }),
    }
}

fn require_single(q: &DetectionQuery, method: Method) -> Result<(f64, ClusterModel), AnalyticError> {
    match q.deploy {
        DeploymentModel::SingleCluster { center_region_radius, cluster } => Ok((center_region_radius, cluster)),
        other => Err(AnalyticError::WrongDeployment { method, expected: "single_cluster", got: other.kind() }),
    }
}

fn check_time(q: &DetectionQuery) -> Result<(), AnalyticError> {
    if q.t.is_finite() && q.t >= 0.0 {
        Ok(())
    } else {
        Err(AnalyticError::InvalidInput(format!("t must be finite and non-negative (got {})", q.t)))
    }
}

/// Tracks the first inner failure while an outer integral keeps going.
struct InnerFailure(std::cell::Cell<bool>);

impl InnerFailure {
    fn new() -> Self {
        Self(std::cell::Cell::new(false))
    }

    fn value(&self, r: Result<QuadResult, QuadError>) -> f64 {
        match r {
            Ok(r) => r.value,
            Err(e) => {
                self.0.set(true);
                e.partial().map_or(0.0, |p| p.value)
            }
        }
    }
}

fn outer_breaks(q: &DetectionQuery, cluster: &ClusterModel) -> Vec<f64> {
    let a = q.params.effective_radius();
    match cluster.spread {
        Spread::Matern { radius } => vec![(radius - a).abs(), radius + a],
        Spread::Thomas { .. } => vec![a],
    }
}

/// `∫_{R³} (1 − exp(−m̄·⟨kernel⟩)) dx` over all parent offsets.
fn cluster_volume_integral(q: &DetectionQuery, cluster: &ClusterModel) -> Result<QuadResult, QuadError> {
    if cluster.mean_daughters == 0.0 {
        return Ok(QuadResult::default());
    }
    let kernel = q.kernel();
    let failed = InnerFailure::new();
    let r = integrate_semi_infinite_with_breaks(
        |x| {
            let mean = failed.value(cluster_mean_hit(x, &kernel, cluster, &q.quad));
            -(-cluster.mean_daughters * mean).exp_m1() * x * x
        },
        decay_scale(q),
        &outer_breaks(q, cluster),
        &q.quad,
    )
    .map(|r| quadrature::scale(r, 4.0 * PI));
    match r {
        Ok(r) if failed.0.get() => Err(QuadError::NonConvergence { partial: r }),
        other => other,
    }
}

fn probability_from_mean(mean: QuadResult, method: Method) -> DetectionResult {
    let p = -(-mean.value).exp_m1();
    DetectionResult::new(p, (-mean.value).exp() * mean.est_error, method)
}

fn lift(
    r: Result<QuadResult, QuadError>,
    method: Method,
    to_result: impl Fn(QuadResult) -> DetectionResult,
) -> Result<DetectionResult, AnalyticError> {
    match r {
        Ok(v) => Ok(to_result(v)),
        Err(QuadError::NonConvergence { partial }) => {
            Err(AnalyticError::NonConvergence { method, partial: to_result(partial) })
        }
        Err(e @ QuadError::InvalidInterval { .. }) => Err(AnalyticError::InvalidInput(e.to_string())),
    }
}

/// Expected volume covered within `t` by the NMs of one typical cluster.
pub fn cluster_swept_volume_v(q: &DetectionQuery) -> Result<QuadResult, AnalyticError> {
    check_time(q)?;
    let cluster = match q.deploy {
        DeploymentModel::Pcp { cluster, .. } | DeploymentModel::SingleCluster { cluster, .. } => cluster,
        other => {
            return Err(AnalyticError::WrongDeployment { method: Method::Exact, expected: "pcp", got: other.kind() })
        }
    };
    cluster_volume_integral(q, &cluster).map_err(|e| match e {
        QuadError::NonConvergence { partial } => AnalyticError::NonConvergence {
            method: Method::Exact,
            partial: DetectionResult { p: partial.value, est_error: partial.est_error, method: Method::Exact },
        },
        other => AnalyticError::InvalidInput(other.to_string()),
    })
}

/// Exact detection probability of a Poisson cluster process deployment.
pub fn detect_prob_pcp(q: &DetectionQuery) -> Result<DetectionResult, AnalyticError> {
    check_time(q)?;
    let (lambda, cluster) = require_pcp(q, Method::Exact)?;
    if lambda == 0.0 || cluster.mean_daughters == 0.0 {
        return Ok(DetectionResult::new(0.0, 0.0, Method::Exact));
    }
    lift(cluster_volume_integral(q, &cluster), Method::Exact, |v| {
        probability_from_mean(quadrature::scale(v, lambda), Method::Exact)
    })
}

/// `1 − exp(−λ_p·V)`: void probability of the detecting-cluster count.
pub fn detect_prob_from_volume(parent_density: f64, volume: f64) -> f64 {
    -(-parent_density * volume).exp_m1()
}

/// Mean number of clusters that detect the target within `t`.
pub fn mean_detecting_clusters(q: &DetectionQuery) -> Result<f64, AnalyticError> {
    let (lambda, _) = require_pcp(q, Method::Exact)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda * cluster_swept_volume_v(q)?.value)
}

/// Lower and upper bounds from `(1 − e^{−m̄})·W ≤ V ≤ m̄·W`.
pub fn detect_prob_bounds(q: &DetectionQuery) -> Result<(DetectionResult, DetectionResult), AnalyticError> {
    check_time(q)?;
    let (lambda, cluster) = require_pcp(q, Method::LowerBound)?;
    let w = swept_volume_w(q.params.effective_radius(), q.params.diffusion, q.t);
    let m = cluster.mean_daughters;
    let lower = detect_prob_from_volume(lambda * -(-m).exp_m1(), w);
    let upper = detect_prob_from_volume(lambda * m, w);
    Ok((DetectionResult::new(lower, 0.0, Method::LowerBound), DetectionResult::new(upper, 0.0, Method::UpperBound)))
}

/// Approximation with every daughter co-located with its parent.
pub fn detect_prob_pcp_approx(q: &DetectionQuery) -> Result<DetectionResult, AnalyticError> {
    check_time(q)?;
    let (lambda, cluster) = require_pcp(q, Method::Approx)?;
    if lambda == 0.0 || cluster.mean_daughters == 0.0 {
        return Ok(DetectionResult::new(0.0, 0.0, Method::Approx));
    }
    let kernel = q.kernel();
    let a = kernel.a;
    let scale = a + kernel.spread;
    let r = integrate_semi_infinite_with_breaks(
        |x| -(-cluster.mean_daughters * kernel.eval(x)).exp_m1() * x * x,
        scale,
        &[a],
        &q.quad,
    );
    lift(r, Method::Approx, |v| probability_from_mean(quadrature::scale(v, 4.0 * PI * lambda), Method::Approx))
}

/// Homogeneous Poisson deployment of density `nm_density`.
pub fn detect_prob_ppp(nm_density: f64, params: &SystemParams, t: f64) -> f64 {
    detect_prob_from_volume(nm_density, swept_volume_w(params.effective_radius(), params.diffusion, t))
}

/// Detection probability of stationary NMs (the deployment instant).
pub fn detect_prob_static(q: &DetectionQuery) -> Result<DetectionResult, AnalyticError> {
    let (lambda, cluster) = require_pcp(q, Method::Static)?;
    let a = q.params.effective_radius();
    let m = cluster.mean_daughters;
    if lambda == 0.0 || m == 0.0 || a == 0.0 {
        return Ok(DetectionResult::new(0.0, 0.0, Method::Static));
    }
    let r = match cluster.spread {
        Spread::Matern { radius } => {
            let ball = 4.0 / 3.0 * PI * radius.powi(3);
            integrate_1d_with_breaks(
                |x| -(-m * lens_volume_a(a, radius, x) / ball).exp_m1() * x * x,
                Interval::new(0.0, a + radius).map_err(|e| AnalyticError::InvalidInput(e.to_string()))?,
                &[(a - radius).abs()],
                &q.quad,
            )
        }
        Spread::Thomas { sigma } => {
            let s2 = sigma * sigma;
            let pref = 2f64.sqrt() * m / (PI * s2).sqrt();
            let failed = InnerFailure::new();
            let inner_iv = Interval::new(0.0, a).map_err(|e| AnalyticError::InvalidInput(e.to_string()))?;
            let r = integrate_semi_infinite_with_breaks(
                |x| {
                    let inner = failed.value(integrate_1d_with_breaks(
                        |y| gauss_sinh_over_x(x, y, s2) * y,
                        inner_iv,
                        &[],
                        &q.quad,
                    ));
                    -(-pref * inner).exp_m1() * x * x
                },
                a + q.quad.tail_sigma_count * sigma,
                &[a],
                &q.quad,
            );
            match r {
                Ok(r) if failed.0.get() => Err(QuadError::NonConvergence { partial: r }),
                other => other,
            }
        }
    };
    lift(r, Method::Static, |v| probability_from_mean(quadrature::scale(v, 4.0 * PI * lambda), Method::Static))
}

/// Exact detection probability for a single cluster whose center is uniform
/// in a ball of radius `R` around the target.
pub fn detect_prob_single_cluster(q: &DetectionQuery) -> Result<DetectionResult, AnalyticError> {
    check_time(q)?;
    let (big_r, cluster) = require_single(q, Method::Exact)?;
    if cluster.mean_daughters == 0.0 {
        return Ok(DetectionResult::new(0.0, 0.0, Method::Exact));
    }
    let kernel = q.kernel();
    let failed = InnerFailure::new();
    let iv = Interval::new(0.0, big_r).map_err(|e| AnalyticError::InvalidInput(e.to_string()))?;
    let r = integrate_1d_with_breaks(
        |x| {
            let mean = failed.value(cluster_mean_hit(x, &kernel, &cluster, &q.quad));
            -(-cluster.mean_daughters * mean).exp_m1() * x * x
        },
        iv,
        &outer_breaks(q, &cluster),
        &q.quad,
    );
    let r = match r {
        Ok(r) if failed.0.get() => Err(QuadError::NonConvergence { partial: r }),
        other => other,
    };
    let norm = 3.0 / big_r.powi(3);
    lift(r, Method::Exact, |v| DetectionResult::new(v.value * norm, v.est_error * norm, Method::Exact))
}

/// Single-cluster approximation with all NMs at the cluster center.
pub fn detect_prob_single_cluster_approx(q: &DetectionQuery) -> Result<DetectionResult, AnalyticError> {
    check_time(q)?;
    let (big_r, cluster) = require_single(q, Method::Approx)?;
    if cluster.mean_daughters == 0.0 {
        return Ok(DetectionResult::new(0.0, 0.0, Method::Approx));
    }
    let kernel = q.kernel();
    let iv = Interval::new(0.0, big_r).map_err(|e| AnalyticError::InvalidInput(e.to_string()))?;
    let r = integrate_1d_with_breaks(
        |rho| -(-cluster.mean_daughters * kernel.eval(rho)).exp_m1() * rho * rho,
        iv,
        &[kernel.a],
        &q.quad,
    );
    let norm = 3.0 / big_r.powi(3);
    lift(r, Method::Approx, |v| DetectionResult::new(v.value * norm, v.est_error * norm, Method::Approx))
}

/// Expected number of detecting clusters (or NMs, for a PPP) whose parent
/// lies farther than `radius` from the target.
///
/// This is the mass a simulation loses by sampling parents only inside a
/// ball of that radius.
pub fn detecting_mass_beyond(q: &DetectionQuery, radius: f64) -> Result<f64, AnalyticError> {
    check_time(q)?;
    let kernel = q.kernel();
    let scale = decay_scale(q);
    let tail = |f: &dyn Fn(f64) -> f64| integrate_semi_infinite_with_breaks(|s| f(radius + s), scale, &[], &q.quad);
    let r = match q.deploy {
        DeploymentModel::SingleCluster { .. } => return Ok(0.0),
        DeploymentModel::Ppp { density } => {
            if density == 0.0 {
                return Ok(0.0);
            }
            tail(&|x| kernel.eval(x) * x * x).map(|v| quadrature::scale(v, 4.0 * PI * density))
        }
        DeploymentModel::Pcp { parent_density, cluster } => {
            if parent_density == 0.0 || cluster.mean_daughters == 0.0 {
                return Ok(0.0);
            }
            let failed = InnerFailure::new();
            let r = tail(&|x| {
                let mean = failed.value(cluster_mean_hit(x, &kernel, &cluster, &q.quad));
                -(-cluster.mean_daughters * mean).exp_m1() * x * x
            })
            .map(|v| quadrature::scale(v, 4.0 * PI * parent_density));
            match r {
                Ok(r) if failed.0.get() => Err(QuadError::NonConvergence { partial: r }),
                other => other,
            }
        }
    };
    lift(r, Method::Exact, |v| DetectionResult { p: v.value, est_error: v.est_error, method: Method::Exact })
        .map(|r| r.p)
}

/// Evaluates `method` for whatever deployment the query carries.
///
/// For a PPP deployment `Exact` (and `Ppp`) is the Boolean-model formula.
pub fn evaluate(q: &DetectionQuery, method: Method) -> Result<DetectionResult, AnalyticError> {
    check_time(q)?;
    match (method, q.deploy) {
        (Method::Exact | Method::Ppp, DeploymentModel::Ppp { density }) => {
            Ok(DetectionResult::new(detect_prob_ppp(density, &q.params, q.t), 0.0, method))
        }
        (Method::Static, DeploymentModel::Ppp { density }) => {
            Ok(DetectionResult::new(detect_prob_ppp(density, &q.params, 0.0), 0.0, method))
        }
        (Method::Exact, DeploymentModel::Pcp { .. }) => detect_prob_pcp(q),
        (Method::Exact, DeploymentModel::SingleCluster { .. }) => detect_prob_single_cluster(q),
        (Method::Approx, DeploymentModel::Pcp { .. }) => detect_prob_pcp_approx(q),
        (Method::Approx, DeploymentModel::SingleCluster { .. }) => detect_prob_single_cluster_approx(q),
        (Method::LowerBound, _) => detect_prob_bounds(q).map(|b| b.0),
        (Method::UpperBound, _) => detect_prob_bounds(q).map(|b| b.1),
        (Method::Static, DeploymentModel::Pcp { .. }) => detect_prob_static(q),
        (Method::Static, DeploymentModel::SingleCluster { .. }) => {
            detect_prob_single_cluster(&q.at_time(0.0)).map(|r| DetectionResult { method: Method::Static, ..r })
        }
        (Method::Ppp, DeploymentModel::Pcp { parent_density, cluster }) => Ok(DetectionResult::new(
            detect_prob_ppp(parent_density * cluster.mean_daughters, &q.params, q.t),
            0.0,
            Method::Ppp,
        )),
        (m, other) => Err(AnalyticError::WrongDeployment { method: m, expected: "pcp", got: other.kind() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2(spread: Spread, m: f64, t: f64) -> DetectionQuery {
        DetectionQuery::new(
            SystemParams::point_target(3.0, 100.0),
            DeploymentModel::Pcp { parent_density: 1e-6, cluster: ClusterModel { mean_daughters: m, spread } },
            t,
        )
    }

    #[test]
    fn hit_kernel_examples() {
        assert_eq!(hit_prob_point(3.0, 3.0, 100.0, 5.0), 1.0);
        assert_eq!(hit_prob_point(3.0, 3.0, 100.0, 0.0), 1.0);
        assert_eq!(hit_prob_point(3.5, 3.0, 100.0, 0.0), 0.0);
        let p = hit_prob_point(10.0, 3.0, 100.0, 5.0);
        let expected = 0.3 * erfc(7.0 / 2000f64.sqrt());
        assert_eq!(p, expected);
        // 50-digit evaluation: 0.2474437722582017689...
        assert!((p - 0.247_443_772_258_201_8).abs() < 1e-14, "{p}");
        assert!((hit_prob_point(10.0, 3.0, 100.0, 1e12) - 0.3).abs() < 1e-6);
    }

    #[test]
    fn swept_volume_examples() {
        assert!((swept_volume_w(3.0, 100.0, 0.0) - 36.0 * PI).abs() < 1e-12);
        let w = swept_volume_w(3.0, 100.0, 5.0);
        let closed = 36.0 * PI + 6000.0 * PI + 72.0 * (500.0 * PI).sqrt();
        assert!((w - closed).abs() < 1e-9);
        assert!((w - 21_816.248_911_344_32).abs() < 1e-8, "{w}");
        assert_eq!(swept_volume_w(3.0, 0.0, 7.0), swept_volume_w(3.0, 0.0, 0.0));
    }

    #[test]
    fn lens_volume_cases() {
        assert!((lens_volume_a(3.0, 3.0, 0.0) - 36.0 * PI).abs() < 1e-12);
        assert_eq!(lens_volume_a(3.0, 10.0, 13.0), 0.0);
        assert_eq!(lens_volume_a(3.0, 10.0, 20.0), 0.0);
        // Continuous at both case boundaries.
        let inner = lens_volume_a(3.0, 10.0, 7.0);
        assert!((inner - 36.0 * PI).abs() < 1e-9);
        assert!((lens_volume_a(3.0, 10.0, 7.0 + 1e-9) - inner).abs() < 1e-6);
        assert!(lens_volume_a(3.0, 10.0, 13.0 - 1e-9) < 1e-12);
    }

    #[test]
    fn empty_processes_give_zero() {
        let q = fig2(Spread::Matern { radius: 10.0 }, 5.0, 5.0);
        let empty =
            q.with_deploy(DeploymentModel::Pcp { parent_density: 0.0, cluster: ClusterModel::matern(5.0, 10.0) });
        assert_eq!(detect_prob_pcp(&empty).unwrap().p, 0.0);
        assert_eq!(detect_prob_pcp_approx(&empty).unwrap().p, 0.0);
        assert_eq!(mean_detecting_clusters(&empty).unwrap(), 0.0);
        let no_daughters = fig2(Spread::Matern { radius: 10.0 }, 0.0, 5.0);
        assert_eq!(detect_prob_pcp(&no_daughters).unwrap().p, 0.0);
        assert_eq!(cluster_swept_volume_v(&no_daughters).unwrap().value, 0.0);
        let (lo, hi) = detect_prob_bounds(&no_daughters).unwrap();
        assert_eq!((lo.p, hi.p), (0.0, 0.0));
        assert_eq!(detect_prob_ppp(0.0, &SystemParams::default(), 5.0), 0.0);
    }

    #[test]
    fn from_volume_algebra() {
        assert_eq!(detect_prob_from_volume(1e-6, 0.0), 0.0);
        assert!((detect_prob_from_volume(1.0, 2f64.ln()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bounds_limit_for_large_mean() {
        let q = fig2(Spread::Matern { radius: 10.0 }, 60.0, 5.0);
        let (lo, _) = detect_prob_bounds(&q).unwrap();
        let w = swept_volume_w(3.0, 100.0, 5.0);
        assert!((lo.p - detect_prob_from_volume(1e-6, w)).abs() < 1e-15);
    }

    #[test]
    fn ppp_static_limit() {
        let p = detect_prob_ppp(1e-5, &SystemParams::default(), 0.0);
        assert!((p - detect_prob_from_volume(1e-5, 36.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn wrong_deployment_is_reported() {
        let q = fig2(Spread::Matern { radius: 10.0 }, 5.0, 5.0).with_deploy(DeploymentModel::Ppp { density: 1e-6 });
        assert!(matches!(detect_prob_pcp(&q), Err(AnalyticError::WrongDeployment { .. })));
        assert!(matches!(detect_prob_single_cluster(&q), Err(AnalyticError::WrongDeployment { .. })));
        assert!(detect_prob_pcp(&q.at_time(-1.0)).is_err());
    }

    #[test]
    fn static_vanishes_with_radius() {
        let q = DetectionQuery::new(
            SystemParams::point_target(1e-9, 100.0),
            DeploymentModel::Pcp { parent_density: 1e-6, cluster: ClusterModel::matern(5.0, 10.0) },
            0.0,
        );
        assert!(detect_prob_static(&q).unwrap().p < 1e-20);
        let tq = q.with_deploy(DeploymentModel::Pcp { parent_density: 1e-6, cluster: ClusterModel::thomas(5.0, 10.0) });
        assert!(detect_prob_static(&tq).unwrap().p < 1e-20);
    }

    #[test]
    fn gauss_sinh_branches_agree() {
        let s2: f64 = 4.0;
        for &(x, y) in &[(1.0, 3.999), (1.0, 4.001), (0.5, 0.5), (20.0, 3.0)] {
            let direct = (-(x * x + y * y) / (2.0 * s2)).exp() * (x * y / s2).sinh() / x;
            assert!((gauss_sinh_over_x(x, y, s2) - direct).abs() < 1e-14 * direct.abs().max(1e-300));
        }
        let tiny = gauss_sinh_over_x(1e-12, 2.0, s2);
        assert!((tiny - gauss_sinh_over_x(0.0, 2.0, s2)).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_geometry_forces_coverage() {
        // Cluster center at (essentially) the origin, every daughter inside
        // the NM radius: P = 1 − e^{−m̄}.
        let q = DetectionQuery::new(
            SystemParams::point_target(3.0, 100.0),
            DeploymentModel::SingleCluster { center_region_radius: 1e-3, cluster: ClusterModel::matern(5.0, 1.0) },
            0.0,
        );
        let p = detect_prob_single_cluster(&q).unwrap().p;
        assert!((p - (1.0 - (-5.0f64).exp())).abs() < 1e-9, "{p}");
    }

    #[test]
    fn results_are_probabilities() {
        for spread in [Spread::Matern { radius: 10.0 }, Spread::Thomas { sigma: 10.0 }] {
            for t in [0.0, 1.0, 10.0] {
                let q = fig2(spread, 15.0, t);
                for m in
                    [Method::Exact, Method::Approx, Method::Static, Method::LowerBound, Method::UpperBound, Method::Ppp]
                {
                    let r = evaluate(&q, m).unwrap();
                    assert!((0.0..=1.0).contains(&r.p), "{m} {t}: {}", r.p);
                }
            }
        }
    }
}
