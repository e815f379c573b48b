//! Python bindings: parameter types, the analytic formulas, the Monte Carlo
//! estimator and the scenario runner.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nanodetect::analytic::{self, AnalyticError, DetectionQuery, Method};
use nanodetect::report::to_csv;
use nanodetect::scenario::{self, RunOptions};
use nanodetect::simulate::{self, SimError};
use nanodetect::{model, quadrature};

fn analytic_err(e: AnalyticError) -> PyErr {
    match e {
        AnalyticError::NonConvergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn sim_err(e: SimError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn spread(kind: &str, scale: f64) -> PyResult<model::Spread> {
    match kind {
        "matern" => Ok(model::Spread::Matern { radius: scale }),
        "thomas" => Ok(model::Spread::Thomas { sigma: scale }),
        other => Err(PyValueError::new_err(format!("spread must be 'matern' or 'thomas', got '{other}'"))),
    }
}

fn method(name: &str) -> PyResult<Method> {
    Ok(match name {
        "exact" => Method::Exact,
        "approx" => Method::Approx,
        "upper_bound" => Method::UpperBound,
        "lower_bound" => Method::LowerBound,
        "static" => Method::Static,
        "ppp" => Method::Ppp,
        other => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    })
}

#[pyclass(name = "SystemParams", module = "nanodetect_py", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PySystemParams(model::SystemParams);

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (nm_radius, target_radius = 0.0, diffusion = 100.0))]
    fn new(nm_radius: f64, target_radius: f64, diffusion: f64) -> Self {
        Self(model::SystemParams::new(nm_radius, target_radius, diffusion))
    }

    #[getter]
    fn nm_radius(&self) -> f64 {
        self.0.nm_radius
    }

    #[getter]
    fn target_radius(&self) -> f64 {
        self.0.target_radius
    }

    #[getter]
    fn diffusion(&self) -> f64 {
        self.0.diffusion
    }

    fn effective_radius(&self) -> f64 {
        self.0.effective_radius()
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemParams(nm_radius={:?}, target_radius={:?}, diffusion={:?})",
            self.0.nm_radius, self.0.target_radius, self.0.diffusion
        )
    }
}

/// A deployment: `pcp`, `single_cluster` or `ppp`.
#[pyclass(name = "Deployment", module = "nanodetect_py", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyDeployment(model::DeploymentModel);

#[pymethods]
impl PyDeployment {
    #[staticmethod]
    #[pyo3(signature = (parent_density, mean_daughters, spread = "matern", scale = 10.0))]
    fn pcp(parent_density: f64, mean_daughters: f64, spread: &str, scale: f64) -> PyResult<Self> {
        let cluster = model::ClusterModel { mean_daughters, spread: self::spread(spread, scale)? };
        Ok(Self(model::DeploymentModel::Pcp { parent_density, cluster }))
    }

    #[staticmethod]
    #[pyo3(signature = (center_region_radius, mean_daughters, spread = "matern", scale = 10.0))]
    fn single_cluster(center_region_radius: f64, mean_daughters: f64, spread: &str, scale: f64) -> PyResult<Self> {
        let cluster = model::ClusterModel { mean_daughters, spread: self::spread(spread, scale)? };
        Ok(Self(model::DeploymentModel::SingleCluster { center_region_radius, cluster }))
    }

    #[staticmethod]
    fn ppp(density: f64) -> Self {
        Self(model::DeploymentModel::Ppp { density })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind()
    }

    /// NM density `λ_p·m̄` (or the PPP density); `None` for a single cluster.
    fn nm_density(&self) -> Option<f64> {
        self.0.nm_density()
    }

    fn __repr__(&self) -> String {
        format!("Deployment({:?})", self.0)
    }
}

#[pyclass(name = "Estimate", module = "nanodetect_py", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyEstimate(model::Estimate);

#[pymethods]
impl PyEstimate {
    #[getter]
    fn p_hat(&self) -> f64 {
        self.0.p_hat
    }

    #[getter]
    fn ci_low(&self) -> f64 {
        self.0.ci_low
    }

    #[getter]
    fn ci_high(&self) -> f64 {
        self.0.ci_high
    }

    #[getter]
    fn n(&self) -> u64 {
        self.0.n
    }

    #[getter]
    fn hits(&self) -> u64 {
        self.0.hits
    }

    fn contains(&self, p: f64) -> bool {
        self.0.contains(p)
    }

    fn __repr__(&self) -> String {
        format!(
            "Estimate(p_hat={}, ci=({}, {}), hits={}, n={})",
            self.0.p_hat, self.0.ci_low, self.0.ci_high, self.0.hits, self.0.n
        )
    }
}

#[pyclass(name = "Scenario", module = "nanodetect_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyScenario(scenario::Scenario);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        scenario::parse_scenario(text).map(Self).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn t_grid(&self) -> Vec<f64> {
        self.0.t_grid.clone()
    }

    fn to_document(&self) -> String {
        self.0.to_document()
    }

    /// Evaluates the scenario and returns `(csv, failures)`.
    fn run(&self, py: Python<'_>) -> (String, Vec<String>) {
        let out = py.detach(|| scenario::run_scenario(&self.0, &RunOptions::default()));
        (to_csv(&out.rows), out.failures.iter().map(|f| f.to_string()).collect())
    }
}

fn query(params: &PySystemParams, deploy: &PyDeployment, t: f64, rel_tol: Option<f64>, clamp: bool) -> DetectionQuery {
    let mut q = DetectionQuery::new(params.0, deploy.0, t);
    if let Some(r) = rel_tol {
        q.quad.rel_tol = r;
    }
    q.clamp_kernel = clamp;
    q
}

/// Complementary error function.
#[pyfunction]
fn erfc(z: f64) -> f64 {
    quadrature::erfc(z)
}

/// Probability that a sphere of radius `a_eff` diffusing from distance `d`
/// touches the origin by time `t`.
#[pyfunction]
fn hit_prob_point(d: f64, a_eff: f64, diffusion: f64, t: f64) -> f64 {
    analytic::hit_prob_point(d, a_eff, diffusion, t)
}

/// Expected volume swept by one diffusing sphere by time `t`.
#[pyfunction]
fn swept_volume_w(a_eff: f64, diffusion: f64, t: f64) -> f64 {
    analytic::swept_volume_w(a_eff, diffusion, t)
}

/// Volume of the intersection of balls of radii `a` and `r` whose centers
/// are `x` apart.
#[pyfunction]
fn lens_volume_a(a: f64, r: f64, x: f64) -> f64 {
    analytic::lens_volume_a(a, r, x)
}

/// Detection probability by time `t`; returns `(p, est_error)`.
#[pyfunction]
#[pyo3(signature = (params, deploy, t, method = "exact", rel_tol = None, clamp_kernel = true))]
fn detect_prob(
    py: Python<'_>,
    params: &PySystemParams,
    deploy: &PyDeployment,
    t: f64,
    method: &str,
    rel_tol: Option<f64>,
    clamp_kernel: bool,
) -> PyResult<(f64, f64)> {
    let q = query(params, deploy, t, rel_tol, clamp_kernel);
    let m = self::method(method)?;
    py.detach(|| analytic::evaluate(&q, m)).map(|r| (r.p, r.est_error)).map_err(analytic_err)
}

/// `(lower, upper)` bounds on the cluster-process detection probability.
#[pyfunction]
fn detect_prob_bounds(params: &PySystemParams, deploy: &PyDeployment, t: f64) -> PyResult<(f64, f64)> {
    analytic::detect_prob_bounds(&query(params, deploy, t, None, true)).map(|(l, u)| (l.p, u.p)).map_err(analytic_err)
}

/// Detection probability of an unclustered deployment with NM density
/// `nm_density`.
#[pyfunction]
fn detect_prob_ppp(nm_density: f64, params: &PySystemParams, t: f64) -> f64 {
    analytic::detect_prob_ppp(nm_density, &params.0, t)
}

/// Expected volume covered by the NMs of one cluster by time `t`.
#[pyfunction]
fn cluster_swept_volume_v(py: Python<'_>, params: &PySystemParams, deploy: &PyDeployment, t: f64) -> PyResult<f64> {
    let q = query(params, deploy, t, None, true);
    py.detach(|| analytic::cluster_swept_volume_v(&q)).map(|r| r.value).map_err(analytic_err)
}

/// Mean number of clusters with at least one detecting NM by time `t`.
#[pyfunction]
fn mean_detecting_clusters(py: Python<'_>, params: &PySystemParams, deploy: &PyDeployment, t: f64) -> PyResult<f64> {
    let q = query(params, deploy, t, None, true);
    py.detach(|| analytic::mean_detecting_clusters(&q)).map_err(analytic_err)
}

/// Returns the list of violated parameter constraints (empty when valid).
#[pyfunction]
fn validate(params: &PySystemParams, deploy: &PyDeployment) -> Vec<String> {
    match model::validate(&params.0, &deploy.0) {
        Ok(()) => Vec::new(),
        Err(v) => v.into_iter().map(|v| v.message).collect(),
    }
}

/// Monte Carlo detection estimates at each time of `t_grid`.
#[pyfunction]
#[pyo3(signature = (params, deploy, t_grid, realizations = 10_000, seed = 1, dt = 1e-3, region_radius = 250.0, bridge_correction = false))]
#[allow(clippy::too_many_arguments)]
fn simulate_detection(
    py: Python<'_>,
    params: &PySystemParams,
    deploy: &PyDeployment,
    t_grid: Vec<f64>,
    realizations: u64,
    seed: u64,
    dt: f64,
    region_radius: f64,
    bridge_correction: bool,
) -> PyResult<Vec<PyEstimate>> {
    let t_max = t_grid.iter().copied().fold(f64::NAN, f64::max);
    if t_grid.is_empty() || t_max.is_nan() || t_max <= 0.0 {
        return Err(PyValueError::new_err("t_grid needs at least one positive time"));
    }
    let sim = model::SimSpec { dt, t_max, region_radius, n_realizations: realizations, seed, bridge_correction };
    let (p, d) = (params.0, deploy.0);
    let ex = py.detach(|| simulate::run_detection_experiment(&p, &d, &sim)).map_err(sim_err)?;
    Ok(t_grid.iter().map(|&t| PyEstimate(ex.estimate_at(t))).collect())
}

/// Monte Carlo estimate of detection at the deployment instant.
#[pyfunction]
#[pyo3(signature = (params, deploy, realizations = 10_000, seed = 1))]
fn simulate_static(
    py: Python<'_>,
    params: &PySystemParams,
    deploy: &PyDeployment,
    realizations: u64,
    seed: u64,
) -> PyResult<PyEstimate> {
    let (p, d) = (params.0, deploy.0);
    py.detach(|| simulate::static_detection_experiment(&p, &d, realizations, seed)).map(PyEstimate).map_err(sim_err)
}

/// Scenarios for one of the built-in figure presets.
#[pyfunction]
fn preset(id: &str) -> PyResult<Vec<PyScenario>> {
    scenario::preset(id)
        .map(|all| all.into_iter().map(PyScenario).collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn nanodetect_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyDeployment>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(erfc, m)?)?;
    m.add_function(wrap_pyfunction!(hit_prob_point, m)?)?;
    m.add_function(wrap_pyfunction!(swept_volume_w, m)?)?;
    m.add_function(wrap_pyfunction!(lens_volume_a, m)?)?;
    m.add_function(wrap_pyfunction!(detect_prob, m)?)?;
    m.add_function(wrap_pyfunction!(detect_prob_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(detect_prob_ppp, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_swept_volume_v, m)?)?;
    m.add_function(wrap_pyfunction!(mean_detecting_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_detection, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_static, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    Ok(())
}
