//! Scenario files, figure presets and the scenario runner.
//!
//! A scenario is a flat UTF-8 document of `key = value` lines. `#` starts a
//! comment, lists are comma separated and the time grid is either a list or
//! `start:step:stop`.
//!
//! ```text
//! name = matern_m5
//! params.nm_radius = 3
//! params.diffusion = 100
//! deploy.kind = pcp
//! deploy.parent_density = 1e-6
//! deploy.mean_daughters = 5
//! deploy.spread = matern
//! deploy.cluster_radius = 10
//! methods = exact, approx, simulation
//! t = 0.5:0.5:10
//! ```
//!
//! | key | default |
//! |-----|---------|
//! | `name` | `scenario` |
//! | `methods` | `exact` |
//! | `t` | required |
//! | `params.nm_radius` | required |
//! | `params.target_radius` | `0` |
//! | `params.diffusion` | `100` |
//! | `deploy.kind` | required: `pcp`, `single_cluster` or `ppp` |
//! | `deploy.parent_density` | required for `pcp` |
//! | `deploy.center_region_radius` | required for `single_cluster` |
//! | `deploy.mean_daughters`, `deploy.spread` | required for `pcp` and `single_cluster` |
//! | `deploy.cluster_radius` / `deploy.sigma` | required for `matern` / `thomas` spread |
//! | `deploy.density` | required for `ppp` |
//! | `quad.rel_tol`, `quad.abs_tol`, `quad.max_depth` | `1e-7`, `1e-10`, `30` |
//! | `quad.tail_sigma_count`, `quad.outer_tail_constant` | `8`, `4` |
//! | `quad.clamp_kernel` | `true` |
//! | `sim.dt`, `sim.region_radius`, `sim.realizations` | `0.001`, `250`, `10000` |
//! | `sim.seed`, `sim.bridge_correction` | `1`, `false` |
//!
//! The simulation horizon is the last grid time.

use std::fmt::{self, Write as _};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::{self, AnalyticError, DetectionQuery, Method};
use crate::model::{
    validate, validate_quadrature, validate_sim, ClusterModel, DeploymentModel, QuadratureSpec, SimSpec, Spread,
    SystemParams, Violation,
};
use crate::report::Row;
use crate::simulate::{run_detection_experiment, static_detection_experiment};

/// What a scenario row computes. The declaration order is the canonical
/// output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MethodKind {
    Exact,
    Approx,
    UpperBound,
    LowerBound,
    /// Unclustered deployment with the same NM density `λ_p·m̄`.
    PppEquiv,
    /// Unclustered deployment with density `λ_p·(1 − e^{−m̄})`.
    PppNonempty,
    Static,
    Simulation,
}

impl MethodKind {
    pub const ALL: [MethodKind; 8] = [
        MethodKind::Exact,
        MethodKind::Approx,
        MethodKind::UpperBound,
        MethodKind::LowerBound,
        MethodKind::PppEquiv,
        MethodKind::PppNonempty,
        MethodKind::Static,
        MethodKind::Simulation,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MethodKind::Exact => "exact",
            MethodKind::Approx => "approx",
            MethodKind::UpperBound => "upper_bound",
            MethodKind::LowerBound => "lower_bound",
            MethodKind::PppEquiv => "ppp_equiv",
            MethodKind::PppNonempty => "ppp_nonempty",
            MethodKind::Static => "static",
            MethodKind::Simulation => "simulation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub params: SystemParams,
    pub deploy: DeploymentModel,
    /// Sorted and without duplicates.
    pub methods: Vec<MethodKind>,
    /// Strictly increasing, non-empty.
    pub t_grid: Vec<f64>,
    pub quad: QuadratureSpec,
    pub clamp_kernel: bool,
    /// `t_max` always equals the last grid time.
    pub sim: SimSpec,
}

/// A field-level problem found while reading a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    /// 1-based source line, when the field came from a document.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required field: {0}")]
    Missing(String),
    #[error("{}", join(.0))]
    Invalid(Vec<FieldError>),
    #[error("unknown preset '{0}' (known: {known})", known = PRESET_IDS.join(", "))]
    UnknownPreset(String),
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl ScenarioError {
    fn invalid(field: &str, line: Option<usize>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid(vec![FieldError { field: field.to_string(), line, message: message.into() }])
    }
}

pub const KNOWN_KEYS: [&str; 25] = [
    "name",
    "methods",
    "t",
    "params.nm_radius",
    "params.target_radius",
    "params.diffusion",
    "deploy.kind",
    "deploy.parent_density",
    "deploy.center_region_radius",
    "deploy.density",
    "deploy.mean_daughters",
    "deploy.spread",
    "deploy.cluster_radius",
    "deploy.sigma",
    "quad.rel_tol",
    "quad.abs_tol",
    "quad.max_depth",
    "quad.tail_sigma_count",
    "quad.outer_tail_constant",
    "quad.clamp_kernel",
    "sim.dt",
    "sim.region_radius",
    "sim.realizations",
    "sim.seed",
    "sim.bridge_correction",
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    /// `None` for values set programmatically.
    line: Option<usize>,
}

/// The key–value lines of a scenario document, before interpretation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    entries: Vec<Entry>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut doc = Document::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ScenarioError::Syntax {
                    line,
                    message: format!("expected 'key = value', found '{content}'"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(ScenarioError::UnknownKey { line, key: key.to_string() });
            }
            if doc.contains(key) {
                return Err(ScenarioError::DuplicateKey { line, key: key.to_string() });
            }
            if value.is_empty() {
                return Err(ScenarioError::Syntax { line, message: format!("empty value for '{key}'") });
            }
            doc.entries.push(Entry { key: key.to_string(), value: value.to_string(), line: Some(line) });
        }
        Ok(doc)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    /// Sets or replaces a key, as a command-line override would.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ScenarioError::invalid(key, None, "unknown key"));
        }
        let entry = Entry { key: key.to_string(), value: value.trim().to_string(), line: None };
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => *e = entry,
            None => self.entries.push(entry),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.get(key).and_then(|e| e.line)
    }

    fn required(&self, key: &str) -> Result<&Entry, ScenarioError> {
        self.get(key).ok_or_else(|| ScenarioError::Missing(key.to_string()))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>, ScenarioError> {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| ScenarioError::invalid(key, e.line, format!("expected {what}, found '{}'", e.value))),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ScenarioError> {
        self.parsed(key, "a number")
    }

    fn required_float(&self, key: &str) -> Result<f64, ScenarioError> {
        self.required(key)?;
        Ok(self.float(key)?.expect("present"))
    }
}

fn parse_methods(doc: &Document) -> Result<Vec<MethodKind>, ScenarioError> {
    let Some(e) = doc.get("methods") else { return Ok(vec![MethodKind::Exact]) };
    let mut methods = Vec::new();
    for item in e.value.split(',').map(str::trim) {
        let m = MethodKind::parse(item).ok_or_else(|| {
            let known: Vec<_> = MethodKind::ALL.iter().map(|m| m.label()).collect();
            ScenarioError::invalid("methods", e.line, format!("unknown method '{item}' (known: {})", known.join(", ")))
        })?;
        methods.push(m);
    }
    methods.sort();
    methods.dedup();
    Ok(methods)
}

/// Parses `start:step:stop` or a comma-separated list.
pub fn parse_time_grid(text: &str) -> Result<Vec<f64>, String> {
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("expected a number, found '{}'", s.trim()));
    let grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err("a range must be start:step:stop".into());
        }
        let (start, step, stop) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
        if !(step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite() && stop >= start) {
            return Err("a range needs a positive step and stop ≥ start".into());
        }
        let count = ((stop - start) / step + 1e-9).floor();
        if count > 1e6 {
            return Err("range has too many points".into());
        }
        (0..=count as u64).map(|i| start + i as f64 * step).collect()
    } else {
        text.split(',').map(number).collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() {
        return Err("time grid is empty".into());
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err("times must be finite and non-negative".into());
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err("times must be strictly increasing".into());
    }
    Ok(grid)
}

fn parse_bool(doc: &Document, key: &str, default: bool) -> Result<bool, ScenarioError> {
    match doc.get(key) {
        None => Ok(default),
        Some(e) => match e.value.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(ScenarioError::invalid(key, e.line, format!("expected true or false, found '{other}'"))),
        },
    }
}

fn parse_cluster(doc: &Document, used: &mut Vec<&'static str>) -> Result<ClusterModel, ScenarioError> {
    used.extend(["deploy.mean_daughters", "deploy.spread"]);
    let mean_daughters = doc.required_float("deploy.mean_daughters")?;
    let spread = doc.required("deploy.spread")?;
    let spread = match spread.value.as_str() {
        "matern" => {
            used.push("deploy.cluster_radius");
            Spread::Matern { radius: doc.required_float("deploy.cluster_radius")? }
        }
        "thomas" => {
            used.push("deploy.sigma");
            Spread::Thomas { sigma: doc.required_float("deploy.sigma")? }
        }
        other => {
            return Err(ScenarioError::invalid(
                "deploy.spread",
                spread.line,
                format!("expected matern or thomas, found '{other}'"),
            ))
        }
    };
    Ok(ClusterModel { mean_daughters, spread })
}

fn parse_deploy(doc: &Document) -> Result<DeploymentModel, ScenarioError> {
    let kind = doc.required("deploy.kind")?;
    let mut used = vec!["deploy.kind"];
    let deploy = match kind.value.as_str() {
        "pcp" => {
            used.push("deploy.parent_density");
            let parent_density = doc.required_float("deploy.parent_density")?;
            DeploymentModel::Pcp { parent_density, cluster: parse_cluster(doc, &mut used)? }
        }
        "single_cluster" => {
            used.push("deploy.center_region_radius");
            let center_region_radius = doc.required_float("deploy.center_region_radius")?;
            DeploymentModel::SingleCluster { center_region_radius, cluster: parse_cluster(doc, &mut used)? }
        }
        "ppp" => {
            used.push("deploy.density");
            DeploymentModel::Ppp { density: doc.required_float("deploy.density")? }
        }
        other => {
            return Err(ScenarioError::invalid(
                "deploy.kind",
                kind.line,
                format!("expected pcp, single_cluster or ppp, found '{other}'"),
            ))
        }
    };
    if let Some(e) = doc.entries.iter().find(|e| e.key.starts_with("deploy.") && !used.contains(&e.key.as_str())) {
        let context = match deploy.cluster() {
            Some(c) => format!("a {} deployment with {} spread", deploy.kind(), c.spread.label()),
            None => format!("a {} deployment", deploy.kind()),
        };
        return Err(ScenarioError::invalid(&e.key, e.line, format!("does not apply to {context}")));
    }
    Ok(deploy)
}

/// Document key for a field named by the model validators.
fn document_key(field: &str) -> &'static str {
    KNOWN_KEYS.iter().copied().find(|k| k.rsplit('.').next() == Some(field)).unwrap_or(match field {
        "t_max" => "t",
        _ => "name",
    })
}

fn field_errors(doc: &Document, violations: Vec<Violation>) -> Vec<FieldError> {
    violations
        .into_iter()
        .map(|v| {
            let key = document_key(&v.field);
            FieldError { field: key.to_string(), line: doc.line(key), message: v.message }
        })
        .collect()
}

fn check_name(name: &str) -> Result<(), String> {
    if name.is_empty() || name.contains([',', '"', '\n', '\r']) {
        return Err(format!("name must be non-empty without commas or quotes, found '{name}'"));
    }
    Ok(())
}

impl Scenario {
    pub fn from_document(doc: &Document) -> Result<Self, ScenarioError> {
        let deploy = parse_deploy(doc)?;
        let params = SystemParams {
            nm_radius: doc.required_float("params.nm_radius")?,
            target_radius: doc.float("params.target_radius")?.unwrap_or(0.0),
            diffusion: doc.float("params.diffusion")?.unwrap_or(SystemParams::default().diffusion),
        };
        let t_entry = doc.required("t")?;
        let t_grid = parse_time_grid(&t_entry.value).map_err(|m| ScenarioError::invalid("t", t_entry.line, m))?;
        let name = doc.get("name").map(|e| e.value.clone()).unwrap_or_else(|| "scenario".to_string());
        check_name(&name).map_err(|m| ScenarioError::invalid("name", doc.line("name"), m))?;
        let qd = QuadratureSpec::default();
        let quad = QuadratureSpec {
            rel_tol: doc.float("quad.rel_tol")?.unwrap_or(qd.rel_tol),
            abs_tol: doc.float("quad.abs_tol")?.unwrap_or(qd.abs_tol),
            max_depth: doc.parsed("quad.max_depth", "an integer")?.unwrap_or(qd.max_depth),
            tail_sigma_count: doc.float("quad.tail_sigma_count")?.unwrap_or(qd.tail_sigma_count),
            outer_tail_constant: doc.float("quad.outer_tail_constant")?.unwrap_or(qd.outer_tail_constant),
        };
        let sd = SimSpec::default();
        let sim = SimSpec {
            dt: doc.float("sim.dt")?.unwrap_or(sd.dt),
            t_max: sd.t_max,
            region_radius: doc.float("sim.region_radius")?.unwrap_or(sd.region_radius),
            n_realizations: doc.parsed("sim.realizations", "an integer")?.unwrap_or(sd.n_realizations),
            seed: doc.parsed("sim.seed", "an unsigned 64-bit integer")?.unwrap_or(sd.seed),
            bridge_correction: parse_bool(doc, "sim.bridge_correction", sd.bridge_correction)?,
        };
        let mut scenario = Scenario {
            name,
            params,
            deploy,
            methods: parse_methods(doc)?,
            t_grid,
            quad,
            clamp_kernel: parse_bool(doc, "quad.clamp_kernel", true)?,
            sim,
        };
        scenario.sync_horizon();
        scenario.check().map_err(|v| ScenarioError::Invalid(field_errors(doc, v)))?;
        Ok(scenario)
    }

    /// Keeps the simulation horizon at the last grid time.
    pub fn sync_horizon(&mut self) {
        self.sim.t_max = *self.t_grid.last().expect("non-empty grid");
    }

    /// Every violated invariant of the scenario.
    pub fn check(&self) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        out.extend(validate(&self.params, &self.deploy).err().unwrap_or_default());
        out.extend(validate_quadrature(&self.quad).err().unwrap_or_default());
        if self.methods.contains(&MethodKind::Simulation) {
            // A grid of only t = 0 is simulated statically and has no horizon.
            let sim = SimSpec { t_max: self.sim.t_max.max(self.sim.dt), ..self.sim };
            out.extend(validate_sim(&sim).err().unwrap_or_default());
        }
        if self.methods.is_empty() {
            out.push(Violation { field: "methods".into(), message: "methods must not be empty".into() });
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Writes the scenario back as a document. Floats are written in their
    /// shortest round-trip form, so parsing the output gives an identical
    /// scenario.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("name", self.name.clone());
        put("params.nm_radius", format!("{:?}", self.params.nm_radius));
        put("params.target_radius", format!("{:?}", self.params.target_radius));
        put("params.diffusion", format!("{:?}", self.params.diffusion));
        put("deploy.kind", self.deploy.kind().to_string());
        match self.deploy {
            DeploymentModel::Pcp { parent_density, .. } => put("deploy.parent_density", format!("{parent_density:?}")),
            DeploymentModel::SingleCluster { center_region_radius, .. } => {
                put("deploy.center_region_radius", format!("{center_region_radius:?}"))
            }
            DeploymentModel::Ppp { density } => put("deploy.density", format!("{density:?}")),
        }
        if let Some(c) = self.deploy.cluster() {
            put("deploy.mean_daughters", format!("{:?}", c.mean_daughters));
            put("deploy.spread", c.spread.label().to_string());
            match c.spread {
                Spread::Matern { radius } => put("deploy.cluster_radius", format!("{radius:?}")),
                Spread::Thomas { sigma } => put("deploy.sigma", format!("{sigma:?}")),
            }
        }
        put("methods", self.methods.iter().map(|m| m.label()).collect::<Vec<_>>().join(", "));
        put("t", self.t_grid.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(", "));
        put("quad.rel_tol", format!("{:?}", self.quad.rel_tol));
        put("quad.abs_tol", format!("{:?}", self.quad.abs_tol));
        put("quad.max_depth", self.quad.max_depth.to_string());
        put("quad.tail_sigma_count", format!("{:?}", self.quad.tail_sigma_count));
        put("quad.outer_tail_constant", format!("{:?}", self.quad.outer_tail_constant));
        put("quad.clamp_kernel", self.clamp_kernel.to_string());
        put("sim.dt", format!("{:?}", self.sim.dt));
        put("sim.region_radius", format!("{:?}", self.sim.region_radius));
        put("sim.realizations", self.sim.n_realizations.to_string());
        put("sim.seed", self.sim.seed.to_string());
        put("sim.bridge_correction", self.sim.bridge_correction.to_string());
        out
    }

    pub fn query(&self, t: f64) -> DetectionQuery {
        DetectionQuery { params: self.params, deploy: self.deploy, t, quad: self.quad, clamp_kernel: self.clamp_kernel }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    Scenario::from_document(&Document::parse(text)?)
}

/// One scenario per value of `key`, named `<name>@<key>=<value>`.
pub fn sweep(doc: &Document, key: &str, values: &[&str]) -> Result<Vec<Scenario>, ScenarioError> {
    if values.is_empty() {
        return Err(ScenarioError::invalid(key, None, "sweep needs at least one value"));
    }
    let base = Scenario::from_document(doc)?;
    values
        .iter()
        .map(|v| {
            let mut d = doc.clone();
            d.set(key, v)?;
            d.set("name", &format!("{}@{key}={}", base.name, v.trim()))?;
            Scenario::from_document(&d)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Presets

pub const PRESET_IDS: [&str; 10] =
    ["fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b", "fig5", "fig6", "fig7", "fig8"];

/// Mean cluster sizes drawn in the m̄ comparison figure. The caption does not
/// list them.
pub const FIG2_MEAN_DAUGHTERS: [f64; 3] = [1.0, 5.0, 15.0];
/// Parent densities of the density comparison figure (not listed in its
/// caption).
pub const FIG3_PARENT_DENSITIES: [f64; 3] = [5e-7, 1e-6, 2e-6];
/// Cluster radius / spread values of the spread figures.
pub const FIG4_SPREADS: [f64; 7] = [1.0, 2.5, 5.0, 10.0, 15.0, 20.0, 30.0];
pub const FIG5_SPREADS: [f64; 7] = [1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
pub const FIG6_RADII: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];

fn grid(start: f64, step: f64, stop: f64) -> Vec<f64> {
    parse_time_grid(&format!("{start}:{step}:{stop}")).expect("valid preset grid")
}

fn base(name: String, nm_radius: f64, deploy: DeploymentModel, methods: &[MethodKind], t_grid: Vec<f64>) -> Scenario {
    let mut methods = methods.to_vec();
    methods.sort();
    let mut s = Scenario {
        name,
        params: SystemParams::point_target(nm_radius, 100.0),
        deploy,
        methods,
        t_grid,
        quad: QuadratureSpec::default(),
        clamp_kernel: true,
        sim: SimSpec::default(),
    };
    s.sync_horizon();
    s
}

fn spread_of(matern: bool, scale: f64) -> Spread {
    if matern {
        Spread::Matern { radius: scale }
    } else {
        Spread::Thomas { sigma: scale }
    }
}

fn pcp(parent_density: f64, mean_daughters: f64, spread: Spread) -> DeploymentModel {
    DeploymentModel::Pcp { parent_density, cluster: ClusterModel { mean_daughters, spread } }
}

fn tag(spread: Spread) -> &'static str {
    match spread {
        Spread::Matern { .. } => "mcp",
        Spread::Thomas { .. } => "tcp",
    }
}

/// Parameter sets of the built-in figure presets. Figures with several curves give
/// one scenario per curve.
pub fn preset(id: &str) -> Result<Vec<Scenario>, ScenarioError> {
    use MethodKind::*;
    let time = || grid(0.5, 0.5, 10.0);
    let out = match id {
        "fig2a" | "fig2b" => {
            let spread = spread_of(id == "fig2a", 10.0);
            FIG2_MEAN_DAUGHTERS
                .iter()
                .map(|&m| base(format!("{id}_m{m}"), 3.0, pcp(1e-6, m, spread), &[Exact, Approx, Simulation], time()))
                .collect()
        }
        "fig3a" | "fig3b" => {
            let spread = spread_of(id == "fig3a", 10.0);
            FIG3_PARENT_DENSITIES
                .iter()
                .map(|&l| {
                    let methods = [Exact, Approx, UpperBound, LowerBound, Simulation];
                    base(format!("{id}_lambda{l:e}"), 3.0, pcp(l, 5.0, spread), &methods, time())
                })
                .collect()
        }
        "fig4a" | "fig4b" => FIG4_SPREADS
            .iter()
            .map(|&s| {
                let spread = spread_of(id == "fig4a", s);
                let name = format!("{id}_{}{s}", if id == "fig4a" { "r" } else { "sigma" });
                base(name, 4.0, pcp(5e-7, 5.0, spread), &[Exact, Approx, Simulation], vec![5.0])
            })
            .collect(),
        "fig5" => [true, false]
            .iter()
            .flat_map(|&matern| {
                FIG5_SPREADS.iter().map(move |&s| {
                    let spread = spread_of(matern, s);
                    let name = format!("fig5_{}_s{s}", tag(spread));
                    base(name, 3.0, pcp(1e-6, 5.0, spread), &[Exact, Simulation], vec![5.0])
                })
            })
            .collect(),
        "fig6" => [true, false]
            .iter()
            .flat_map(|&matern| {
                FIG6_RADII.iter().map(move |&a| {
                    let spread = spread_of(matern, 10.0);
                    let name = format!("fig6_{}_a{a}", tag(spread));
                    base(name, a, pcp(1e-6, 5.0, spread), &[Static, Simulation], vec![0.0])
                })
            })
            .collect(),
        "fig7" => [true, false]
            .iter()
            .flat_map(|&matern| {
                [5.0, 15.0].into_iter().map(move |m| {
                    let cluster = ClusterModel { mean_daughters: m, spread: spread_of(matern, 10.0) };
                    let deploy = DeploymentModel::SingleCluster { center_region_radius: 200.0, cluster };
                    let name = format!("fig7_{}_m{m}", tag(cluster.spread));
                    base(name, 3.0, deploy, &[Exact, Approx, Simulation], grid(1.0, 1.0, 10.0))
                })
            })
            .collect(),
        "fig8" => {
            let mut out = Vec::new();
            for matern in [true, false] {
                let spread = spread_of(matern, 10.0);
                let methods = [Exact, PppEquiv, Simulation];
                out.push(base(
                    format!("fig8_{}", tag(spread)),
                    3.0,
                    pcp(1e-5, 5.0, spread),
                    &methods,
                    grid(1.0, 1.0, 10.0),
                ));
            }
            for matern in [true, false] {
                let cluster = ClusterModel { mean_daughters: 5.0, spread: spread_of(matern, 10.0) };
                let deploy = DeploymentModel::SingleCluster { center_region_radius: 200.0, cluster };
                let name = format!("fig8_single_{}", tag(cluster.spread));
                out.push(base(name, 3.0, deploy, &[Exact, Simulation], grid(1.0, 1.0, 10.0)));
            }
            out
        }
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    };
    Ok(out)
}

// ---------------------------------------------------------------------------
// Running

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Fill the `wall_ms` column. Off by default so output is reproducible
    /// byte for byte.
    pub timing: bool,
}

/// A row whose computation failed; the row itself is emitted with an empty
/// value.
#[derive(Debug, Clone, PartialEq)]
pub struct RowFailure {
    pub scenario: String,
    pub method: MethodKind,
    pub t: f64,
    pub message: String,
}

impl fmt::Display for RowFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} t={}: {}", self.scenario, self.method, self.t, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOutcome {
    pub rows: Vec<Row>,
    pub failures: Vec<RowFailure>,
}

impl RunOutcome {
    pub fn extend(&mut self, other: RunOutcome) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }
}

fn analytic_value(s: &Scenario, method: MethodKind, t: f64) -> Result<(f64, f64), String> {
    let q = s.query(t);
    let ppp = |factor: fn(f64) -> f64| match s.deploy {
        DeploymentModel::Pcp { parent_density, cluster } => {
            Ok((analytic::detect_prob_ppp(parent_density * factor(cluster.mean_daughters), &s.params, t), 0.0))
        }
        DeploymentModel::Ppp { density } if method == MethodKind::PppEquiv => {
            Ok((analytic::detect_prob_ppp(density, &s.params, t), 0.0))
        }
        other => Err(format!("{method} is not defined for a {} deployment", other.kind())),
    };
    let m = match method {
        MethodKind::Exact => Method::Exact,
        MethodKind::Approx => Method::Approx,
        MethodKind::UpperBound => Method::UpperBound,
        MethodKind::LowerBound => Method::LowerBound,
        MethodKind::Static => Method::Static,
        MethodKind::PppEquiv => return ppp(|m| m),
        MethodKind::PppNonempty => return ppp(|m| -(-m).exp_m1()),
        MethodKind::Simulation => unreachable!("simulation rows are produced by the simulator"),
    };
    analytic::evaluate(&q, m).map(|r| (r.p, r.est_error)).map_err(|e: AnalyticError| e.to_string())
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Evaluates every `(method, t)` pair of the scenario. Rows come out in
/// method order, then time order, independently of how the work was
/// scheduled. A failing row is recorded and the run continues.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> RunOutcome {
    let row = |method: MethodKind, t: f64| Row {
        scenario: s.name.clone(),
        method: method.label().to_string(),
        t_seconds: t,
        value: None,
        err_low: None,
        err_high: None,
        n_samples: None,
        wall_ms: None,
    };
    let mut outcome = RunOutcome::default();
    for &method in &s.methods {
        let computed: Vec<(Row, Option<RowFailure>)> = if method == MethodKind::Simulation {
            simulation_rows(s, opts, &row)
        } else {
            s.t_grid
                .par_iter()
                .map(|&t| {
                    let start = Instant::now();
                    let result = analytic_value(s, method, t);
                    let mut r = row(method, t);
                    r.wall_ms = opts.timing.then(|| elapsed_ms(start));
                    match result {
                        Ok((p, err)) => {
                            r.value = Some(p);
                            r.err_low = Some((p - err).max(0.0));
                            r.err_high = Some((p + err).min(1.0));
                            (r, None)
                        }
                        Err(message) => {
                            let failure = RowFailure { scenario: s.name.clone(), method, t, message };
                            (r, Some(failure))
                        }
                    }
                })
                .collect()
        };
        for (r, f) in computed {
            outcome.rows.push(r);
            outcome.failures.extend(f);
        }
    }
    outcome
}

fn simulation_rows(
    s: &Scenario,
    opts: &RunOptions,
    row: &dyn Fn(MethodKind, f64) -> Row,
) -> Vec<(Row, Option<RowFailure>)> {
    let method = MethodKind::Simulation;
    let start = Instant::now();
    let estimates = if s.sim.t_max == 0.0 {
        static_detection_experiment(&s.params, &s.deploy, s.sim.n_realizations, s.sim.seed).map(|e| vec![e])
    } else {
        run_detection_experiment(&s.params, &s.deploy, &s.sim)
            .map(|ex| s.t_grid.iter().map(|&t| ex.estimate_at(t)).collect())
    };
    let wall = opts.timing.then(|| elapsed_ms(start));
    match estimates {
        Ok(estimates) => s
            .t_grid
            .iter()
            .zip(estimates)
            .map(|(&t, e)| {
                let mut r = row(method, t);
                r.value = Some(e.p_hat);
                r.err_low = Some(e.ci_low);
                r.err_high = Some(e.ci_high);
                r.n_samples = Some(e.n);
                r.wall_ms = wall;
                (r, None)
            })
            .collect(),
        Err(e) => s
            .t_grid
            .iter()
            .map(|&t| {
                let failure = RowFailure { scenario: s.name.clone(), method, t, message: e.to_string() };
                (row(method, t), Some(failure))
            })
            .collect(),
    }
}
