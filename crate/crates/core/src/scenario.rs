//! Config-driven experiments, their result records and parameter sweeps.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::adiabatic::{self, GeometricPhase, Schedule, TimeProfile};
use crate::connection::{self, Parameter};
use crate::error::{Error, Result};
use crate::flux::{self, GaussianFlux};
use crate::fock::{self, FockBasis, ParameterPoint};
use crate::holonomy::{self, ParameterPath, Plane};
use crate::linalg::{self, Mat};
use crate::operators::{self, HamiltonianKind};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Connections,
    AbelianLoop,
    NonabelianLoop,
    FluxAb,
    Adiabatic,
    SqueezedConnections,
    ValidateAll,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Connections => "connections",
            ScenarioKind::AbelianLoop => "abelian-loop",
            ScenarioKind::NonabelianLoop => "nonabelian-loop",
            ScenarioKind::FluxAb => "flux-ab",
            ScenarioKind::Adiabatic => "adiabatic",
            ScenarioKind::SqueezedConnections => "squeezed-connections",
            ScenarioKind::ValidateAll => "validate-all",
        }
    }

    /// Table columns for CSV output, looked up in `results` then `diagnostics`.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::Connections | ScenarioKind::SqueezedConnections => {
                &["max_window_error", "max_anti_hermitian_defect"]
            }
            ScenarioKind::AbelianLoop => &["gamma", "richardson_estimate"],
            ScenarioKind::NonabelianLoop => &[
                "min_eigenphase",
                "max_eigenphase",
                "unitarity_defect",
                "richardson_estimate",
            ],
            ScenarioKind::FluxAb => &["gamma", "closed_form", "abs_gamma"],
            ScenarioKind::Adiabatic => &["geometric_phase", "population_drift", "norm_drift", "return_fidelity"],
            ScenarioKind::ValidateAll => &["passed", "failed"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

fn default_n_max() -> usize {
    fock::DEFAULT_N_MAX
}
fn default_m_max() -> usize {
    fock::DEFAULT_M_MAX
}
fn default_circle_segments() -> usize {
    10_000
}
fn default_flux_segments() -> usize {
    1 << 17
}
fn default_kappa() -> f64 {
    flux::DEFAULT_KAPPA
}
fn default_fd_step() -> f64 {
    connection::DEFAULT_FD_STEP
}
fn default_profile() -> TimeProfile {
    TimeProfile::Smoothstep
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            n_max: default_n_max(),
            m_max: default_m_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathConfig {
    /// Circle in the `(X₁, X₂)` plane.
    Circle {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
        #[serde(default = "default_circle_segments")]
        segments: usize,
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "yes")]
        ccw: bool,
    },
    /// Rectangle in the `(X₂, ln B)` plane at fixed `X₁`.
    Rectangle {
        #[serde(default)]
        x1: f64,
        x2: [f64; 2],
        ln_b: [f64; 2],
    },
    /// Closed polygon through the listed points.
    Polygon { points: Vec<ParameterPoint> },
}

impl PathConfig {
    pub fn build(&self) -> Result<ParameterPath> {
        match self {
            PathConfig::Circle {
                center,
                radius,
                segments,
                b,
                ccw,
            } => ParameterPath::circle((center[0], center[1]), *radius, *segments, *b, *ccw),
            PathConfig::Rectangle { x1, x2, ln_b } => {
                ParameterPath::rectangle_x2_ln_b(*x1, (x2[0], x2[1]), (ln_b[0], ln_b[1]))
            }
            PathConfig::Polygon { points } => ParameterPath::new(points.clone(), true),
        }
    }
}

/// Tube of flux `phi0` and width `delta` driven around a circle of `radius`
/// about the origin at field `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxConfig {
    pub phi0: f64,
    pub delta: f64,
    pub radius: f64,
    pub b: f64,
    #[serde(default = "default_flux_segments")]
    pub segments: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub total_time: f64,
    #[serde(default = "default_profile")]
    pub profile: TimeProfile,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Expected phase; selects the `2π` branch of the reported value.
    #[serde(default)]
    pub prediction: Option<f64>,
    /// Also evolve every column of the degenerate frame.
    #[serde(default)]
    pub frame: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub connection: f64,
    pub holonomy: f64,
    pub stokes: f64,
    pub eigenvalue: f64,
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            connection: 1e-6,
            holonomy: 1e-6,
            stokes: 1e-8,
            eigenvalue: 1e-8,
            identity: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Path-ordered product segments for `nonabelian-loop`.
    #[serde(default)]
    pub segments: Option<usize>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Overrides `schedule.dt`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            segments: None,
            fd_step: default_fd_step(),
            dt: None,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub basis: BasisConfig,
    /// Landau level `n`.
    #[serde(default)]
    pub level: usize,
    #[serde(default)]
    pub point: Option<ParameterPoint>,
    #[serde(default)]
    pub path: Option<PathConfig>,
    #[serde(default)]
    pub flux: Option<FluxConfig>,
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_value(value: &Value) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_value(value.clone()).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_required()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(&parse_json(text)?)
    }

    fn check_required(&self) -> Result<()> {
        let need = |present: bool, field: &str| {
            if present {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "scenario {} requires field `{field}`",
                    self.scenario.as_str()
                )))
            }
        };
        match self.scenario {
            ScenarioKind::Connections | ScenarioKind::SqueezedConnections => need(self.point.is_some(), "point"),
            ScenarioKind::AbelianLoop | ScenarioKind::NonabelianLoop => need(self.path.is_some(), "path"),
            ScenarioKind::FluxAb => need(self.flux.is_some(), "flux"),
            ScenarioKind::Adiabatic => {
                need(self.path.is_some(), "path")?;
                need(self.schedule.is_some(), "schedule")
            }
            ScenarioKind::ValidateAll => Ok(()),
        }
    }

    fn basis(&self) -> Result<FockBasis> {
        FockBasis::new(self.basis.n_max, self.basis.m_max)
    }
}

pub fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Versions {
    pub artifact: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub scenario: ScenarioKind,
    pub inputs: Value,
    pub results: Value,
    pub diagnostics: Value,
    pub versions: Versions,
}

impl ResultRecord {
    pub fn to_json(&self) -> String {
        to_json_string(&serde_json::to_value(self).expect("record is plain data"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Scalar for a table column, from `results` or else `diagnostics`.
    pub fn column(&self, name: &str) -> Result<f64> {
        self.results
            .get(name)
            .or_else(|| self.diagnostics.get(name))
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Config(format!("record has no numeric column {name}")))
    }

    pub fn to_table(&self) -> Result<Table> {
        let columns = self.scenario.columns();
        Ok(Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![columns.iter().map(|c| self.column(c)).collect::<Result<_>>()?],
        })
    }
}

/// SHA-256 (hex) of the compact JSON form of `config`, object keys sorted.
pub fn config_hash(config: &Value) -> String {
    let canonical = serde_json::to_string(config).expect("value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// 17 significant digits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Pretty JSON with sorted keys and every float at 17 significant digits.
pub fn to_json_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(out: &mut String, value: &Value, indent: usize) {
    let pad = |out: &mut String, k: usize| out.extend(std::iter::repeat_n(' ', k));
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_value(out, item, indent);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                pad(out, indent + 2);
                write_value(out, item, indent + 2);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (k, key) in keys.iter().enumerate() {
                pad(out, indent + 2);
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push_str(": ");
                write_value(out, &map[key.as_str()], indent + 2);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

/// `{rows, cols, re, im}`, row-major.
pub fn matrix_json(m: &Mat) -> Value {
    let (rows, cols) = m.shape();
    let mut re = Vec::with_capacity(rows * cols);
    let mut im = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            re.push(m[(r, c)].re);
            im.push(m[(r, c)].im);
        }
    }
    json!({ "rows": rows, "cols": cols, "re": re, "im": im })
}

/// Inverse of [`matrix_json`].
pub fn matrix_from_json(v: &Value) -> Result<Mat> {
    let bad = || Error::Config("malformed matrix record".into());
    let rows = v.get("rows").and_then(Value::as_u64).ok_or_else(bad)? as usize;
    let cols = v.get("cols").and_then(Value::as_u64).ok_or_else(bad)? as usize;
    let nums = |key: &str| -> Result<Vec<f64>> {
        v.get(key)
            .and_then(Value::as_array)
            .ok_or_else(bad)?
            .iter()
            .map(|x| x.as_f64().ok_or_else(bad))
            .collect()
    };
    let (re, im) = (nums("re")?, nums("im")?);
    if re.len() != rows * cols || im.len() != rows * cols {
        return Err(bad());
    }
    Ok(Mat::from_fn(rows, cols, |r, c| linalg::C64::new(re[r * cols + c], im[r * cols + c])))
}

/// Parses `input` as a [`ScenarioConfig`] and runs it; `inputs` echoes the
/// document as given.
pub fn run_value(input: &Value) -> Result<ResultRecord> {
    let cfg = ScenarioConfig::from_value(input)?;
    let (results, diagnostics) = execute(&cfg)?;
    Ok(ResultRecord {
        scenario: cfg.scenario,
        inputs: input.clone(),
        results,
        diagnostics,
        versions: Versions {
            artifact: ARTIFACT_VERSION.to_string(),
            config_hash: config_hash(input),
        },
    })
}

pub fn run(config: &ScenarioConfig) -> Result<ResultRecord> {
    run_value(&serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?)
}

fn execute(cfg: &ScenarioConfig) -> Result<(Value, Value)> {
    match cfg.scenario {
        ScenarioKind::Connections => connections(cfg, &[Parameter::X1, Parameter::X2, Parameter::B]),
        ScenarioKind::SqueezedConnections => connections(cfg, &Parameter::ALL),
        ScenarioKind::AbelianLoop => abelian_loop(cfg),
        ScenarioKind::NonabelianLoop => nonabelian_loop(cfg),
        ScenarioKind::FluxAb => flux_ab(cfg),
        ScenarioKind::Adiabatic => adiabatic_run(cfg),
        ScenarioKind::ValidateAll => validate_all(cfg),
    }
}

fn connections(cfg: &ScenarioConfig, params: &[Parameter]) -> Result<(Value, Value)> {
    let bs = cfg.basis()?;
    let point = cfg.point.expect("checked");
    point.validate()?;
    let h = cfg.numerics.fd_step;
    connection::check_step(h)?;
    let window = connection::oracle_window(&bs, &point, h)?;
    let entries: Vec<(Value, f64, f64)> = params
        .par_iter()
        .map(|&parameter| {
            let analytic = connection::connection_analytic(&bs, parameter, &point)?;
            let numeric = connection::connection_numeric(&bs, parameter, &point, h)?;
            let block = connection::degenerate_block(&analytic, &bs, cfg.level)?;
            let err = connection::window_error(&analytic, &numeric, &window);
            let defect = analytic.full.anti_hermiticity_defect();
            let v = json!({
                "parameter": parameter.as_str(),
                "block": matrix_json(&block.matrix),
                "window_error": err,
                "anti_hermitian_defect": defect,
            });
            Ok((v, err, defect))
        })
        .collect::<Result<_>>()?;
    let max_err = entries.iter().map(|e| e.1).fold(0.0, f64::max);
    let max_defect = entries.iter().map(|e| e.2).fold(0.0, f64::max);
    let window_n = window.iter().map(|&k| bs.unflat(k).0).max().unwrap_or(0);
    Ok((
        json!({
            "level": cfg.level,
            "connections": entries.into_iter().map(|e| e.0).collect::<Vec<_>>(),
            "max_window_error": max_err,
            "max_anti_hermitian_defect": max_defect,
        }),
        json!({
            "fd_step": h,
            "window_states": window.len(),
            "window_n_max": window_n,
        }),
    ))
}

fn abelian_loop(cfg: &ScenarioConfig) -> Result<(Value, Value)> {
    let path = cfg.path.as_ref().expect("checked").build()?;
    let res = holonomy::abelian_phase(&path, cfg.level)?;
    let area = holonomy::signed_area(&path, Plane::X1X2)?;
    Ok((
        json!({
            "gamma": res.abelian_phase,
            "signed_area": area,
            "segments": res.segments_used,
        }),
        json!({ "richardson_estimate": res.richardson_estimate }),
    ))
}

fn nonabelian_loop(cfg: &ScenarioConfig) -> Result<(Value, Value)> {
    let bs = cfg.basis()?;
    let path = cfg.path.as_ref().expect("checked").build()?;
    let k = cfg.numerics.segments.unwrap_or(100_000);
    let res = holonomy::nonabelian_holonomy(&bs, &path, cfg.level, k)?;
    let u = res.unitary.as_ref().expect("holonomy carries a unitary");
    let phases = res.eigenphases.clone().unwrap_or_default();
    let closed = holonomy::commuting_closed_form(&bs, &path, cfg.level)
        .ok()
        .and_then(|cf| cf.unitary)
        .map(|cf| linalg::max_abs_diff(&cf.matrix, &u.matrix));
    Ok((
        json!({
            "unitary": matrix_json(&u.matrix),
            "eigenphases": phases,
            "min_eigenphase": phases.first().copied().unwrap_or(0.0),
            "max_eigenphase": phases.last().copied().unwrap_or(0.0),
        }),
        json!({
            "richardson_estimate": res.richardson_estimate,
            "unitarity_defect": u.unitarity_defect(),
            "segments_used": res.segments_used,
            "closed_form_deviation": closed,
        }),
    ))
}

fn flux_ab(cfg: &ScenarioConfig) -> Result<(Value, Value)> {
    let fc = cfg.flux.expect("checked");
    let tube = GaussianFlux::new(fc.radius, 0.0, fc.phi0, fc.delta)?;
    let gamma = holonomy::flux_loop_phase(&tube, fc.b, fc.radius, fc.segments)?;
    let closed = holonomy::flux_loop_phase_closed_form(fc.phi0, fc.delta, fc.b, fc.radius);
    let relative = if closed != 0.0 {
        (gamma.abs() - closed.abs()).abs() / closed.abs()
    } else {
        gamma.abs()
    };
    let validity = flux::validity_with(&tube, fc.b, fc.kappa);
    Ok((
        json!({
            "gamma": gamma,
            "closed_form": closed,
            "abs_gamma": gamma.abs(),
        }),
        json!({
            "relative_error": relative,
            "segments": fc.segments,
            "validity": serde_json::to_value(validity).expect("plain data"),
        }),
    ))
}

fn adiabatic_run(cfg: &ScenarioConfig) -> Result<(Value, Value)> {
    let bs = cfg.basis()?;
    let path = cfg.path.as_ref().expect("checked").build()?;
    let sc = cfg.schedule.expect("checked");
    let mut schedule = Schedule::new(path.clone(), sc.total_time, sc.profile, cfg.level)?;
    if let Some(dt) = cfg.numerics.dt.or(sc.dt) {
        schedule = schedule.with_dt(dt)?;
    }
    let start = schedule.point_at(0.0);
    let init = operators::eigenstate(&bs, &start, cfg.level, 0)?;
    let rec = adiabatic::propagate(&bs, &schedule, &init)?;
    let phase = if schedule.is_closed_loop() {
        adiabatic::extract_geometric_phase(&rec, &init, sc.prediction)?
    } else {
        GeometricPhase {
            value: rec.geometric_phase,
            branch: 0,
            fidelity: rec.return_fidelity,
        }
    };
    let mut results = json!({
        "geometric_phase": phase.value,
        "branch": phase.branch,
        "total_phase": rec.total_phase,
        "dynamical_phase": rec.dynamical_phase,
    });
    let mut diagnostics = json!({
        "population_drift": rec.population_drift,
        "norm_drift": rec.norm_drift,
        "energy_deviation": rec.energy_deviation,
        "steps": rec.steps,
        "dt": rec.dt,
        "return_fidelity": rec.return_fidelity,
    });
    if sc.frame {
        let fh = adiabatic::frame_holonomy(&bs, &schedule)?;
        let fid = holonomy::commuting_closed_form(&bs, &path, cfg.level)
            .ok()
            .and_then(|cf| cf.unitary)
            .map(|cf| adiabatic::fidelity(&cf.matrix, &fh.unitary.matrix));
        results["frame_unitary"] = matrix_json(&fh.unitary.matrix);
        diagnostics["frame_norm_drift"] = json!(fh.norm_drift);
        diagnostics["frame_population_drift"] = json!(fh.population_drift);
        diagnostics["frame_fidelity"] = json!(fid);
    }
    Ok((results, diagnostics))
}

struct Check {
    name: &'static str,
    tolerance: f64,
    outcome: Result<f64>,
}

impl Check {
    fn to_value(&self) -> Value {
        match &self.outcome {
            Ok(v) => json!({
                "name": self.name,
                "value": v,
                "tolerance": self.tolerance,
                "passed": *v <= self.tolerance,
            }),
            Err(e) => json!({
                "name": self.name,
                "value": null,
                "tolerance": self.tolerance,
                "passed": false,
                "error": e.to_string(),
            }),
        }
    }

    fn passed(&self) -> bool {
        matches!(self.outcome, Ok(v) if v <= self.tolerance)
    }
}

fn check_commutators() -> Result<f64> {
    let bs = FockBasis::new(20, 3)?;
    let (b, a) = (fock::ladder_b(&bs), fock::ladder_a(&bs));
    let d1 = fock::commutator_defect(&b, &b.adjoint(), &bs)?;
    let d2 = fock::commutator_defect(&a, &a.adjoint(), &bs)?;
    let d3 = fock::commutator_norm(&a, &b)?;
    Ok(d1.max(d2).max(d3))
}

fn squeezed_point() -> Result<ParameterPoint> {
    ParameterPoint::new(0.3, -0.2, 1.3, 0.2, 0.7)
}

fn check_anti_hermitian() -> Result<f64> {
    let bs = FockBasis::new(30, 2)?;
    let p = squeezed_point()?;
    Parameter::ALL.iter().try_fold(0.0f64, |acc, &param| {
        Ok(acc.max(connection::connection_analytic(&bs, param, &p)?.full.anti_hermiticity_defect()))
    })
}

fn check_finite_difference() -> Result<f64> {
    let bs = FockBasis::new(30, 1)?;
    let p = ParameterPoint::coherent(0.3, -0.2, 1.3)?;
    let h = connection::DEFAULT_FD_STEP;
    let window = connection::oracle_window(&bs, &p, h)?;
    [Parameter::X1, Parameter::X2, Parameter::B].iter().try_fold(0.0f64, |acc, &param| {
        let a = connection::connection_analytic(&bs, param, &p)?;
        let n = connection::connection_numeric(&bs, param, &p, h)?;
        Ok(acc.max(connection::window_error(&a, &n, &window)))
    })
}

fn check_abelian_circle() -> Result<f64> {
    let rho = 0.5;
    let path = ParameterPath::circle((0.0, 0.0), rho, 10_000, 1.0, true)?;
    let gamma = holonomy::abelian_phase(&path, 0)?.abelian_phase.unwrap_or_default();
    let expected = -2.0 * PI * rho * rho;
    Ok(((gamma - expected) / expected).abs())
}

fn check_commuting_holonomy() -> Result<f64> {
    let bs = FockBasis::new(12, 2)?;
    let path = ParameterPath::rectangle_x2_ln_b(0.0, (0.0, 0.5), (0.0, 0.5))?;
    let numeric = holonomy::nonabelian_holonomy(&bs, &path, 0, 20_000)?;
    let closed = holonomy::commuting_closed_form(&bs, &path, 0)?;
    match (numeric.unitary, closed.unitary) {
        (Some(u), Some(v)) => Ok(linalg::max_abs_diff(&u.matrix, &v.matrix)),
        _ => Err(Error::InvalidPath("holonomy without unitary".into())),
    }
}

fn check_stokes() -> Result<f64> {
    let tube = GaussianFlux::new(0.0, 0.0, 1.0, 2.0)?;
    let radius = 2.0;
    let circ = flux::circulation(&tube, radius, 4096)?;
    let enclosed = flux::enclosed_flux(&tube, radius);
    Ok(((circ - enclosed) / enclosed).abs())
}

fn check_landau_levels() -> Result<f64> {
    let bs = FockBasis::new(30, 2)?;
    let p = ParameterPoint::coherent(0.4, -0.3, 1.5)?;
    let h = operators::hamiltonian(&bs, HamiltonianKind::CoherentPi, &p)?;
    let vals = linalg::hermitian_eigenvalues(&h.matrix.matrix);
    Ok(vals[..=bs.m_max()]
        .iter()
        .map(|e| (e - 0.5 * p.b).abs())
        .fold(0.0, f64::max))
}

fn check_forms() -> Result<f64> {
    let bs = FockBasis::new(60, 1)?;
    let p = squeezed_point()?;
    let hf = operators::hamiltonian(&bs, HamiltonianKind::SqueezedFock, &p)?;
    let hp = operators::hamiltonian(&bs, HamiltonianKind::SqueezedPi, &p)?;
    let u = operators::displacement(&bs, p.alpha())?.matrix * operators::squeeze(&bs, p.beta())?.matrix;
    let w = operators::occupied_window(&u.adjoint(), &bs).ok_or(Error::GuardBand {
        weight: 1.0,
        above: bs.n_max(),
        limit: operators::OCCUPANCY_TOL,
    })?;
    let idx = bs.window(w, bs.m_max());
    Ok(linalg::max_abs_diff(&hf.matrix.restrict(&idx), &hp.matrix.restrict(&idx)))
}

fn check_stationary_phase() -> Result<f64> {
    let bs = FockBasis::new(10, 1)?;
    let p = ParameterPoint::coherent(0.0, 0.0, 1.0)?;
    let schedule = Schedule::stationary(p, 10.0, 0)?;
    let rec = adiabatic::propagate(&bs, &schedule, &bs.basis_state(0, 0))?;
    Ok((rec.total_phase + 5.0).abs().max(rec.geometric_phase.abs()))
}

fn check_field_guard() -> Result<f64> {
    let tube = GaussianFlux::new(3.0, 0.0, 1.0, 2.0)?;
    match holonomy::flux_loop_phase(&tube, 1e-6, 3.0, 64) {
        Err(Error::FieldGuard(_)) => Ok(0.0),
        _ => Ok(1.0),
    }
}

fn validate_all(cfg: &ScenarioConfig) -> Result<(Value, Value)> {
    let tol = cfg.numerics.tolerances;
    let checks = [
        Check {
            name: "canonical-commutators",
            tolerance: tol.identity,
            outcome: check_commutators(),
        },
        Check {
            name: "connection-anti-hermitian",
            tolerance: tol.identity,
            outcome: check_anti_hermitian(),
        },
        Check {
            name: "connection-finite-difference",
            tolerance: tol.connection,
            outcome: check_finite_difference(),
        },
        Check {
            name: "abelian-circle",
            tolerance: tol.holonomy,
            outcome: check_abelian_circle(),
        },
        Check {
            name: "commuting-holonomy",
            tolerance: tol.holonomy,
            outcome: check_commuting_holonomy(),
        },
        Check {
            name: "flux-stokes",
            tolerance: tol.stokes,
            outcome: check_stokes(),
        },
        Check {
            name: "landau-levels",
            tolerance: tol.eigenvalue,
            outcome: check_landau_levels(),
        },
        Check {
            name: "hamiltonian-forms",
            tolerance: tol.identity,
            outcome: check_forms(),
        },
        Check {
            name: "stationary-phase",
            tolerance: tol.eigenvalue,
            outcome: check_stationary_phase(),
        },
        Check {
            name: "field-guard",
            tolerance: 0.0,
            outcome: check_field_guard(),
        },
    ];
    let passed = checks.iter().filter(|c| c.passed()).count();
    Ok((
        json!({
            "checks": checks.iter().map(Check::to_value).collect::<Vec<_>>(),
            "passed": passed,
            "failed": checks.len() - passed,
        }),
        json!({ "tolerances": serde_json::to_value(tol).expect("plain data") }),
    ))
}

/// Rows of scalar columns; the first column of a sweep is the swept axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format_f64(*v))).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        to_json_string(&json!({ "columns": self.columns, "rows": self.rows }))
    }
}

fn leaf_mut<'a>(doc: &'a mut Value, axis: &str) -> Result<&'a mut Value> {
    let mut cur = doc;
    for key in axis.split('.') {
        cur = match cur {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(move |i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("axis {axis:?} is not present in the config")))?;
    }
    Ok(cur)
}

fn set_leaf(doc: &mut Value, axis: &str, value: f64) -> Result<()> {
    let leaf = leaf_mut(doc, axis)?;
    if !leaf.is_number() {
        return Err(Error::Config(format!("axis {axis:?} is not a numeric leaf")));
    }
    // integral values stay integers so that count-valued fields accept them
    let new = if value.fract() == 0.0 && value.abs() < 2f64.powi(53) {
        if value >= 0.0 {
            Number::from(value as u64)
        } else {
            Number::from(value as i64)
        }
    } else {
        Number::from_f64(value).ok_or_else(|| Error::Config(format!("non-finite sweep value {value}")))?
    };
    *leaf = Value::Number(new);
    Ok(())
}

/// Runs `config` once per value of the dotted numeric leaf `axis`; rows keep
/// the order of `values`.
pub fn sweep(config: &Value, axis: &str, values: &[f64]) -> Result<Table> {
    let cfg = ScenarioConfig::from_value(config)?;
    let mut probe = config.clone();
    if !leaf_mut(&mut probe, axis)?.is_number() {
        return Err(Error::Config(format!("axis {axis:?} is not a numeric leaf")));
    }
    let columns = std::iter::once(axis.to_string())
        .chain(cfg.scenario.columns().iter().map(|c| c.to_string()))
        .collect();
    let rows = values
        .par_iter()
        .map(|&v| {
            let mut doc = config.clone();
            set_leaf(&mut doc, axis, v)?;
            let rec = run_value(&doc)?;
            let mut row = vec![v];
            for c in rec.scenario.columns() {
                row.push(rec.column(c)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { columns, rows })
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical_guard() {
        3
    } else {
        2
    }
}

fn error_detail(e: &Error) -> Value {
    match e {
        Error::TruncationRisk { what, required, actual } => {
            json!({ "what": what, "required": required, "actual": actual })
        }
        Error::GuardBand { weight, above, limit } => json!({ "weight": weight, "above": above, "limit": limit }),
        Error::FieldGuard(b) => json!({ "b": b, "limit": connection::B_GUARD }),
        Error::FiniteDifferenceStep { step, reason } => json!({ "step": step, "reason": reason }),
        Error::NormDrift { drift, limit, time } => json!({ "drift": drift, "limit": limit, "time": time }),
        Error::LoopFidelity(f) => json!({ "fidelity": f }),
        Error::DimensionMismatch { left, right } => json!({ "left": left, "right": right }),
        _ => Value::Null,
    }
}

/// `{"error": {kind, message, exit_code, detail}}`.
pub fn error_record(e: &Error) -> Value {
    let mut inner = Map::new();
    inner.insert("kind".into(), json!(e.kind()));
    inner.insert("message".into(), json!(e.to_string()));
    inner.insert("exit_code".into(), json!(exit_code(e)));
    inner.insert("detail".into(), error_detail(e));
    json!({ "error": inner })
}
