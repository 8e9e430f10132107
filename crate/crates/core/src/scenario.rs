//! Scenario configuration, the built-in theory registry and task dispatch.
//!
//! A scenario is one JSON document (unknown keys are rejected). Each task writes
//! CSV artifacts and a `summary.json` into the output directory.

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{exterior_derivative, exterior_derivative_numeric, ChartSpec, Form, DEFAULT_STEP};
use crate::dedonder_weyl::{build_hamiltonian_nvector, defining_relation_residual, differential_of_h, Gauge};
use crate::error::{Error, Module, Result};
use crate::expr::{parse_potential, Scope};
use crate::field_solver::{
    euler_lagrange_oracle, evolve, plane_wave, standing_wave, FieldState, GridSpec, Trajectory,
};
use crate::hamilton_jacobi::{
    check_theorem2_conditions, foliation_integrability_check, geometric_form_check, hj_residual,
    random_section, section_from_potential, Domain, EFn, HJPotential, PhaseSection,
};
use crate::phase_space::{nondegeneracy_check_form, omega_form, theta_field, volume_form, ChartPoint};
use crate::theory::{Potential, ScalarTheory, Signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    AlgebraCheck,
    VerifyXh,
    Integrate,
    HjCheck,
    FoliationCheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::AlgebraCheck => "algebra-check",
            Task::VerifyXh => "verify-xh",
            Task::Integrate => "integrate",
            Task::HjCheck => "hj-check",
            Task::FoliationCheck => "foliation-check",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown task `{s}`")))
    }
}

/// Theory by registry name with parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    /// `oscillator`, `free-scalar`, `sine-gordon` or `custom`.
    pub name: String,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub fields: Option<usize>,
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    /// Potential expression for `custom`.
    #[serde(default)]
    pub potential: Option<String>,
    /// `"+-"` or `"-+"`.
    #[serde(default)]
    pub signature: Option<String>,
}

impl TheoryConfig {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            n: None,
            fields: None,
            mass: None,
            omega: None,
            potential: None,
            signature: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<ScalarTheory> {
        let signature = match &self.signature {
            None => Signature::MostlyMinus,
            Some(s) => Signature::parse(s)
                .ok_or_else(|| Error::Config(format!("signature must be \"+-\" or \"-+\", got {s:?}")))?,
        };
        let reject = |what: &str, present: bool| {
            if present {
                Err(Error::Config(format!("theory `{}` does not take `{what}`", self.name)))
            } else {
                Ok(())
            }
        };
        match self.name.as_str() {
            "oscillator" => {
                reject("mass", self.mass.is_some())?;
                reject("potential", self.potential.is_some())?;
                if self.n.unwrap_or(1) != 1 {
                    return Err(Error::Config("the oscillator is a mechanics theory (n = 1)".into()));
                }
                let fields = self.fields.unwrap_or(1);
                let omega = self.omega.unwrap_or(1.0);
                ScalarTheory::new("oscillator", 1, fields, signature, Potential::Quadratic { mass: omega })
            }
            "free-scalar" => {
                reject("omega", self.omega.is_some())?;
                reject("potential", self.potential.is_some())?;
                ScalarTheory::new(
                    "free-scalar",
                    self.n.unwrap_or(2),
                    self.fields.unwrap_or(1),
                    signature,
                    Potential::Quadratic {
                        mass: self.mass.unwrap_or(1.0),
                    },
                )
            }
            "sine-gordon" => {
                reject("omega", self.omega.is_some())?;
                reject("mass", self.mass.is_some())?;
                reject("potential", self.potential.is_some())?;
                ScalarTheory::new(
                    "sine-gordon",
                    self.n.unwrap_or(2),
                    self.fields.unwrap_or(1),
                    signature,
                    Potential::SineGordon,
                )
            }
            "custom" => {
                reject("omega", self.omega.is_some())?;
                reject("mass", self.mass.is_some())?;
                let src = self
                    .potential
                    .as_deref()
                    .ok_or_else(|| Error::Config("theory `custom` needs `potential`".into()))?;
                let (n, fields) = (self.n.unwrap_or(2), self.fields.unwrap_or(1));
                let expr = parse_potential(src, Scope { n, fields })?;
                ScalarTheory::new("custom", n, fields, signature, Potential::from_expr(expr))
            }
            other => Err(Error::Config(format!(
                "unknown theory `{other}` (expected oscillator, free-scalar, sine-gordon or custom)"
            ))),
        }
        .map_err(|e| match e {
            e @ (Error::Config(_) | Error::Parse(_)) => e,
            e => Error::Config(e.to_string()),
        })
    }
}

fn default_cfl() -> Option<f64> {
    Some(1.0)
}

fn default_one() -> usize {
    1
}

fn default_blowup() -> f64 {
    1e12
}

/// Grid fields. Give either `dt` or `dt_ratio` (`dt = dt_ratio · dx`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    /// Periodic length; `dx = length / nx`. Defaults to 2π.
    #[serde(default)]
    pub length: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub dt_ratio: Option<f64>,
    pub t_final: f64,
    /// `null` disables the guard.
    #[serde(default = "default_cfl")]
    pub cfl: Option<f64>,
    #[serde(default = "default_one")]
    pub sample_every: usize,
    #[serde(default = "default_blowup")]
    pub blowup_limit: f64,
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        let length = self.length.unwrap_or(2.0 * std::f64::consts::PI);
        let dx = if self.nx == 1 { 1.0 } else { length / self.nx as f64 };
        let dt = match (self.dt, self.dt_ratio) {
            (Some(dt), None) => dt,
            (None, Some(r)) => r * dx,
            (None, None) => return Err(Error::Config("grid needs `dt` or `dt_ratio`".into())),
            (Some(_), Some(_)) => return Err(Error::Config("grid takes only one of `dt`, `dt_ratio`".into())),
        };
        Ok(GridSpec {
            nx: self.nx,
            dx,
            dt,
            t_final: self.t_final,
            cfl: if self.nx == 1 { None } else { self.cfl },
            sample_every: self.sample_every,
            blowup_limit: self.blowup_limit,
        })
    }
}

/// Initial data for `integrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `A cos(kx − ωt)` with `k = 2π·mode/L`.
    PlaneWave { amplitude: f64, mode: i32 },
    StandingWave { amplitude: f64, mode: i32 },
    /// `A exp(−(x − c)²/w²)` at rest.
    Gaussian { amplitude: f64, center: f64, width: f64 },
    /// `(q, p)` for `n = 1`.
    Mechanics { q: Vec<f64>, p: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    pub initial: InitialConfig,
    /// Also run the Euler–Lagrange oracle (`+-` scalar theories only).
    #[serde(default = "default_true")]
    pub oracle: bool,
    /// Energy drift tolerance; 1e-6 for quadratic potentials and 1e-4 otherwise.
    #[serde(default)]
    pub energy_tol: Option<f64>,
    #[serde(default = "default_field_tol")]
    pub oracle_tol: f64,
    #[serde(default = "default_field_tol")]
    pub exact_tol: f64,
}

fn default_true() -> bool {
    true
}

fn default_field_tol() -> f64 {
    1e-3
}

/// Built-in HJ potentials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinSection {
    /// `S^μ = 0`.
    Zero,
    /// `S = q²/(2t)`.
    FreeParticle,
    /// `S = −(ω/2) q² tan(ωt)`.
    Oscillator,
    /// Massless 1+1 family `S^0 = q x − ½x²t + t³/6`, `S^1 = q t`; passes (T1)–(T3) but not (T4).
    Twisted,
    /// Random smooth section drawn from the seed.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Expectation {
    /// (T1)–(T3) hold and the geometric form vanishes.
    #[default]
    Solution,
    /// All four conditions hold.
    Foliation,
    /// At least one of (T1)–(T3) fails.
    Failure,
    /// Frobenius holds.
    Integrable,
    NonIntegrable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjConfig {
    #[serde(default)]
    pub builtin: Option<BuiltinSection>,
    /// Expressions for `S^1 … S^n`.
    #[serde(default)]
    pub potential: Option<Vec<String>>,
    /// Expressions for `T^μ_i` (μ-major) and `T_0`.
    #[serde(default)]
    pub section: Option<SectionConfig>,
    pub domain: DomainConfig,
    /// Points per axis of a uniform lattice; random samples otherwise.
    #[serde(default)]
    pub lattice: Option<usize>,
    #[serde(default)]
    pub expect: Option<Expectation>,
    #[serde(default = "default_hj_tol")]
    pub tolerance: f64,
}

fn default_hj_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionConfig {
    pub tmom: Vec<String>,
    pub t0: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Optional here when given on the command line.
    #[serde(default)]
    pub task: Option<Task>,
    pub theory: TheoryConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub integrate: Option<IntegrateConfig>,
    #[serde(default)]
    pub hj: Option<HjConfig>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Random trace-free gauges per point for `verify-xh`.
    #[serde(default = "default_gauges")]
    pub gauges: usize,
    /// Scale of random phase-space points.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// `algebra-check` over `(n, N) ∈ {1,2,3}×{1,2}` instead of the theory chart.
    #[serde(default)]
    pub sweep: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_samples() -> usize {
    100
}

fn default_gauges() -> usize {
    10
}

fn default_scale() -> f64 {
    1.0
}

impl ScenarioConfig {
    pub fn new(task: Task, theory: TheoryConfig) -> Self {
        Self {
            task: Some(task),
            theory,
            grid: None,
            integrate: None,
            hj: None,
            samples: default_samples(),
            gauges: default_gauges(),
            scale: default_scale(),
            sweep: false,
            seed: 0,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn task(&self) -> Result<Task> {
        self.task
            .ok_or_else(|| Error::Config("no task given in the config or on the command line".into()))
    }

    /// Check the task-specific fields and build everything that can fail
    /// before any computation starts.
    pub fn validate(&self) -> Result<Prepared> {
        let task = self.task()?;
        let theory = self.theory.build()?;
        let n = theory.chart_ref().n();
        if self.samples == 0 {
            return Err(Error::Config("`samples` must be at least 1".into()));
        }
        let mut grid = None;
        let mut section = None;
        match task {
            Task::AlgebraCheck => {}
            Task::VerifyXh => {
                if self.gauges == 0 {
                    return Err(Error::Config("`gauges` must be at least 1".into()));
                }
            }
            Task::Integrate => {
                let g = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| Error::Config("task `integrate` needs `grid`".into()))?
                    .build()?;
                g.validate(n).map_err(|e| Error::Config(e.to_string()))?;
                let init = self
                    .integrate
                    .as_ref()
                    .ok_or_else(|| Error::Config("task `integrate` needs `integrate.initial`".into()))?;
                match (&init.initial, n) {
                    (InitialConfig::Mechanics { q, p }, 1) => {
                        let nf = theory.chart_ref().fields();
                        if q.len() != nf || p.len() != nf {
                            return Err(Error::Config(format!("mechanics initial data needs {nf} values")));
                        }
                    }
                    (InitialConfig::Mechanics { .. }, _) => {
                        return Err(Error::Config("mechanics initial data needs an n = 1 theory".into()))
                    }
                    (_, 1) => return Err(Error::Config("n = 1 theories need mechanics initial data".into())),
                    _ if theory.chart_ref().fields() != 1 => {
                        return Err(Error::Config("wave initial data is for a single field".into()))
                    }
                    _ => {}
                }
                grid = Some(g);
            }
            Task::HjCheck | Task::FoliationCheck => {
                let hj = self
                    .hj
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("task `{task}` needs `hj`")))?;
                section = Some(build_section(hj, &theory, self.seed)?);
                let dim = n + theory.chart_ref().fields();
                Domain::new(hj.domain.lower.clone(), hj.domain.upper.clone())
                    .ok()
                    .filter(|d| d.lower.len() == dim)
                    .ok_or_else(|| Error::Config(format!("`hj.domain` needs {dim} ordered bounds")))?;
            }
        }
        Ok(Prepared {
            task,
            theory,
            grid,
            section,
        })
    }
}

/// Validated pieces of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub task: Task,
    pub theory: ScalarTheory,
    pub grid: Option<GridSpec>,
    pub section: Option<(PhaseSection, Option<HJPotential>)>,
}

trait ChartRef {
    fn chart_ref(&self) -> &ChartSpec;
}

impl ChartRef for ScalarTheory {
    fn chart_ref(&self) -> &ChartSpec {
        crate::theory::DwHamiltonian::chart(self)
    }
}

fn builtin_potential(which: BuiltinSection, theory: &ScalarTheory) -> Result<Option<HJPotential>> {
    let spec = theory.chart_ref();
    let (n, nf) = (spec.n(), spec.fields());
    let need = |nn: usize, name: &str| {
        if n != nn || nf != 1 {
            Err(Error::Config(format!("built-in section `{name}` needs n = {nn}, N = 1")))
        } else {
            Ok(())
        }
    };
    Ok(Some(match which {
        BuiltinSection::Zero => HJPotential::zero(n, nf),
        BuiltinSection::FreeParticle => {
            need(1, "free-particle")?;
            let s = EFn::new(1, 1, |x, q| Ok(q[0] * q[0] / (2.0 * x[0])))
                .with_partials(|x, q| Ok(vec![-q[0] * q[0] / (2.0 * x[0] * x[0]), q[0] / x[0]]));
            HJPotential::new(1, 1, vec![s])?
        }
        BuiltinSection::Oscillator => {
            need(1, "oscillator")?;
            let w = match theory.potential() {
                Potential::Quadratic { mass } => *mass,
                _ => return Err(Error::Config("built-in section `oscillator` needs a quadratic potential".into())),
            };
            let s = EFn::new(1, 1, move |x, q| Ok(-0.5 * w * q[0] * q[0] * (w * x[0]).tan())).with_partials(
                move |x, q| {
                    let sec2 = 1.0 / (w * x[0]).cos().powi(2);
                    Ok(vec![-0.5 * w * w * q[0] * q[0] * sec2, -w * q[0] * (w * x[0]).tan()])
                },
            );
            HJPotential::new(1, 1, vec![s])?
        }
        BuiltinSection::Twisted => {
            need(2, "twisted")?;
            let s0 = EFn::new(2, 1, |x, q| Ok(q[0] * x[1] - 0.5 * x[1] * x[1] * x[0] + x[0].powi(3) / 6.0))
                .with_partials(|x, q| Ok(vec![-0.5 * x[1] * x[1] + 0.5 * x[0] * x[0], q[0] - x[1] * x[0], x[1]]));
            let s1 = EFn::new(2, 1, |x, q| Ok(q[0] * x[0])).with_partials(|x, q| Ok(vec![q[0], 0.0, x[0]]));
            HJPotential::new(2, 1, vec![s0, s1])?
        }
        BuiltinSection::Random => return Ok(None),
    }))
}

fn build_section(hj: &HjConfig, theory: &ScalarTheory, seed: u64) -> Result<(PhaseSection, Option<HJPotential>)> {
    let spec = theory.chart_ref();
    let (n, nf) = (spec.n(), spec.fields());
    let scope = Scope { n, fields: nf };
    let given = [hj.builtin.is_some(), hj.potential.is_some(), hj.section.is_some()];
    if given.iter().filter(|&&b| b).count() != 1 {
        return Err(Error::Config(
            "`hj` needs exactly one of `builtin`, `potential`, `section`".into(),
        ));
    }
    if let Some(which) = hj.builtin {
        return match builtin_potential(which, theory)? {
            Some(pot) => Ok((section_from_potential(&pot), Some(pot))),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EC7_1011);
                Ok((random_section(n, nf, &mut rng, 1.0), None))
            }
        };
    }
    if let Some(srcs) = &hj.potential {
        let exprs = srcs
            .iter()
            .map(|s| parse_potential(s, scope))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let pot = HJPotential::from_exprs(n, nf, exprs).map_err(|e| Error::Config(e.to_string()))?;
        return Ok((section_from_potential(&pot), Some(pot)));
    }
    let sec = hj.section.as_ref().expect("counted above");
    let parse = |s: &String| -> Result<EFn> { EFn::from_expr(parse_potential(s, scope)?, n, nf) };
    let tmom = sec.tmom.iter().map(parse).collect::<Result<Vec<_>>>()?;
    let section = PhaseSection::new(n, nf, tmom, parse(&sec.t0)?).map_err(|e| Error::Config(e.to_string()))?;
    Ok((section, None))
}

/// One pass/fail line of a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `below`: pass when `value < tolerance`; `above`: pass when `value > tolerance`;
    /// `equal`: pass when equal; `report`: informational, always passes.
    pub bound: String,
    pub passed: bool,
}

impl CheckResult {
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            bound: "below".into(),
            passed: value < tolerance,
        }
    }

    pub fn report(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: 0.0,
            bound: "report".into(),
            passed: true,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            bound: "above".into(),
            passed: value > tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: Task,
    pub theory: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub artifacts: Vec<String>,
    pub runtime_seconds: f64,
}

impl Summary {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Process exit status for a scenario outcome.
pub fn exit_code(outcome: &Result<Summary>) -> i32 {
    match outcome {
        Ok(s) if s.passed => 0,
        Ok(_) => 1,
        Err(e) => match e.root() {
            Error::Divergence { .. } => 3,
            Error::Config(_) | Error::Parse(_) | Error::InvalidGrid(_) | Error::Io(_) => 2,
            _ => 1,
        },
    }
}

struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl Artifacts<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.names.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }
}

/// Validate, run the task, and write artifacts plus `summary.json` into `out`.
pub fn run_scenario(cfg: &ScenarioConfig, out: &Path) -> Result<Summary> {
    let prepared = cfg.validate()?;
    fs::create_dir_all(out)?;
    let started = Instant::now();
    let mut artifacts = Artifacts {
        dir: out,
        names: Vec::new(),
    };
    let task = prepared.task;
    let checks = match task {
        Task::AlgebraCheck => algebra_check(cfg, &prepared, &mut artifacts).map_err(|e| e.in_module(Module::PhaseSpace)),
        Task::VerifyXh => verify_xh(cfg, &prepared, &mut artifacts).map_err(|e| e.in_module(Module::DeDonderWeyl)),
        Task::Integrate => integrate(cfg, &prepared, &mut artifacts).map_err(|e| e.in_module(Module::FieldSolver)),
        Task::HjCheck => hj_check(cfg, &prepared, &mut artifacts).map_err(|e| e.in_module(Module::HamiltonJacobi)),
        Task::FoliationCheck => {
            foliation_check(cfg, &prepared, &mut artifacts).map_err(|e| e.in_module(Module::HamiltonJacobi))
        }
    }?;
    let summary = Summary {
        task,
        theory: prepared.theory.name().to_string(),
        seed: cfg.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
        artifacts: artifacts.names,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out.join("summary.json"), text + "\n")?;
    Ok(summary)
}

fn algebra_check(cfg: &ScenarioConfig, p: &Prepared, art: &mut Artifacts) -> Result<Vec<CheckResult>> {
    use std::io::Write;
    let charts: Vec<ChartSpec> = if cfg.sweep {
        let mut v = Vec::new();
        for n in 1..=3 {
            for nf in 1..=2 {
                v.push(ChartSpec::new(n, nf)?);
            }
        }
        v
    } else {
        vec![p.theory.chart_ref().clone()]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut csv = art.create("algebra.csv")?;
    writeln!(csv, "n,fields,analytic_residual,fd_residual,rank,dim,min_singular_value,control_rank")?;
    let (mut analytic, mut fd, mut nondeg_ok, mut control_fails) = (0.0f64, 0.0f64, true, true);
    for spec in &charts {
        let omega = omega_form(spec)?;
        let theta = theta_field(spec);
        let (mut a_max, mut f_max) = (0.0f64, 0.0f64);
        for _ in 0..cfg.samples {
            let pt = ChartPoint::random(spec, &mut rng, cfg.scale).coords();
            let exact = exterior_derivative(&theta, &pt, DEFAULT_STEP)?.scale(-1.0);
            let numeric = exterior_derivative_numeric(&theta, &pt, DEFAULT_STEP)?.scale(-1.0);
            a_max = a_max.max(exact.max_abs_diff(&omega)?);
            f_max = f_max.max(numeric.max_abs_diff(&omega)?);
        }
        let report = nondegeneracy_check_form(&omega, cfg.samples, &mut rng)?;
        let dp_term = Form::basis(spec.dim(), &[spec.p()])?.wedge(&volume_form(spec.dim(), spec.n())?)?;
        let control = nondegeneracy_check_form(&omega.add(&dp_term)?, cfg.samples, &mut rng)?;
        writeln!(
            csv,
            "{},{},{:.16e},{:.16e},{},{},{:.16e},{}",
            spec.n(),
            spec.fields(),
            a_max,
            f_max,
            report.rank,
            report.dim,
            report.min_singular_value,
            control.rank
        )?;
        analytic = analytic.max(a_max);
        fd = fd.max(f_max);
        nondeg_ok &= report.passed;
        control_fails &= !control.passed;
    }
    csv.flush()?;
    Ok(vec![
        CheckResult {
            name: "omega_minus_dtheta_analytic".into(),
            value: analytic,
            tolerance: 0.0,
            bound: "equal".into(),
            passed: analytic == 0.0,
        },
        CheckResult::below("omega_minus_dtheta_fd", fd, 1e-8),
        CheckResult::above("nondegenerate", if nondeg_ok { 1.0 } else { 0.0 }, 0.5),
        CheckResult::above("control_without_dp_degenerate", if control_fails { 1.0 } else { 0.0 }, 0.5),
    ])
}

fn verify_xh(cfg: &ScenarioConfig, p: &Prepared, art: &mut Artifacts) -> Result<Vec<CheckResult>> {
    use std::io::Write;
    let th = &p.theory;
    let spec = th.chart_ref().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut csv = art.create("verify_xh.csv")?;
    writeln!(csv, "sample,gauge,{},residual,control_residual", spec.names().join(","))?;
    let (mut worst, mut control_min) = (0.0f64, f64::INFINITY);
    for s in 0..cfg.samples {
        let at = ChartPoint::random(&spec, &mut rng, cfg.scale);
        let dh_bad = differential_of_h(th, &at, false)?;
        let coords: Vec<String> = at.coords().iter().map(|c| format!("{c:.16e}")).collect();
        let coords = coords.join(",");
        for g in 0..cfg.gauges {
            let gauge = Gauge::random(&spec, &mut rng, cfg.scale);
            let x = build_hamiltonian_nvector(th, &at, &gauge)?;
            let r = crate::dedonder_weyl::verify_defining_relation(th, &x, &at)?;
            let control = defining_relation_residual(&spec, &x.assembled, &dh_bad)?;
            writeln!(csv, "{s},{g},{coords},{:.16e},{:.16e}", r.residual, control.residual)?;
            worst = worst.max(r.residual);
            control_min = control_min.min(control.residual);
        }
    }
    csv.flush()?;
    Ok(vec![
        CheckResult::below("defining_relation_residual", worst, 1e-8),
        CheckResult::above("control_without_p_residual", control_min, 0.5),
    ])
}

fn initial_state(init: &InitialConfig, grid: &GridSpec, theory: &ScalarTheory) -> Result<(FieldState, Option<f64>)> {
    let mass = match theory.potential() {
        Potential::Quadratic { mass } => Some(*mass),
        _ => None,
    };
    Ok(match init {
        InitialConfig::PlaneWave { amplitude, mode } => {
            (plane_wave(grid, *amplitude, grid.wavenumber(*mode), mass.unwrap_or(0.0), 0.0), mass)
        }
        InitialConfig::StandingWave { amplitude, mode } => {
            (standing_wave(grid, *amplitude, grid.wavenumber(*mode), mass.unwrap_or(0.0), 0.0), mass)
        }
        InitialConfig::Gaussian {
            amplitude,
            center,
            width,
        } => (
            FieldState::from_fn(grid, 0.0, |x| (amplitude * (-((x - center) / width).powi(2)).exp(), 0.0)),
            None,
        ),
        InitialConfig::Mechanics { q, p } => (
            FieldState {
                t: 0.0,
                phi: q.clone(),
                pi0: p.clone(),
            },
            None,
        ),
    })
}

fn exact_error(traj: &Trajectory, init: &InitialConfig, mass: f64) -> f64 {
    let g = &traj.grid;
    traj.samples
        .iter()
        .map(|s| {
            let exact = match init {
                InitialConfig::PlaneWave { amplitude, mode } => plane_wave(g, *amplitude, g.wavenumber(*mode), mass, s.state.t),
                InitialConfig::StandingWave { amplitude, mode } => {
                    standing_wave(g, *amplitude, g.wavenumber(*mode), mass, s.state.t)
                }
                _ => unreachable!("exact solutions exist only for waves"),
            };
            s.state
                .phi
                .iter()
                .zip(&exact.phi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn integrate(cfg: &ScenarioConfig, p: &Prepared, art: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let th = &p.theory;
    let grid = p.grid.as_ref().expect("validated");
    let icfg = cfg.integrate.as_ref().expect("validated");
    let (s0, mass) = initial_state(&icfg.initial, grid, th)?;
    let traj = evolve(th, &s0, grid)?;
    traj.write_csv(art.create("trajectory.csv")?)?;

    let quadratic = matches!(th.potential(), Potential::Quadratic { .. });
    let energy_tol = icfg.energy_tol.unwrap_or(if quadratic { 1e-6 } else { 1e-4 });
    let mut checks = vec![CheckResult::below("energy_drift", traj.energy_drift(), energy_tol)];

    let waves = matches!(
        icfg.initial,
        InitialConfig::PlaneWave { .. } | InitialConfig::StandingWave { .. }
    );
    if let (true, Some(m), Signature::MostlyMinus) = (waves, mass, th.signature()) {
        checks.push(CheckResult::below("exact_error", exact_error(&traj, &icfg.initial, m), icfg.exact_tol));
    }
    if icfg.oracle && th.signature() == Signature::MostlyMinus {
        let oracle = euler_lagrange_oracle(th, &s0, grid)?;
        oracle.write_csv(art.create("oracle.csv")?)?;
        checks.push(CheckResult::below("oracle_difference", traj.max_phi_difference(&oracle), icfg.oracle_tol));
    }
    Ok(checks)
}

fn hj_samples(cfg: &ScenarioConfig, hj: &HjConfig, n: usize) -> Result<Vec<crate::phase_space::ConfigPoint>> {
    let domain = Domain::new(hj.domain.lower.clone(), hj.domain.upper.clone())?;
    Ok(match hj.lattice {
        Some(k) => domain.lattice(n, k),
        None => domain.random(n, cfg.samples, &mut ChaCha8Rng::seed_from_u64(cfg.seed)),
    })
}

fn hj_check(cfg: &ScenarioConfig, p: &Prepared, art: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let th = &p.theory;
    let hj = cfg.hj.as_ref().expect("validated");
    let (section, potential) = p.section.as_ref().expect("validated");
    let samples = hj_samples(cfg, hj, th.chart_ref().n())?;
    let tol = hj.tolerance;

    let report = check_theorem2_conditions(th, section, &samples)?;
    let geom = geometric_form_check(th, section, potential.as_ref(), &samples)?;
    let mut table = report.table.clone();
    table.rows.extend(geom.table.rows.iter().cloned());
    table.write_csv(art.create("hj_residuals.csv")?)?;

    let mut checks = Vec::new();
    if let Some(pot) = potential {
        let mut worst = 0.0f64;
        for at in &samples {
            worst = worst.max(hj_residual(th, pot, at)?.abs());
        }
        checks.push(CheckResult::report("hj_residual", worst));
    }
    let t123 = report.t1.max(report.t2).max(report.t3);
    let equivalent = geom.vanishes(tol) == report.passes_t1_t3(tol) && geom.coordinate_mismatch < tol;
    checks.push(CheckResult::above("geometric_equivalence", if equivalent { 1.0 } else { 0.0 }, 0.5));
    checks.push(CheckResult::below("theta_pullback", geom.theta_pullback, tol));
    match hj.expect.unwrap_or_default() {
        Expectation::Solution => {
            checks.push(CheckResult::below("T1-T3", t123, tol));
            checks.push(CheckResult::report("T4", report.t4));
        }
        Expectation::Foliation => {
            checks.push(CheckResult::below("T1-T3", t123, tol));
            checks.push(CheckResult::below("T4", report.t4, tol));
        }
        Expectation::Failure => {
            checks.push(CheckResult::above("T1-T3", t123, 0.1));
            checks.push(CheckResult::report("T4", report.t4));
        }
        other => return Err(Error::Config(format!("hj-check cannot expect `{other:?}`"))),
    }
    checks.push(CheckResult::report("T4-literal", report.t4_literal));
    if let Some(ds) = geom.ds {
        checks.push(CheckResult::below("dS_equals_T", ds, tol));
    }
    Ok(checks)
}

fn foliation_check(cfg: &ScenarioConfig, p: &Prepared, art: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let th = &p.theory;
    let hj = cfg.hj.as_ref().expect("validated");
    let (section, _) = p.section.as_ref().expect("validated");
    let samples = hj_samples(cfg, hj, th.chart_ref().n())?;
    let report = foliation_integrability_check(th, section, &samples)?;
    report.table.write_csv(art.create("foliation.csv")?)?;
    let v = report.max_out_of_span;
    Ok(vec![match hj.expect.unwrap_or(Expectation::Integrable) {
        Expectation::Integrable => CheckResult::below("frobenius_out_of_span", v, hj.tolerance),
        Expectation::NonIntegrable => CheckResult::above("frobenius_out_of_span", v, hj.tolerance),
        other => return Err(Error::Config(format!("foliation-check cannot expect `{other:?}`"))),
    }])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ScenarioConfig::from_json(r#"{"theory": {"name": "oscillator"}, "sampels": 3}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ScenarioConfig::from_json(r#"{"theory": {"name": "oscillator", "mas": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("mas"));
    }

    #[test]
    fn task_names_round_trip() {
        for t in [Task::AlgebraCheck, Task::VerifyXh, Task::Integrate, Task::HjCheck, Task::FoliationCheck] {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        assert!("integrat".parse::<Task>().is_err());
    }

    #[test]
    fn registry() {
        assert_eq!(TheoryConfig::named("oscillator").build().unwrap().name(), "oscillator");
        assert_eq!(TheoryConfig::named("sine-gordon").build().unwrap().chart_ref().n(), 2);
        assert!(TheoryConfig::named("klein").build().is_err());
        let mut custom = TheoryConfig::named("custom");
        assert!(custom.build().is_err());
        custom.potential = Some("0.5*q1^2 + 0.1*q1^4".into());
        assert!(custom.build().is_ok());
        custom.potential = Some("0.5*q1^^2".into());
        let err = custom.build().unwrap_err();
        assert!(matches!(err, Error::Parse(ref p) if p.offset == 7), "{err}");
    }

    #[test]
    fn task_requirements() {
        let cfg = ScenarioConfig::new(Task::Integrate, TheoryConfig::named("free-scalar"));
        assert!(cfg.validate().unwrap_err().to_string().contains("grid"));
        let cfg = ScenarioConfig::new(Task::HjCheck, TheoryConfig::named("free-scalar"));
        assert!(cfg.validate().unwrap_err().to_string().contains("hj"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Err(Error::Config("x".into()))), 2);
        assert_eq!(exit_code(&Err(Error::Divergence { t: 1.0 }.in_module(Module::FieldSolver))), 3);
        assert_eq!(exit_code(&Err(Error::Singular { iterations: 1, residual: 1.0 })), 1);
    }
}
