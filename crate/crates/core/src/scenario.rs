//! Declarative scenarios (TOML) and their CSV / JSON artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::bounds::{bound_holley_stroock, bound_lipschitz_poincare, fmt_num, BoundResult, ParamSearch, Quantity, TheoremId};
use crate::langevin::{chain_seed, ensemble_run, ensemble_series, fit_decay_rate, variance_with_stderr, ChainConfig, ChainTrace, LangevinError, Target};
use crate::measures::Certified;
use crate::mollify::{mollified_grad_f, verify_mollified_bound, AtomicMeasure};
use crate::oracle::{poincare_model, DEFAULT_INTERVALS};
use crate::regress::{check_regression_gated, check_orthogonal_gated, generate_problem, posterior_log_density, posterior_oracle, run_estimation, Design, EstimationOptions, PosteriorSpec, RegressError, RegressionConstants};
use crate::sweep::{bound_row, evaluate_instance, instance_oracles, run_sweep, summarize, BaseSpec, PertSpec, SweepConfig, SweepError, SweepRow};

/// Version of the JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Columns of every bound-comparison CSV (`bounds`, `soundness-sweep`, `mollify`, `regress`, `compare`).
pub const BOUND_COLUMNS: [&str; 12] = ["instance", "base", "perturbation", "theorem", "quantity", "applicable", "bound", "oracle", "ratio", "violation", "params", "margins"];
pub const ORACLE_COLUMNS: [&str; 8] = ["instance", "base", "perturbation", "oracle", "constant", "richardson_error", "low_confidence", "discretization"];
pub const CHAIN_COLUMNS: [&str; 9] = ["chain", "seed", "h", "steps", "burn_in", "mean", "variance", "iat", "ess"];

/// A config that failed to parse or validate, anchored to a line of the file.
#[derive(Debug, Error, PartialEq)]
#[error("{path}:{line}:{column}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Langevin(#[from] LangevinError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error("writing artifacts: {0}")]
    Io(#[from] io::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Bounds,
    Oracle,
    #[serde(alias = "sweep")]
    SoundnessSweep,
    Mollify,
    Langevin,
    Regress,
    Compare,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Bounds => "bounds",
            ScenarioKind::Oracle => "oracle",
            ScenarioKind::SoundnessSweep => "soundness-sweep",
            ScenarioKind::Mollify => "mollify",
            ScenarioKind::Langevin => "langevin",
            ScenarioKind::Regress => "regress",
            ScenarioKind::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub csv: Option<String>,
    pub json: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub measure: BaseSpec,
    #[serde(default = "zero_pert")]
    pub perturbation: PertSpec,
}

fn zero_pert() -> PertSpec {
    PertSpec::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub instances: usize,
    pub mollify_instances: usize,
    pub min_applicable: usize,
    pub max_instances: usize,
    pub theorems: Vec<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        SweepSection { instances: d.instances, mollify_instances: d.mollify_instances, min_applicable: d.min_applicable, max_instances: d.max_instances, theorems: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifySection {
    /// Atom locations on the line.
    pub locations: Vec<f64>,
    /// Atom weights; uniform when omitted.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub sigmas: Vec<f64>,
    /// Random points for the `|∇F| ≤ R/σ²` check.
    #[serde(default = "default_check_points")]
    pub check_points: usize,
}

fn default_check_points() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinSection {
    pub measure: BaseSpec,
    #[serde(default = "zero_pert")]
    pub perturbation: PertSpec,
    #[serde(default = "one")]
    pub dim: usize,
    pub h: f64,
    pub steps: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub chains: usize,
    /// Initial state, broadcast when a single value is given.
    #[serde(default)]
    pub init: Vec<f64>,
    /// Relaxation ensemble for the decay fit of the first coordinate (0 disables it).
    #[serde(default)]
    pub decay_chains: usize,
    #[serde(default)]
    pub decay_steps: usize,
    #[serde(default = "default_decay_init")]
    pub decay_init: f64,
}

fn one() -> usize {
    1
}

fn default_decay_init() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressSection {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub sparsity: usize,
    pub noise_sd: f64,
    pub design: Design,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub h: f64,
    pub decay_chains: usize,
    pub decay_steps: usize,
    /// Euclidean instead of coordinate-wise Lipschitz constant.
    pub euclidean: bool,
}

impl Default for RegressSection {
    fn default() -> Self {
        RegressSection { n: 32, m: 16, sparsity: 3, noise_sd: 0.1, design: Design::Orthogonal, alpha: 5.0, beta: 64.0, tau: 1.0, steps: 20_000, burn_in: 2_000, h: 0.01, decay_chains: 64, decay_steps: 2_000, euclidean: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub measure: BaseSpec,
    pub amplitudes: Vec<f64>,
    pub widths: Vec<f64>,
    #[serde(default)]
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub instances: Vec<InstanceSpec>,
    pub sweep: Option<SweepSection>,
    pub mollify: Option<MollifySection>,
    pub langevin: Option<LangevinSection>,
    pub regress: Option<RegressSection>,
    pub compare: Option<CompareSection>,
}

fn default_seed() -> u64 {
    1
}

fn default_intervals() -> usize {
    DEFAULT_INTERVALS
}

fn default_tolerance() -> f64 {
    1e-3
}

impl Scenario {
    /// Scenario of the given kind with every section at its default.
    pub fn new(kind: ScenarioKind) -> Self {
        Scenario {
            kind,
            seed: default_seed(),
            intervals: default_intervals(),
            tolerance: default_tolerance(),
            output: OutputSpec::default(),
            instances: Vec::new(),
            sweep: None,
            mollify: None,
            langevin: None,
            regress: None,
            compare: None,
        }
    }
}

/// Built-in scenario used when no config file is given.
pub fn builtin(kind: ScenarioKind) -> Scenario {
    let mut sc = Scenario::new(kind);
    let inst = |measure, perturbation| InstanceSpec { measure, perturbation };
    match kind {
        ScenarioKind::Bounds => {
            sc.instances = vec![
                inst(BaseSpec::Gaussian { rho: 1.0 }, PertSpec::Linear { c: 0.5 }),
                inst(BaseSpec::Gaussian { rho: 1.0 }, PertSpec::Bump { amplitude: 0.5, width: 1.0, center: 0.0 }),
                inst(BaseSpec::Subbotin { p: 1.5 }, PertSpec::Quadratic { rho: 0.25 }),
                inst(BaseSpec::DoubleWell { a: 0.25 }, PertSpec::Abs { c: 0.5 }),
            ];
        }
        ScenarioKind::Oracle => {
            sc.instances = vec![
                inst(BaseSpec::Gaussian { rho: 1.0 }, PertSpec::Zero),
                inst(BaseSpec::Exponential { alpha: 1.0 }, PertSpec::Zero),
                inst(BaseSpec::Uniform { lo: 0.0, hi: 1.0 }, PertSpec::Zero),
            ];
        }
        ScenarioKind::SoundnessSweep => sc.sweep = Some(SweepSection::default()),
        ScenarioKind::Mollify => {
            sc.mollify = Some(MollifySection { locations: vec![-1.0, 1.0], weights: None, sigmas: vec![0.6, 1.0, 2.0], check_points: default_check_points() });
        }
        ScenarioKind::Langevin => {
            sc.langevin = Some(LangevinSection {
                measure: BaseSpec::Gaussian { rho: 1.0 },
                perturbation: PertSpec::Zero,
                dim: 1,
                h: 0.01,
                steps: 50_000,
                burn_in: 1_000,
                chains: 4,
                init: vec![0.0],
                decay_chains: 64,
                decay_steps: 800,
                decay_init: default_decay_init(),
            });
        }
        ScenarioKind::Regress => sc.regress = Some(RegressSection::default()),
        ScenarioKind::Compare => {
            sc.compare = Some(CompareSection { measure: BaseSpec::Gaussian { rho: 1.0 }, amplitudes: vec![0.1, 0.5, 1.0, 2.0, 4.0], widths: vec![0.25, 1.0, 4.0], center: 0.0 });
        }
    }
    sc
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Line of the first `key = …` or `[key]` entry, falling back to line 1.
fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            let is_key = t.strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('='));
            let is_table = t.starts_with('[') && t.trim_matches(|c| c == '[' || c == ']').trim() == key;
            is_key || is_table
        })
        .map_or(1, |i| i + 1)
}

/// Parse and validate a scenario; `path` only labels error messages.
pub fn parse_scenario(text: &str, path: &str) -> Result<Scenario, ConfigError> {
    let sc: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ConfigError { path: path.into(), line, column, message: e.message().trim().to_string() }
    })?;
    validate(&sc).map_err(|(key, message)| ConfigError { path: path.into(), line: key_line(text, key), column: 1, message })?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError { path: path.display().to_string(), line: 1, column: 1, message: e.to_string() })?;
    parse_scenario(&text, &path.display().to_string())
}

fn positive(key: &'static str, v: f64) -> Result<(), (&'static str, String)> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err((key, format!("`{key}` must be positive and finite, got {v}")))
    }
}

/// Checks not expressible in the serde schema; errors name the offending key.
pub fn validate(sc: &Scenario) -> Result<(), (&'static str, String)> {
    if sc.intervals < 16 {
        return Err(("intervals", format!("`intervals` must be at least 16, got {}", sc.intervals)));
    }
    if !(0.0..1.0).contains(&sc.tolerance) {
        return Err(("tolerance", format!("`tolerance` must lie in [0, 1), got {}", sc.tolerance)));
    }
    let missing = |s: &'static str| Err(("kind", format!("scenario kind `{}` requires a [{s}] table", sc.kind.name())));
    match sc.kind {
        ScenarioKind::Bounds | ScenarioKind::Oracle => {
            if sc.instances.is_empty() {
                return Err(("kind", format!("scenario kind `{}` requires at least one [[instances]] entry", sc.kind.name())));
            }
            for i in &sc.instances {
                i.measure.build(1).map_err(|e| ("instances", e.to_string()))?;
            }
        }
        ScenarioKind::SoundnessSweep => {
            let s = sc.sweep.clone().unwrap_or_default();
            for t in &s.theorems {
                if serde_json::from_value::<TheoremId>(Value::String(t.clone())).is_err() {
                    return Err(("theorems", format!("unknown theorem id `{t}`")));
                }
            }
            if s.instances == 0 && s.mollify_instances == 0 {
                return Err(("instances", "sweep has no instances".into()));
            }
        }
        ScenarioKind::Mollify => {
            let Some(m) = &sc.mollify else { return missing("mollify") };
            if m.locations.is_empty() {
                return Err(("locations", "`locations` must not be empty".into()));
            }
            if let Some(w) = &m.weights {
                if w.len() != m.locations.len() {
                    return Err(("weights", format!("{} weights for {} locations", w.len(), m.locations.len())));
                }
                if w.iter().any(|w| !(*w > 0.0)) {
                    return Err(("weights", "weights must be positive".into()));
                }
            }
            if m.sigmas.is_empty() {
                return Err(("sigmas", "`sigmas` must not be empty".into()));
            }
            for s in &m.sigmas {
                positive("sigmas", *s)?;
            }
        }
        ScenarioKind::Langevin => {
            let Some(l) = &sc.langevin else { return missing("langevin") };
            positive("h", l.h)?;
            l.measure.build(l.dim.max(1)).map_err(|e| ("measure", e.to_string()))?;
            if l.steps == 0 || l.burn_in >= l.steps {
                return Err(("steps", format!("need steps > burn_in, got steps={} burn_in={}", l.steps, l.burn_in)));
            }
            if l.chains == 0 {
                return Err(("chains", "`chains` must be at least 1".into()));
            }
            if !(l.init.is_empty() || l.init.len() == 1 || l.init.len() == l.dim) {
                return Err(("init", format!("`init` has {} values for dim {}", l.init.len(), l.dim)));
            }
            if l.decay_chains > 0 && l.decay_steps < 3 {
                return Err(("decay_steps", "`decay_steps` must be at least 3 when `decay_chains` > 0".into()));
            }
        }
        ScenarioKind::Regress => {
            let r = sc.regress.clone().unwrap_or_default();
            positive("alpha", r.alpha)?;
            positive("beta", r.beta)?;
            positive("tau", r.tau)?;
            positive("h", r.h)?;
            if r.n == 0 || r.m == 0 || r.sparsity > r.m {
                return Err(("sparsity", format!("need n, M ≥ 1 and sparsity ≤ M, got n={} M={} sparsity={}", r.n, r.m, r.sparsity)));
            }
            if r.steps == 0 || r.burn_in >= r.steps {
                return Err(("steps", format!("need steps > burn_in, got steps={} burn_in={}", r.steps, r.burn_in)));
            }
        }
        ScenarioKind::Compare => {
            let Some(c) = &sc.compare else { return missing("compare") };
            c.measure.build(1).map_err(|e| ("measure", e.to_string()))?;
            if c.amplitudes.is_empty() || c.widths.is_empty() {
                return Err(("amplitudes", "`amplitudes` and `widths` must not be empty".into()));
            }
            for w in &c.widths {
                positive("widths", *w)?;
            }
        }
    }
    Ok(())
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub kind: ScenarioKind,
    pub csv: Vec<u8>,
    pub summary: Value,
    pub violations: usize,
    pub warnings: Vec<String>,
    /// Chains to dump when requested.
    pub traces: Vec<ChainTrace>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dump_samples: bool,
}

/// Paths written by [`ScenarioOutput::write`].
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub samples: Vec<PathBuf>,
}

impl ScenarioOutput {
    pub fn write(&self, dir: &Path, output: &OutputSpec) -> io::Result<Artifacts> {
        fs::create_dir_all(dir)?;
        let stem = self.kind.name();
        let csv = dir.join(output.csv.clone().unwrap_or_else(|| format!("{stem}.csv")));
        let json = dir.join(output.json.clone().unwrap_or_else(|| format!("{stem}.json")));
        fs::write(&csv, &self.csv)?;
        let mut text = serde_json::to_string_pretty(&self.summary).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(&json, text)?;
        let mut samples = Vec::new();
        for (i, t) in self.traces.iter().enumerate() {
            let p = dir.join(format!("{stem}_chain{i}.bin"));
            let mut f = io::BufWriter::new(fs::File::create(&p)?);
            t.write_samples(&mut f)?;
            samples.push(p);
        }
        Ok(Artifacts { csv, json, samples })
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn bound_csv<'a>(rows: impl IntoIterator<Item = &'a SweepRow>) -> Vec<u8> {
    csv_table(
        &BOUND_COLUMNS,
        rows.into_iter().map(|r| {
            vec![
                r.instance.to_string(),
                r.base.clone(),
                r.perturbation.clone(),
                r.theorem.clone(),
                r.quantity.clone(),
                r.applicable.to_string(),
                opt_num(r.bound),
                if r.oracle.is_nan() { String::new() } else { fmt_num(r.oracle) },
                opt_num(r.ratio),
                r.violation.to_string(),
                r.params.clone(),
                r.margins.clone(),
            ]
        }),
    )
}

fn summary(sc: &Scenario, rows: &[SweepRow], warnings: &[String], started: Instant, details: Value) -> (Value, usize) {
    let rec = crate::sweep::InstanceRecord { index: 0, base: None, perturbation: None, mu_f_log_concave: false, oracles: None, rows: rows.to_vec(), warnings: Vec::new() };
    let theorems = summarize(std::slice::from_ref(&rec), &[]);
    let violations = theorems.values().map(|s| s.violations).sum();
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": sc.kind.name(),
        "seed": sc.seed,
        "rows": rows.len(),
        "violations": violations,
        "theorems": theorems,
        "runtime_seconds": started.elapsed().as_secs_f64(),
        "warnings": warnings,
        "details": details,
    });
    (v, violations)
}

/// Run a validated scenario. The CSV depends only on the scenario (including its seed).
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<ScenarioOutput, ScenarioError> {
    validate(sc).map_err(|(key, message)| ConfigError { path: "<scenario>".into(), line: 1, column: 1, message: format!("{key}: {message}") })?;
    let started = Instant::now();
    let (csv, rows, warnings, details, traces) = match sc.kind {
        ScenarioKind::Bounds => run_bounds(sc)?,
        ScenarioKind::Oracle => run_oracle(sc)?,
        ScenarioKind::SoundnessSweep => run_soundness(sc)?,
        ScenarioKind::Mollify => run_mollify(sc)?,
        ScenarioKind::Langevin => run_langevin(sc, opts)?,
        ScenarioKind::Regress => run_regress(sc)?,
        ScenarioKind::Compare => run_compare(sc)?,
    };
    let (summary, violations) = summary(sc, &rows, &warnings, started, details);
    Ok(ScenarioOutput { kind: sc.kind, csv, summary, violations, warnings, traces })
}

type KindOutput = (Vec<u8>, Vec<SweepRow>, Vec<String>, Value, Vec<ChainTrace>);

fn run_bounds(sc: &Scenario) -> Result<KindOutput, ScenarioError> {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut flags = Vec::new();
    for (i, inst) in sc.instances.iter().enumerate() {
        let r = evaluate_instance(i, &inst.measure, &inst.perturbation, sc.intervals, sc.tolerance)?;
        warnings.extend(r.warnings.iter().map(|w| format!("instance {i}: {w}")));
        flags.push(json!({ "instance": i, "mu_f_log_concave": r.mu_f_log_concave, "oracles": r.oracles }));
        rows.extend(r.rows);
    }
    Ok((bound_csv(&rows), rows, warnings, json!({ "instances": flags }), Vec::new()))
}

fn run_oracle(sc: &Scenario) -> Result<KindOutput, ScenarioError> {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    let mut details = Vec::new();
    for (i, inst) in sc.instances.iter().enumerate() {
        let m = inst.measure.build(1).map_err(SweepError::from)?;
        let f = inst.perturbation.build(&m);
        let o = instance_oracles(&m, &f, sc.intervals)?;
        for r in [&o.c_p, &o.c_c_median, &o.c_c_mean, &o.muckenhoupt] {
            if r.low_confidence {
                warnings.push(format!("instance {i}: low-confidence {:?} oracle", r.kind));
            }
            out.push(vec![
                i.to_string(),
                m.name(),
                f.kind.name(),
                format!("{:?}", r.kind),
                fmt_num(r.constant),
                fmt_num(r.richardson_error),
                r.low_confidence.to_string(),
                r.discretization.to_string(),
            ]);
        }
        details.push(json!({ "instance": i, "base": m.name(), "perturbation": f.kind.name(), "oracles": o }));
    }
    Ok((csv_table(&ORACLE_COLUMNS, out), Vec::new(), warnings, json!({ "instances": details }), Vec::new()))
}

fn run_soundness(sc: &Scenario) -> Result<KindOutput, ScenarioError> {
    let s = sc.sweep.clone().unwrap_or_default();
    let cfg = SweepConfig { seed: sc.seed, instances: s.instances, mollify_instances: s.mollify_instances, min_applicable: s.min_applicable, max_instances: s.max_instances, intervals: sc.intervals, tolerance: sc.tolerance, theorems: s.theorems };
    let out = run_sweep(&cfg)?;
    let rows: Vec<SweepRow> = out.rows().cloned().collect();
    let details = json!({ "instances": out.records.len(), "log_concave_instances": out.records.iter().filter(|r| r.mu_f_log_concave).count() });
    Ok((bound_csv(&rows), rows, out.warnings(), details, Vec::new()))
}

/// Largest `|∇F(x)| σ² / R` over `points` uniform draws on `[−R − 6σ, R + 6σ]`.
pub fn mollify_gradient_check(nu: &AtomicMeasure, sigma: f64, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = nu.radius + 6.0 * sigma;
    let cap = nu.radius / (sigma * sigma);
    (0..points)
        .map(|_| {
            let x = rng.random_range(-span..=span);
            let g = mollified_grad_f(nu, sigma, &[x]);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if cap > 0.0 { norm / cap } else { norm }
        })
        .fold(0.0, f64::max)
}

fn run_mollify(sc: &Scenario) -> Result<KindOutput, ScenarioError> {
    let m = sc.mollify.as_ref().expect("validated");
    let w = m.weights.clone().unwrap_or_else(|| vec![1.0; m.locations.len()]);
    let nu = AtomicMeasure::new(m.locations.iter().zip(&w).map(|(x, w)| (vec![*x], *w)).collect()).map_err(SweepError::from)?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut checks = Vec::new();
    for (i, &sigma) in m.sigmas.iter().enumerate() {
        let c = verify_mollified_bound(&nu, sigma, &ParamSearch::default(), sc.intervals).map_err(SweepError::from)?;
        if c.oracle.low_confidence {
            warnings.push(format!("sigma {sigma}: low-confidence oracle"));
        }
        let grad = mollify_gradient_check(&nu, sigma, m.check_points, chain_seed(sc.seed, i));
        checks.push(json!({ "sigma": sigma, "oracle": c.oracle.constant, "bound": c.bound.value, "applicable": c.bound.applicable, "max_grad_over_cap": grad, "gradient_bound_holds": grad <= 1.0 }));
        rows.push(bound_row(i, &format!("atoms(k={},R={})", nu.weights.len(), nu.radius), &format!("sigma={sigma}"), &c.bound, c.oracle.constant, sc.tolerance));
    }
    Ok((bound_csv(&rows), rows, warnings, json!({ "radius": nu.radius, "sigmas": checks }), Vec::new()))
}

fn run_langevin(sc: &Scenario, opts: &RunOptions) -> Result<KindOutput, ScenarioError> {
    let l = sc.langevin.as_ref().expect("validated");
    let m = l.measure.build(l.dim).map_err(SweepError::from)?;
    let f = l.perturbation.build(&m);
    let target = Target::from_model(&m, Some(&f));
    let init = match l.init.len() {
        0 => vec![0.0; l.dim],
        1 => vec![l.init[0]; l.dim],
        _ => l.init.clone(),
    };
    let cfg = ChainConfig { h: l.h, steps: l.steps, burn_in: l.burn_in, seed: sc.seed, init: init.clone() };
    let traces = ensemble_run(&target, &cfg, l.chains)?;
    let mut table = Vec::new();
    let mut chains = Vec::new();
    for (i, t) in traces.iter().enumerate() {
        let x0: Vec<f64> = t.coordinate(0)[t.burn_in..].to_vec();
        let (var, var_se) = variance_with_stderr(&x0);
        let mean = x0.iter().sum::<f64>() / x0.len() as f64;
        table.push(vec![i.to_string(), t.seed.to_string(), fmt_num(t.h), t.steps().to_string(), t.burn_in.to_string(), fmt_num(mean), fmt_num(var), fmt_num(t.diagnostics.iat), fmt_num(t.diagnostics.ess)]);
        chains.push(json!({ "chain": i, "seed": t.seed, "mean": mean, "variance": var, "variance_stderr": var_se, "iat": t.diagnostics.iat, "ess": t.diagnostics.ess }));
    }
    let mut warnings = Vec::new();
    let oracle = if f.is_zero() || l.dim == 1 {
        match poincare_model(&m, Some(&f), sc.intervals) {
            Ok(o) => Some(o),
            Err(e) => {
                warnings.push(format!("oracle unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    let decay = if l.decay_chains > 0 {
        let mut start = vec![0.0; l.dim];
        start[0] = l.decay_init;
        let ecfg = ChainConfig { h: l.h, steps: l.decay_steps, burn_in: 0, seed: chain_seed(sc.seed, usize::MAX / 2), init: start };
        let series = ensemble_series(&target, &ecfg, l.decay_chains, &|x: &[f64]| x[0])?;
        let stationary = if f.is_zero() && matches!(l.measure, BaseSpec::Gaussian { .. }) { Some(0.0) } else { None };
        let fit = fit_decay_rate(&series, stationary, 0.5);
        if fit.flagged {
            warnings.push(format!("decay fit flagged (R² = {:.3}, {} points)", fit.r_squared, fit.points));
        }
        Some(fit)
    } else {
        None
    };
    let details = json!({
        "target": m.name(),
        "perturbation": f.kind.name(),
        "chains": chains,
        "oracle_poincare": oracle.as_ref().map(|o| o.constant),
        "oracle_rate": oracle.as_ref().map(|o| 1.0 / o.constant),
        "decay": decay,
    });
    let dumped = if opts.dump_samples { traces } else { Vec::new() };
    Ok((csv_table(&CHAIN_COLUMNS, table), Vec::new(), warnings, details, dumped))
}

/// Largest relative error between the analytic gradient of the posterior
/// log-density and central differences, at points away from the kinks.
pub fn regression_gradient_check(p: &crate::regress::RegressionProblem, spec: &PosteriorSpec, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let l: Vec<f64> = (0..p.m).map(|_| rng.random_range(0.1..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let (_, g) = posterior_log_density(p, spec, &l);
        for j in 0..p.m {
            let eps = 1e-6;
            let mut a = l.clone();
            let mut b = l.clone();
            a[j] += eps;
            b[j] -= eps;
            let fd = (posterior_log_density(p, spec, &a).0 - posterior_log_density(p, spec, &b).0) / (2.0 * eps);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    worst
}

/// Tolerance of [`regression_gradient_check`].
pub const GRADIENT_CHECK_TOL: f64 = 1e-5;

fn run_regress(sc: &Scenario) -> Result<KindOutput, ScenarioError> {
    let r = sc.regress.clone().unwrap_or_default();
    let p = generate_problem(r.n, r.m, r.sparsity, r.noise_sd, r.design, sc.seed)?;
    let spec = PosteriorSpec { beta: r.beta, alpha: r.alpha, tau: r.tau, radius: None };
    let k = RegressionConstants { euclidean: r.euclidean, ..Default::default() };
    let gated = check_regression_gated(&p, &spec, &k, &ParamSearch::default())?;
    let orth = check_orthogonal_gated(&p, &spec, &k)?;
    let grad_err = regression_gradient_check(&p, &spec, 8, sc.seed);
    let mut warnings = Vec::new();
    if grad_err > GRADIENT_CHECK_TOL {
        warnings.push(format!("gradient check error {grad_err:.3e}"));
    }
    let oracle = if p.is_orthogonal() { Some(posterior_oracle(&p, &spec, sc.intervals)?) } else { None };
    let o = oracle.as_ref().map_or(f64::NAN, |o| o.constant);
    let mut bounds: Vec<&BoundResult> = vec![&gated.gated];
    bounds.extend(gated.prior.iter());
    bounds.extend(gated.constructive.iter());
    bounds.push(&orth.gated);
    let name = format!("regression(n={},M={},s={})", r.n, r.m, r.sparsity);
    let spec_name = format!("alpha={},beta={},tau={}", r.alpha, r.beta, r.tau);
    let rows: Vec<SweepRow> = bounds.iter().map(|b| bound_row(0, &name, &spec_name, b, o, sc.tolerance)).collect();
    let cfg = ChainConfig { h: r.h, steps: r.steps, burn_in: r.burn_in, seed: sc.seed, init: vec![0.0; r.m] };
    let eopts = EstimationOptions { decay_chains: r.decay_chains, decay_steps: r.decay_steps, ..Default::default() };
    let est = run_estimation(&p, &spec, &cfg, &eopts, gated.constructive.as_ref())?;
    if est.decay.as_ref().is_some_and(|d| d.flagged) {
        warnings.push("decay fit flagged".into());
    }
    let details = json!({
        "q": gated.q,
        "q_prime": orth.q,
        "sup_inner": gated.sup_inner,
        "lipschitz": gated.lipschitz,
        "gated": gated.gated.flat(),
        "gated_orthogonal": orth.gated.flat(),
        "prior": gated.prior.as_ref().map(|b| b.flat()),
        "constructive": gated.constructive.as_ref().map(|b| b.flat()),
        "oracle_poincare": oracle.as_ref().map(|o| o.constant),
        "gradient_check_error": grad_err,
        "estimation": est,
    });
    Ok((bound_csv(&rows), rows, warnings, details, Vec::new()))
}

fn run_compare(sc: &Scenario) -> Result<KindOutput, ScenarioError> {
    let c = sc.compare.as_ref().expect("validated");
    let m = c.measure.build(1).map_err(SweepError::from)?;
    let search = ParamSearch::default();
    let mut rows = Vec::new();
    let mut regimes = Vec::new();
    let mut warnings = Vec::new();
    let mut index = 0;
    for &a in &c.amplitudes {
        for &w in &c.widths {
            let spec = PertSpec::Bump { amplitude: a, width: w, center: c.center };
            let f = spec.build(&m);
            let o = instance_oracles(&m, &f, sc.intervals)?;
            if o.c_p.low_confidence {
                warnings.push(format!("instance {index}: low-confidence oracle"));
            }
            let hs = bound_holley_stroock(o.c_p_mu, Quantity::Poincare, f.meta.oscillation).map_err(SweepError::from)?;
            let lip = match f.meta.lipschitz {
                Certified::Finite(l) => Some(bound_lipschitz_poincare(o.c_p_mu, l, &search).map_err(SweepError::from)?),
                _ => None,
            };
            let value = |b: &BoundResult| b.value.filter(|_| b.applicable);
            let (hv, lv) = (value(&hs), lip.as_ref().and_then(value));
            let winner = match (hv, lv) {
                (Some(h), Some(l)) if h < l => "holley_stroock",
                (Some(h), Some(l)) if l < h => "lipschitz_poincare",
                (Some(_), Some(_)) => "tie",
                (Some(_), None) => "holley_stroock",
                (None, Some(_)) => "lipschitz_poincare",
                (None, None) => "none",
            };
            regimes.push(json!({
                "instance": index,
                "amplitude": a,
                "width": w,
                "lipschitz": f.meta.lipschitz.finite(),
                "oscillation": f.meta.oscillation.finite(),
                "holley_stroock": hv,
                "lipschitz_poincare": lv,
                "oracle": o.c_p.constant,
                "winner": winner,
            }));
            rows.push(bound_row(index, &m.name(), &f.kind.name(), &hs, o.c_p.constant, sc.tolerance));
            if let Some(l) = &lip {
                rows.push(bound_row(index, &m.name(), &f.kind.name(), l, o.c_p.constant, sc.tolerance));
            }
            index += 1;
        }
    }
    let mut wins: BTreeMap<String, usize> = BTreeMap::new();
    for r in &regimes {
        *wins.entry(r["winner"].as_str().unwrap_or("none").to_string()).or_default() += 1;
    }
    Ok((bound_csv(&rows), rows, warnings, json!({ "regimes": regimes, "wins": wins }), Vec::new()))
}
