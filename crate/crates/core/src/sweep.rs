//! Randomized soundness sweeps: every calculator against the spectral oracle.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{bound_from_moments, bound_generator_poincare, bound_holley_stroock, bound_lipschitz_cheeger, bound_lipschitz_poincare, bound_logconcave_perturbation, BoundError, BoundResult, LogConcaveVariant, MomentVariant, ParamSearch, Quantity};
use crate::langevin::chain_seed;
use crate::measures::{compute_moments, Certified, MeasureError, MeasureModel, MomentRequest, MomentSet, Perturbation, PerturbationKind, QuadratureSpec};
use crate::mollify::{verify_mollified_bound, AtomicMeasure, MollifyError};
use crate::oracle::{cheeger_1d, cheeger_mean_1d, muckenhoupt_1d, poincare_1d, GridMeasure1D, OracleError, OracleResult, DEFAULT_INTERVALS};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Mollify(#[from] MollifyError),
}

/// One-dimensional base measure description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BaseSpec {
    Gaussian { rho: f64 },
    Exponential { alpha: f64 },
    Subbotin { p: f64 },
    Uniform { lo: f64, hi: f64 },
    DoubleWell { a: f64 },
}

impl BaseSpec {
    pub fn build(&self, dim: usize) -> Result<MeasureModel, MeasureError> {
        match *self {
            BaseSpec::Gaussian { rho } => MeasureModel::gaussian(rho, dim),
            BaseSpec::Exponential { alpha } => MeasureModel::exponential(alpha, dim),
            BaseSpec::Subbotin { p } => MeasureModel::subbotin(p, dim),
            BaseSpec::Uniform { lo, hi } => MeasureModel::uniform(lo, hi, dim),
            BaseSpec::DoubleWell { a } => MeasureModel::double_well(a, dim),
        }
    }
}

/// Perturbation description; coefficients are per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PertSpec {
    Zero,
    Linear { c: f64 },
    Abs { c: f64 },
    Bump { amplitude: f64, width: f64, center: f64 },
    Quadratic { rho: f64 },
}

impl PertSpec {
    pub fn kind(&self, dim: usize) -> PerturbationKind {
        match *self {
            PertSpec::Zero => PerturbationKind::Zero,
            PertSpec::Linear { c } => PerturbationKind::Linear { coef: vec![c; dim] },
            PertSpec::Abs { c } => PerturbationKind::AbsScaled { c },
            PertSpec::Bump { amplitude, width, center } => PerturbationKind::Bump { amplitude, width, center: vec![center; dim] },
            PertSpec::Quadratic { rho } => PerturbationKind::Quadratic { rho },
        }
    }

    pub fn build(&self, m: &MeasureModel) -> Perturbation {
        Perturbation::certify(self.kind(m.dim), m)
    }

    /// `F` is twice differentiable everywhere.
    pub fn smooth(&self) -> bool {
        !matches!(self, PertSpec::Abs { c } if *c != 0.0)
    }
}

/// Uniform draw from `[lo, hi)` rounded to 6 decimals, so configs reproduce instances exactly.
fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..hi) * 1e6).round() / 1e6
}

/// Random pair from the sweep families: Gaussian `ρ ∈ [0.5, 2]`, Subbotin
/// `p ∈ [1, 3]`, double well `x⁴ − a x²` with `a ∈ [0, 0.5]`; `F` linear,
/// `c|x|`, a bump, or a small convex quadratic.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (BaseSpec, PertSpec) {
    let base = match rng.random_range(0..3) {
        0 => BaseSpec::Gaussian { rho: draw(rng, 0.5, 2.0) },
        1 => BaseSpec::Subbotin { p: draw(rng, 1.0, 3.0) },
        _ => BaseSpec::DoubleWell { a: draw(rng, 0.0, 0.5) },
    };
    let pert = match rng.random_range(0..4) {
        0 => PertSpec::Linear { c: draw(rng, -1.0, 1.0) },
        1 => PertSpec::Abs { c: draw(rng, 0.0, 1.0) },
        2 => PertSpec::Bump { amplitude: draw(rng, -1.0, 1.0), width: draw(rng, 0.5, 2.0), center: draw(rng, -1.0, 1.0) },
        _ => PertSpec::Quadratic { rho: draw(rng, 0.0, 0.5) },
    };
    (base, pert)
}

/// Random atomic measure and bandwidth for the mollification check.
pub fn random_mollify_instance(rng: &mut ChaCha8Rng) -> (AtomicMeasure, f64) {
    let r = draw(rng, 0.2, 1.5);
    let k = rng.random_range(1..=4);
    let mut atoms = vec![(vec![if rng.random::<bool>() { r } else { -r }], draw(rng, 0.2, 1.0))];
    for _ in 1..k {
        atoms.push((vec![draw(rng, -r, r)], draw(rng, 0.2, 1.0)));
    }
    let sigma = r * draw(rng, 0.4, 3.0);
    (AtomicMeasure::new(atoms).expect("positive weights"), sigma)
}

/// Oracle constants of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOracles {
    pub c_p_mu: f64,
    pub c_c_mean_mu: f64,
    pub c_p: OracleResult,
    pub c_c_median: OracleResult,
    pub c_c_mean: OracleResult,
    pub muckenhoupt: OracleResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub instance: usize,
    pub base: String,
    pub perturbation: String,
    pub theorem: String,
    pub quantity: String,
    pub applicable: bool,
    pub bound: Option<f64>,
    pub oracle: f64,
    pub ratio: Option<f64>,
    pub violation: bool,
    pub params: String,
    pub margins: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub base: Option<BaseSpec>,
    pub perturbation: Option<PertSpec>,
    pub mu_f_log_concave: bool,
    pub oracles: Option<InstanceOracles>,
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub seed: u64,
    /// Perturbation instances per batch.
    pub instances: usize,
    pub mollify_instances: usize,
    /// Keep adding batches until every listed theorem has this many applicable rows.
    pub min_applicable: usize,
    pub max_instances: usize,
    pub intervals: usize,
    /// A row is a violation when `bound < oracle · (1 − tolerance)`.
    pub tolerance: f64,
    /// Theorem names to keep; empty keeps all.
    pub theorems: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { seed: 1, instances: 200, mollify_instances: 200, min_applicable: 0, max_instances: 10_000, intervals: DEFAULT_INTERVALS, tolerance: 1e-3, theorems: Vec::new() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremSummary {
    pub rows: usize,
    pub applicable: usize,
    pub violations: usize,
    pub min_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub records: Vec<InstanceRecord>,
    pub summary: BTreeMap<String, TheoremSummary>,
}

impl SweepOutcome {
    pub fn rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.records.iter().flat_map(|r| r.rows.iter())
    }

    pub fn violations(&self) -> usize {
        self.summary.values().map(|s| s.violations).sum()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.records.iter().flat_map(|r| r.warnings.iter().map(move |w| format!("instance {}: {w}", r.index))).collect()
    }
}

fn quantity_name(q: Quantity) -> String {
    serde_json::to_value(q).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// One comparison row. Rows of untraced bounds are never counted as violations.
pub fn bound_row(index: usize, base: &str, pert: &str, b: &BoundResult, oracle: f64, tol: f64) -> SweepRow {
    let flat = b.flat();
    let ratio = b.value.filter(|_| b.applicable).map(|v| v / oracle);
    SweepRow {
        instance: index,
        base: base.into(),
        perturbation: pert.into(),
        theorem: flat.theorem,
        quantity: quantity_name(b.quantity),
        applicable: b.applicable,
        bound: b.value,
        oracle,
        ratio,
        violation: !b.untraced && ratio.is_some_and(|r| r < 1.0 - tol),
        params: flat.params,
        margins: flat.margins,
    }
}

/// `μ_F` is log-concave by curvature certificates.
pub fn certified_log_concave(m: &MeasureModel, f: &Perturbation) -> bool {
    match (m.curvature_lower(), f.meta.curvature_lower) {
        (Some(a), Certified::Finite(b)) => a + b >= 0.0,
        _ => false,
    }
}

/// Oracle constants for `μ` and `μ_F`.
pub fn instance_oracles(m: &MeasureModel, f: &Perturbation, intervals: usize) -> Result<InstanceOracles, SweepError> {
    let g_mu = GridMeasure1D::from_model(m, None, intervals)?;
    let g_f = GridMeasure1D::from_model(m, Some(f), intervals)?;
    let c_p_mu = match m.known.c_p {
        Some(c) => c,
        None => poincare_1d(&g_mu)?.constant,
    };
    Ok(InstanceOracles {
        c_p_mu,
        c_c_mean_mu: cheeger_mean_1d(&g_mu)?.constant,
        c_p: poincare_1d(&g_f)?,
        c_c_median: cheeger_1d(&g_f)?,
        c_c_mean: cheeger_mean_1d(&g_f)?,
        muckenhoupt: muckenhoupt_1d(&g_f)?,
    })
}

/// Every calculator that takes a 1D `(V, F)` pair, evaluated against the oracle.
pub fn evaluate_instance(index: usize, base: &BaseSpec, pert: &PertSpec, intervals: usize, tol: f64) -> Result<InstanceRecord, SweepError> {
    let m = base.build(1)?;
    let f = pert.build(&m);
    let (bname, fname) = (m.name(), f.kind.name());
    let lc = certified_log_concave(&m, &f);
    let o = instance_oracles(&m, &f, intervals)?;
    let mut warnings = Vec::new();
    for r in [&o.c_p, &o.c_c_median, &o.c_c_mean] {
        if r.low_confidence {
            warnings.push(format!("low-confidence {:?} oracle (richardson {:.2e})", r.kind, r.richardson_error));
        }
    }
    let mut requests = vec![MomentRequest::GradFL1, MomentRequest::GradFL2Sq, MomentRequest::Second, MomentRequest::FirstAbs];
    if pert.smooth() {
        requests.push(MomentRequest::GeneratorPlus);
    }
    let report = compute_moments(&m, &f, &requests, &QuadratureSpec::default())?;
    warnings.extend(report.warnings.iter().cloned());
    let moments: MomentSet = report.set;
    let search = ParamSearch::default();

    let (cp, ccm) = (o.c_p.constant, o.c_c_median.constant);
    let mut rows = Vec::new();
    let mut push = |b: BoundResult, oracle: f64| rows.push(bound_row(index, &bname, &fname, &b, oracle, tol));

    push(bound_holley_stroock(o.c_p_mu, Quantity::Poincare, f.meta.oscillation)?, cp);
    if let Certified::Finite(l) = f.meta.lipschitz {
        push(bound_lipschitz_poincare(o.c_p_mu, l, &search)?, cp);
        push(bound_lipschitz_cheeger(o.c_c_mean_mu, l)?, ccm);
    }
    if let Certified::Finite(g) = f.meta.generator_plus_sup {
        if pert.smooth() {
            push(bound_generator_poincare(o.c_p_mu, g, m.is_restricted(), f.meta.boundary_ok.unwrap_or(false))?, cp);
        }
    }
    for b in bound_logconcave_perturbation(o.c_p_mu, &moments, LogConcaveVariant::L2, lc, m.flags.log_concave, &search)? {
        push(b, cp);
    }
    for b in bound_logconcave_perturbation(o.c_p_mu, &moments, LogConcaveVariant::Cheeger { c_c_mu: o.c_c_mean_mu }, lc, m.flags.log_concave, &search)? {
        let target = if b.quantity == Quantity::Poincare { cp } else { ccm };
        push(b, target);
    }
    if pert.smooth() {
        for b in bound_logconcave_perturbation(o.c_p_mu, &moments, LogConcaveVariant::Generator, lc, m.flags.log_concave, &search)? {
            push(b, cp);
        }
    }
    for b in bound_from_moments(&moments, MomentVariant::Variance, lc)? {
        push(b, cp);
    }
    for b in bound_from_moments(&moments, MomentVariant::CheegerFirstMoment, lc)? {
        push(b, ccm);
    }
    Ok(InstanceRecord { index, base: Some(base.clone()), perturbation: Some(pert.clone()), mu_f_log_concave: lc, oracles: Some(o), rows, warnings })
}

/// Mollified-measure check as a sweep record.
pub fn evaluate_mollify(index: usize, nu: &AtomicMeasure, sigma: f64, intervals: usize, tol: f64) -> Result<InstanceRecord, SweepError> {
    let c = verify_mollified_bound(nu, sigma, &ParamSearch::default(), intervals)?;
    let bname = format!("atoms(k={},R={})", nu.weights.len(), nu.radius);
    let fname = format!("sigma={sigma}");
    let mut warnings = Vec::new();
    if c.oracle.low_confidence {
        warnings.push(format!("low-confidence oracle (richardson {:.2e})", c.oracle.richardson_error));
    }
    let rows = vec![bound_row(index, &bname, &fname, &c.bound, c.oracle.constant, tol)];
    Ok(InstanceRecord { index, base: None, perturbation: None, mu_f_log_concave: false, oracles: None, rows, warnings })
}

pub fn summarize(records: &[InstanceRecord], keep: &[String]) -> BTreeMap<String, TheoremSummary> {
    let mut out: BTreeMap<String, TheoremSummary> = BTreeMap::new();
    for r in records.iter().flat_map(|r| r.rows.iter()) {
        if !keep.is_empty() && !keep.contains(&r.theorem) {
            continue;
        }
        let s = out.entry(r.theorem.clone()).or_default();
        s.rows += 1;
        if r.applicable {
            s.applicable += 1;
        }
        if r.violation {
            s.violations += 1;
        }
        if let Some(x) = r.ratio {
            s.min_ratio = Some(s.min_ratio.map_or(x, |m: f64| m.min(x)));
        }
    }
    out
}

/// Runs batches of random instances in parallel. Records are ordered by
/// instance index and depend only on `(seed, index)`, never on scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome, SweepError> {
    let mut records: Vec<InstanceRecord> = Vec::new();
    let mut next = 0usize;
    let enough = |records: &[InstanceRecord]| {
        if cfg.min_applicable == 0 {
            return true;
        }
        let s = summarize(records, &cfg.theorems);
        let wanted: Vec<String> = if cfg.theorems.is_empty() { s.keys().cloned().collect() } else { cfg.theorems.clone() };
        wanted.iter().all(|t| s.get(t).is_some_and(|x| x.applicable >= cfg.min_applicable))
    };
    loop {
        let batch = cfg.instances.min(cfg.max_instances.saturating_sub(next));
        if batch == 0 {
            break;
        }
        let mut new: Vec<InstanceRecord> = (next..next + batch)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(cfg.seed, i));
                let (b, p) = random_instance(&mut rng);
                evaluate_instance(i, &b, &p, cfg.intervals, cfg.tolerance)
            })
            .collect::<Result<_, _>>()?;
        records.append(&mut new);
        next += batch;
        if enough(&records) {
            break;
        }
    }
    let offset = cfg.max_instances.max(next);
    let mut moll: Vec<InstanceRecord> = (0..cfg.mollify_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(chain_seed(cfg.seed ^ 0x6d6f_6c6c, i));
            let (nu, sigma) = random_mollify_instance(&mut rng);
            evaluate_mollify(offset + i, &nu, sigma, cfg.intervals, cfg.tolerance)
        })
        .collect::<Result<_, _>>()?;
    records.append(&mut moll);
    if !cfg.theorems.is_empty() {
        for r in records.iter_mut() {
            r.rows.retain(|row| cfg.theorems.contains(&row.theorem));
        }
    }
    let summary = summarize(&records, &cfg.theorems);
    Ok(SweepOutcome { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            assert_eq!(random_instance(&mut a), random_instance(&mut b));
        }
    }

    #[test]
    fn gaussian_linear_instance_is_sound() {
        let r = evaluate_instance(0, &BaseSpec::Gaussian { rho: 1.0 }, &PertSpec::Linear { c: 0.5 }, 2048, 1e-3).unwrap();
        assert!(r.mu_f_log_concave);
        // A shifted Gaussian has C_P = 1.
        assert!((r.oracles.as_ref().unwrap().c_p.constant - 1.0).abs() < 1e-3);
        assert!(r.rows.iter().all(|x| !x.violation), "{:?}", r.rows);
        assert!(r.rows.iter().any(|x| x.theorem == "lipschitz_poincare" && x.applicable));
    }

    #[test]
    fn small_sweep_has_no_violations() {
        let cfg = SweepConfig { instances: 12, mollify_instances: 4, intervals: 1024, ..Default::default() };
        let out = run_sweep(&cfg).unwrap();
        assert_eq!(out.violations(), 0, "{:?}", out.summary);
        let again = run_sweep(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&out.records).unwrap(), serde_json::to_string(&again.records).unwrap());
    }
}
