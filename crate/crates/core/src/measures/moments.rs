//! Moments and exponential moments of `μ` and `μ_F` by tensor quadrature.

use serde::{Deserialize, Serialize};

use super::perturbation::generator_quantity;
use super::quadrature::{log_sum_exp, QuadratureSpec, Rule1D};
use super::{MeasureError, MeasureModel, Perturbation};

/// Integrand of an exponential moment `ln μ_F(e^{c·h})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExpTag {
    /// `h = F` under `μ_F`.
    SF,
    /// `h = |∇F|²` under `μ_F`.
    GradSq,
    /// `h = AF − ½|∇F|²` under `μ_F`.
    Generator,
    /// `ln μ(e^{−cF})` under the base measure.
    BaseNegF,
}

impl ExpTag {
    pub fn name(self) -> &'static str {
        match self {
            ExpTag::SF => "exp_sF",
            ExpTag::GradSq => "exp_gradF2",
            ExpTag::Generator => "exp_generator",
            ExpTag::BaseNegF => "base_exp_negF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentRequest {
    FirstAbs,
    Second,
    Sigma2,
    GradFL1,
    GradFL2Sq,
    GeneratorPlus,
    /// `μ(F)` under the base measure.
    MeanFBase,
    /// `μ^{1/2}(e^{−2F}) / μ(e^{−F})`.
    MRatio,
    Exp(ExpTag, f64),
}

impl MomentRequest {
    pub fn name(&self) -> String {
        match self {
            MomentRequest::FirstAbs => "first_abs".into(),
            MomentRequest::Second => "second".into(),
            MomentRequest::Sigma2 => "sigma2".into(),
            MomentRequest::GradFL1 => "grad_F_l1".into(),
            MomentRequest::GradFL2Sq => "grad_F_l2sq".into(),
            MomentRequest::GeneratorPlus => "generator_plus".into(),
            MomentRequest::MeanFBase => "mean_F".into(),
            MomentRequest::MRatio => "m_ratio".into(),
            MomentRequest::Exp(tag, c) => format!("{}[{c}]", tag.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentValue {
    Finite(f64),
    Diverges,
}

impl MomentValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            MomentValue::Finite(v) => Some(v),
            MomentValue::Diverges => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMoment {
    pub tag: ExpTag,
    pub coef: f64,
    /// Natural log of the exponential moment.
    pub value: MomentValue,
}

/// Moments consumed by the calculators; every entry is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub first_abs: Option<f64>,
    pub second: Option<f64>,
    pub sigma2: Option<f64>,
    pub grad_f_l1: Option<f64>,
    pub grad_f_l2sq: Option<f64>,
    pub generator_plus: Option<f64>,
    pub mean_f_base: Option<f64>,
    pub m_ratio: Option<f64>,
    /// `μ(|∇H|²)` for a caller-chosen `H` with `Hess H ≥ Id`.
    pub grad_h_l2sq: Option<f64>,
    pub exp_moments: Vec<ExpMoment>,
}

impl MomentSet {
    /// Log exponential moment for `(tag, coef)`, if stored.
    pub fn exp(&self, tag: ExpTag, coef: f64) -> Option<MomentValue> {
        self.exp_moments.iter().find(|e| e.tag == tag && e.coef == coef).map(|e| e.value)
    }

    pub fn set_exp(&mut self, tag: ExpTag, coef: f64, value: MomentValue) {
        if let Some(e) = self.exp_moments.iter_mut().find(|e| e.tag == tag && e.coef == coef) {
            e.value = value;
        } else {
            self.exp_moments.push(ExpMoment { tag, coef, value });
        }
    }

    /// All stored coefficients for `tag`, sorted ascending, with finite values.
    pub fn exp_curve(&self, tag: ExpTag) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self.exp_moments.iter().filter(|e| e.tag == tag).filter_map(|e| e.value.finite().map(|v| (e.coef, v))).collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub set: MomentSet,
    /// Relative change of each value when the node count is halved.
    pub self_check: Vec<(String, f64)>,
    pub diverged: Vec<String>,
    pub warnings: Vec<String>,
    pub nodes_per_axis: usize,
}

/// Relative change above which the halving self-check raises a warning.
pub const SELF_CHECK_TOL: f64 = 1e-3;
const EDGE_MARGIN: f64 = 30.0;
const MAX_WIDENINGS: usize = 6;

struct Grid {
    dim: usize,
    points: Vec<f64>,
    /// log quadrature weight minus V.
    log_w: Vec<f64>,
    /// Per-point flags: which unbounded sides the point lies on.
    on_edge: Vec<bool>,
}

fn build_grid(m: &MeasureModel, windows: &[(f64, f64)], nodes: usize) -> Grid {
    let dim = m.dim;
    let rules: Vec<Rule1D> = (0..dim)
        .map(|a| {
            let kinks = m.axis_model(a).map(|am| am.kinks_1d()).unwrap_or_default();
            let (lo, hi) = windows[a];
            let mut breaks = kinks;
            breaks.push(0.0);
            Rule1D::composite(lo, hi, &breaks, nodes)
        })
        .collect();
    let bounded: Vec<(bool, bool)> = (0..dim).map(|a| m.axis_bounded(a)).collect();
    let total: usize = rules.iter().map(|r| r.len()).product();
    let mut points = Vec::with_capacity(total * dim);
    let mut log_w = Vec::with_capacity(total);
    let mut on_edge = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    for _ in 0..total {
        let mut lw = 0.0;
        let mut edge = false;
        for a in 0..dim {
            let r = &rules[a];
            x[a] = r.nodes[idx[a]];
            lw += r.weights[idx[a]].ln();
            let last = r.len() - 1;
            if (idx[a] == 0 && !bounded[a].0) || (idx[a] == last && !bounded[a].1) {
                edge = true;
            }
        }
        let v = m.potential(&x);
        points.extend_from_slice(&x);
        log_w.push(lw - v);
        on_edge.push(edge);
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] < rules[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
    Grid { dim, points, log_w, on_edge }
}

impl Grid {
    fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    fn len(&self) -> usize {
        self.log_w.len()
    }

    /// True when the log-integrand is negligible on every unbounded edge.
    fn edges_negligible(&self, log_integrand: &[f64]) -> bool {
        let max = log_integrand.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return max == f64::NEG_INFINITY;
        }
        let edge_max = log_integrand.iter().zip(&self.on_edge).filter(|(_, e)| **e).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
        edge_max < max - EDGE_MARGIN
    }
}

/// Per-point values shared by all requests.
struct Evaluated {
    f: Vec<f64>,
    grad_sq: Vec<f64>,
    generator: Vec<f64>,
}

fn evaluate(grid: &Grid, m: &MeasureModel, f: &Perturbation, need_grad: bool, need_gen: bool) -> Evaluated {
    let n = grid.len();
    let mut fv = Vec::with_capacity(n);
    let mut grad_sq = Vec::new();
    let mut generator = Vec::new();
    let mut g = vec![0.0; grid.dim];
    for k in 0..n {
        let x = grid.point(k);
        fv.push(f.value(x));
        if need_grad {
            f.gradient(x, &mut g);
            grad_sq.push(g.iter().map(|v| v * v).sum());
        }
        if need_gen {
            generator.push(generator_quantity(m, &f.kind, x));
        }
    }
    Evaluated { f: fv, grad_sq, generator }
}

enum Outcome {
    Value(f64),
    NeedsWider,
}

fn weighted_mean(logp: &[f64], lz: f64, values: impl Fn(usize) -> f64) -> f64 {
    logp.iter().enumerate().map(|(k, lp)| (lp - lz).exp() * values(k)).sum()
}

fn compute_one(req: MomentRequest, grid: &Grid, ev: &Evaluated) -> Result<Outcome, MeasureError> {
    let base: &[f64] = &grid.log_w;
    let pert: Vec<f64> = base.iter().zip(&ev.f).map(|(w, f)| w - f).collect();
    let lz_base = log_sum_exp(base.iter().copied());
    let lz_f = log_sum_exp(pert.iter().copied());
    if !lz_f.is_finite() {
        return Err(MeasureError::NotIntegrable("μ_F has no finite normalizing constant".into()));
    }
    let needs_f = !matches!(req, MomentRequest::MeanFBase | MomentRequest::MRatio | MomentRequest::Exp(ExpTag::BaseNegF, _));
    if needs_f && !grid.edges_negligible(&pert) {
        return Ok(Outcome::NeedsWider);
    }
    // For signed or plain moments the integrand is checked through log|g|.
    let check = |logp: &[f64], g: &dyn Fn(usize) -> f64| -> bool {
        let li: Vec<f64> = logp.iter().enumerate().map(|(k, lp)| lp + g(k).abs().ln()).collect();
        grid.edges_negligible(&li)
    };
    let dim = grid.dim;
    let mean_f = |logp: &[f64], lz: f64| -> Vec<f64> {
        (0..dim).map(|a| weighted_mean(logp, lz, |k| grid.point(k)[a])).collect()
    };
    let value = match req {
        MomentRequest::FirstAbs | MomentRequest::Second | MomentRequest::Sigma2 => {
            let mu = mean_f(&pert, lz_f);
            let dist2 = |k: usize| grid.point(k).iter().zip(&mu).map(|(x, m)| (x - m) * (x - m)).sum::<f64>();
            if !check(&pert, &dist2) {
                return Ok(Outcome::NeedsWider);
            }
            match req {
                MomentRequest::FirstAbs => weighted_mean(&pert, lz_f, |k| dist2(k).sqrt()),
                MomentRequest::Second => weighted_mean(&pert, lz_f, dist2),
                _ => {
                    let mut cov = nalgebra::DMatrix::<f64>::zeros(dim, dim);
                    for i in 0..dim {
                        for j in 0..=i {
                            let c = weighted_mean(&pert, lz_f, |k| {
                                let x = grid.point(k);
                                (x[i] - mu[i]) * (x[j] - mu[j])
                            });
                            cov[(i, j)] = c;
                            cov[(j, i)] = c;
                        }
                    }
                    cov.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            }
        }
        MomentRequest::GradFL1 | MomentRequest::GradFL2Sq => {
            let g = |k: usize| ev.grad_sq[k];
            if !check(&pert, &g) {
                return Ok(Outcome::NeedsWider);
            }
            if req == MomentRequest::GradFL1 {
                weighted_mean(&pert, lz_f, |k| ev.grad_sq[k].sqrt())
            } else {
                weighted_mean(&pert, lz_f, g)
            }
        }
        MomentRequest::GeneratorPlus => {
            let g = |k: usize| ev.generator[k].max(0.0);
            if !check(&pert, &g) {
                return Ok(Outcome::NeedsWider);
            }
            weighted_mean(&pert, lz_f, g)
        }
        MomentRequest::MeanFBase => {
            let g = |k: usize| ev.f[k];
            if !grid.edges_negligible(base) || !check(base, &g) {
                return Ok(Outcome::NeedsWider);
            }
            weighted_mean(base, lz_base, g)
        }
        MomentRequest::MRatio => {
            let l2: Vec<f64> = base.iter().zip(&ev.f).map(|(w, f)| w - 2.0 * f).collect();
            if !grid.edges_negligible(&l2) || !grid.edges_negligible(&pert) || !grid.edges_negligible(base) {
                return Ok(Outcome::NeedsWider);
            }
            let ln_2 = log_sum_exp(l2) - lz_base;
            let ln_1 = lz_f - lz_base;
            (0.5 * ln_2 - ln_1).exp()
        }
        MomentRequest::Exp(tag, c) => {
            let (logp, lz, h): (&[f64], f64, &[f64]) = match tag {
                ExpTag::SF => (&pert, lz_f, &ev.f),
                ExpTag::GradSq => (&pert, lz_f, &ev.grad_sq),
                ExpTag::Generator => (&pert, lz_f, &ev.generator),
                ExpTag::BaseNegF => (base, lz_base, &ev.f),
            };
            let sign = if tag == ExpTag::BaseNegF { -1.0 } else { 1.0 };
            let li: Vec<f64> = logp.iter().zip(h).map(|(lp, h)| lp + sign * c * h).collect();
            if !grid.edges_negligible(&li) {
                return Ok(Outcome::NeedsWider);
            }
            log_sum_exp(li) - lz
        }
    };
    if !value.is_finite() {
        return Ok(Outcome::NeedsWider);
    }
    Ok(Outcome::Value(value))
}

fn widen(m: &MeasureModel, windows: &[(f64, f64)]) -> Vec<(f64, f64)> {
    windows
        .iter()
        .enumerate()
        .map(|(a, (lo, hi))| {
            let (bl, bh) = m.axis_bounded(a);
            let w = 0.5 * (hi - lo);
            (if bl { *lo } else { lo - w }, if bh { *hi } else { hi + w })
        })
        .collect()
}

fn store(set: &mut MomentSet, req: MomentRequest, v: MomentValue) {
    let fin = v.finite();
    match req {
        MomentRequest::FirstAbs => set.first_abs = fin,
        MomentRequest::Second => set.second = fin,
        MomentRequest::Sigma2 => set.sigma2 = fin,
        MomentRequest::GradFL1 => set.grad_f_l1 = fin,
        MomentRequest::GradFL2Sq => set.grad_f_l2sq = fin,
        MomentRequest::GeneratorPlus => set.generator_plus = fin,
        MomentRequest::MeanFBase => set.mean_f_base = fin,
        MomentRequest::MRatio => set.m_ratio = fin,
        MomentRequest::Exp(tag, c) => set.set_exp(tag, c, v),
    }
}

fn separable_moments(m: &MeasureModel, requests: &[MomentRequest], spec: &QuadratureSpec) -> Result<MomentReport, MeasureError> {
    let mut report = MomentReport { nodes_per_axis: spec.nodes_per_axis, ..Default::default() };
    let mut variances = Vec::with_capacity(m.dim);
    for a in 0..m.dim {
        let axis = m.axis_model(a)?;
        let r = compute_moments(&axis, &Perturbation::zero(1), &[MomentRequest::Second], spec)?;
        variances.push(r.set.second.ok_or_else(|| MeasureError::NotIntegrable(format!("axis {a} has no finite variance")))?);
        report.self_check.extend(r.self_check.into_iter().map(|(k, v)| (format!("{k}@axis{a}"), v)));
        report.warnings.extend(r.warnings);
    }
    for req in requests {
        let v = match req {
            MomentRequest::Second => variances.iter().sum(),
            MomentRequest::Sigma2 => variances.iter().copied().fold(0.0, f64::max),
            MomentRequest::GradFL1 | MomentRequest::GradFL2Sq | MomentRequest::GeneratorPlus | MomentRequest::MeanFBase => 0.0,
            MomentRequest::MRatio => 1.0,
            MomentRequest::Exp(..) => 0.0,
            MomentRequest::FirstAbs => {
                return Err(MeasureError::Unsupported("first absolute moment needs full quadrature (n <= 3)".into()));
            }
        };
        store(&mut report.set, *req, MomentValue::Finite(v));
    }
    Ok(report)
}

/// Computes the requested moments of `μ` / `μ_F`.
///
/// Tensor quadrature is used for `n ≤ 3`; larger separable models are
/// supported for `F = 0` through per-axis variances. Exponential moments
/// whose integrand keeps mass at the edge of every widened window are
/// reported as diverging.
pub fn compute_moments(m: &MeasureModel, f: &Perturbation, requests: &[MomentRequest], spec: &QuadratureSpec) -> Result<MomentReport, MeasureError> {
    if f.dim != m.dim {
        return Err(MeasureError::DimensionMismatch { expected: m.dim, got: f.dim });
    }
    if m.dim > 3 {
        if f.is_zero() && m.is_separable() {
            return separable_moments(m, requests, spec);
        }
        return Err(MeasureError::Unsupported(format!("tensor quadrature is limited to n <= 3 (got n = {})", m.dim)));
    }
    let nodes = spec.effective_nodes(m.dim);
    let mut windows = Vec::with_capacity(m.dim);
    for a in 0..m.dim {
        windows.push(match spec.truncation {
            Some(t) => {
                let (lo, hi) = m.axis_window(a, spec.tail_drop)?;
                let (bl, bh) = m.axis_bounded(a);
                (if bl { lo } else { -t }, if bh { hi } else { t })
            }
            None => m.axis_window(a, spec.tail_drop)?,
        });
    }
    let need_grad = requests.iter().any(|r| matches!(r, MomentRequest::GradFL1 | MomentRequest::GradFL2Sq | MomentRequest::Exp(ExpTag::GradSq, _)));
    let need_gen = requests.iter().any(|r| matches!(r, MomentRequest::GeneratorPlus | MomentRequest::Exp(ExpTag::Generator, _)));

    let mut report = MomentReport { nodes_per_axis: nodes, ..Default::default() };
    let mut pending: Vec<MomentRequest> = requests.to_vec();
    let mut final_windows: Vec<(MomentRequest, Vec<(f64, f64)>, f64)> = Vec::new();
    for attempt in 0..=MAX_WIDENINGS {
        if pending.is_empty() {
            break;
        }
        let grid = build_grid(m, &windows, nodes);
        let ev = evaluate(&grid, m, f, need_grad, need_gen);
        let mut still = Vec::new();
        for req in pending {
            match compute_one(req, &grid, &ev)? {
                Outcome::Value(v) => final_windows.push((req, windows.clone(), v)),
                Outcome::NeedsWider => still.push(req),
            }
        }
        pending = still;
        if attempt < MAX_WIDENINGS {
            windows = widen(m, &windows);
        }
    }
    for req in pending {
        report.diverged.push(req.name());
        store(&mut report.set, req, MomentValue::Diverges);
    }

    // Self-check at half the node count on the same windows.
    let half = (nodes / 2).max(super::quadrature::PANEL_ORDER);
    for (req, win, v) in final_windows {
        store(&mut report.set, req, MomentValue::Finite(v));
        let grid = build_grid(m, &win, half);
        let ev = evaluate(&grid, m, f, need_grad, need_gen);
        if let Ok(Outcome::Value(v2)) = compute_one(req, &grid, &ev) {
            let scale = if matches!(req, MomentRequest::Exp(..)) { v.abs().max(1.0) } else { v.abs().max(1e-300) };
            let rel = (v - v2).abs() / scale;
            if rel > SELF_CHECK_TOL {
                report.warnings.push(format!("{} changes by {rel:.2e} when halving nodes", req.name()));
            }
            report.self_check.push((req.name(), rel));
        }
    }
    Ok(report)
}

/// `μ_F(g)` for an arbitrary integrand (tensor quadrature, `n ≤ 3`).
pub fn expectation(m: &MeasureModel, f: &Perturbation, g: &dyn Fn(&[f64]) -> f64, spec: &QuadratureSpec) -> Result<f64, MeasureError> {
    if m.dim > 3 {
        return Err(MeasureError::Unsupported("expectation needs n <= 3".into()));
    }
    let nodes = spec.effective_nodes(m.dim);
    let mut windows: Vec<(f64, f64)> = (0..m.dim).map(|a| m.axis_window(a, spec.tail_drop)).collect::<Result<_, _>>()?;
    for _ in 0..=MAX_WIDENINGS {
        let grid = build_grid(m, &windows, nodes);
        let logp: Vec<f64> = (0..grid.len()).map(|k| grid.log_w[k] - f.value(grid.point(k))).collect();
        let vals: Vec<f64> = (0..grid.len()).map(|k| g(grid.point(k))).collect();
        let li: Vec<f64> = logp.iter().zip(&vals).map(|(lp, v)| lp + v.abs().ln()).collect();
        if grid.edges_negligible(&logp) && grid.edges_negligible(&li) {
            let lz = log_sum_exp(logp.iter().copied());
            return Ok(weighted_mean(&logp, lz, |k| vals[k]));
        }
        windows = widen(m, &windows);
    }
    Err(MeasureError::NotIntegrable("integrand keeps mass at the truncation edge".into()))
}
