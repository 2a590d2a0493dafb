//! Ground-truth Poincaré and Cheeger constants for one-dimensional and
//! product measures.

pub mod tridiag;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::quadrature::log_sum_exp;
use crate::measures::{MeasureError, MeasureModel, Perturbation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("density vanishes at interior node x = {0}")]
    ZeroDensity(f64),
    #[error("eigen-solver failure: {0}")]
    Eigen(String),
    #[error("tail mass not certified: {0}")]
    Tail(String),
    #[error("integral diverges: {0}")]
    Divergent(String),
    #[error("empty product")]
    EmptyProduct,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Potential rise over which the oracle truncates. Much larger than the
/// quadrature rule because the spectral truncation error for exponential
/// tails decays only like `1/T²`.
pub const ORACLE_RISE: f64 = 100.0;
/// Default number of grid intervals.
pub const DEFAULT_INTERVALS: usize = 8192;
pub const MIN_NODES: usize = 256;
/// Richardson error above which a result is flagged.
pub const LOW_CONFIDENCE: f64 = 0.01;

pub type LogDensity1D = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Truncated, discretized one-dimensional measure.
#[derive(Clone)]
pub struct GridMeasure1D {
    pub nodes: Vec<f64>,
    /// Unnormalized log-density at the nodes.
    pub log_weights: Vec<f64>,
    /// Interval widths, `spacing[i] = nodes[i+1] - nodes[i]`.
    pub spacing: Vec<f64>,
    /// Unnormalized log-density at interval midpoints.
    pub mid_log_weights: Vec<f64>,
    source: LogDensity1D,
    window: (f64, f64),
    kinks: Vec<f64>,
}

impl std::fmt::Debug for GridMeasure1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridMeasure1D").field("window", &self.window).field("nodes", &self.nodes.len()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleKind {
    Poincare,
    CheegerMedian,
    CheegerMean,
    MuckenhouptInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub constant: f64,
    pub kind: OracleKind,
    /// Number of grid intervals used for `constant`.
    pub discretization: usize,
    /// Relative error estimated from the two-grid comparison.
    pub richardson_error: f64,
    pub low_confidence: bool,
}

/// Log of `∫_0^h exp(a + (b − a)t/h) dt`.
fn log_interval_mass(a: f64, b: f64, h: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let d = hi - lo;
    let log_mean = if d < 1e-8 {
        0.5 * (a + b)
    } else if d.is_infinite() {
        f64::NEG_INFINITY
    } else {
        hi + (-(-d).exp_m1()).ln() - d.ln()
    };
    h.ln() + log_mean
}

impl GridMeasure1D {
    /// Grid on `window` with `intervals` cells; `kinks` inside the window become nodes.
    pub fn new(log_density: LogDensity1D, window: (f64, f64), kinks: &[f64], intervals: usize) -> Result<Self, OracleError> {
        if intervals + 1 < MIN_NODES {
            return Err(OracleError::TooFewNodes { min: MIN_NODES, got: intervals + 1 });
        }
        let (lo, hi) = window;
        let mut edges = vec![lo];
        let mut inner: Vec<f64> = kinks.iter().copied().filter(|k| *k > lo && *k < hi).collect();
        inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
        inner.dedup();
        edges.extend(inner);
        edges.push(hi);
        let width = hi - lo;
        let mut nodes = vec![lo];
        let segments = edges.len() - 1;
        let mut remaining = intervals;
        for (s, seg) in edges.windows(2).enumerate() {
            let cells = if s + 1 == segments {
                remaining.max(1)
            } else {
                (((intervals as f64) * (seg[1] - seg[0]) / width).round() as usize).clamp(1, remaining.saturating_sub(segments - s - 1).max(1))
            };
            remaining = remaining.saturating_sub(cells);
            let h = (seg[1] - seg[0]) / cells as f64;
            for c in 1..cells {
                nodes.push(seg[0] + c as f64 * h);
            }
            nodes.push(seg[1]);
        }
        let mut log_weights: Vec<f64> = nodes.iter().map(|x| log_density(*x)).collect();
        // Drop leading/trailing nodes where the density vanishes (support edges).
        let first = log_weights.iter().position(|v| v.is_finite()).ok_or_else(|| OracleError::Tail("density vanishes on the whole window".into()))?;
        let last = log_weights.iter().rposition(|v| v.is_finite()).unwrap();
        nodes = nodes[first..=last].to_vec();
        log_weights = log_weights[first..=last].to_vec();
        if let Some(i) = log_weights.iter().position(|v| !v.is_finite()) {
            return Err(OracleError::ZeroDensity(nodes[i]));
        }
        let spacing: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let mid_log_weights: Vec<f64> = nodes
            .windows(2)
            .zip(log_weights.windows(2))
            .map(|(x, lw)| {
                let v = log_density(0.5 * (x[0] + x[1]));
                if v.is_finite() {
                    v
                } else {
                    0.5 * (lw[0] + lw[1])
                }
            })
            .collect();
        Ok(GridMeasure1D { nodes, log_weights, spacing, mid_log_weights, source: log_density, window, kinks: kinks.to_vec() })
    }

    /// Grid for `μ_F` (or `μ` when `f` is `None`) of a one-dimensional model,
    /// truncated where the potential has risen by [`ORACLE_RISE`].
    pub fn from_model(m: &MeasureModel, f: Option<&Perturbation>, intervals: usize) -> Result<Self, OracleError> {
        if m.dim != 1 {
            return Err(OracleError::Measure(MeasureError::DimensionMismatch { expected: 1, got: m.dim }));
        }
        let model = m.clone();
        let pert = f.cloned();
        let logp: LogDensity1D = Arc::new(move |x: f64| {
            let v = model.potential(&[x]);
            let fv = pert.as_ref().map_or(0.0, |p| p.value(&[x]));
            -(v + fv)
        });
        let start = m.axis_window(0, ORACLE_RISE)?;
        let bounded = m.axis_bounded(0);
        let window = find_window(&*logp, start, bounded, ORACLE_RISE)?;
        let mut kinks = m.kinks_1d();
        if let Some(p) = f {
            if let crate::measures::PerturbationKind::AbsScaled { .. } = p.kind {
                kinks.push(0.0);
            }
        }
        GridMeasure1D::new(logp, window, &kinks, intervals)
    }

    /// Same measure and window at a different resolution.
    pub fn refine(&self, intervals: usize) -> Result<Self, OracleError> {
        GridMeasure1D::new(self.source.clone(), self.window, &self.kinks, intervals)
    }

    pub fn intervals(&self) -> usize {
        self.spacing.len()
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    fn interval_log_masses(&self) -> Vec<f64> {
        self.log_weights.windows(2).zip(&self.spacing).map(|(w, h)| log_interval_mass(w[0], w[1], *h)).collect()
    }

    /// `ln Φ(x_i)` and `ln(1 − Φ(x_i))` (unnormalized) plus `ln Z`.
    fn log_cdf(&self) -> (Vec<f64>, Vec<f64>, f64) {
        let masses = self.interval_log_masses();
        let n = self.nodes.len();
        let mut left = vec![f64::NEG_INFINITY; n];
        for i in 1..n {
            left[i] = log_add(left[i - 1], masses[i - 1]);
        }
        let mut right = vec![f64::NEG_INFINITY; n];
        for i in (0..n - 1).rev() {
            right[i] = log_add(right[i + 1], masses[i]);
        }
        let lz = left[n - 1];
        (left, right, lz)
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Expands `start` until the log-density has dropped by `rise` below its
/// maximum at both unbounded ends.
pub fn find_window(logp: &dyn Fn(f64) -> f64, start: (f64, f64), bounded: (bool, bool), rise: f64) -> Result<(f64, f64), OracleError> {
    let (mut lo, mut hi) = start;
    for _ in 0..40 {
        let n = 4001;
        let max = (0..n).map(|k| logp(lo + (hi - lo) * k as f64 / (n - 1) as f64)).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(OracleError::Tail("density vanishes on the search window".into()));
        }
        let lo_ok = bounded.0 || max - logp(lo) >= rise;
        let hi_ok = bounded.1 || max - logp(hi) >= rise;
        if lo_ok && hi_ok {
            return Ok((lo, hi));
        }
        let w = 0.5 * (hi - lo);
        if !lo_ok {
            lo -= w;
        }
        if !hi_ok {
            hi += w;
        }
        if lo < -1e8 || hi > 1e8 {
            break;
        }
    }
    Err(OracleError::Tail(format!("log-density does not drop by {rise} within the search range")))
}

fn poincare_once(g: &GridMeasure1D) -> Result<f64, OracleError> {
    let n = g.nodes.len();
    if n < MIN_NODES {
        return Err(OracleError::TooFewNodes { min: MIN_NODES, got: n });
    }
    // Lumped-mass P1 discretization of the Dirichlet form; symmetrized as
    // M^{-1/2} K M^{-1/2} with everything formed in log space.
    let log_a: Vec<f64> = g.mid_log_weights.iter().zip(&g.spacing).map(|(w, h)| w - h.ln()).collect();
    let log_m: Vec<f64> = (0..n)
        .map(|i| {
            let left = if i > 0 { g.spacing[i - 1] } else { 0.0 };
            let right = if i + 1 < n { g.spacing[i] } else { 0.0 };
            g.log_weights[i] + (0.5 * (left + right)).ln()
        })
        .collect();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            if i > 0 {
                s += (log_a[i - 1] - log_m[i]).exp();
            }
            if i + 1 < n {
                s += (log_a[i] - log_m[i]).exp();
            }
            s
        })
        .collect();
    let e: Vec<f64> = (0..n - 1).map(|i| -(log_a[i] - 0.5 * (log_m[i] + log_m[i + 1])).exp()).collect();
    let lambda1 = tridiag::kth_eigenvalue(&d, &e, 1).ok_or_else(|| OracleError::Eigen("bisection failed".into()))?;
    if !(lambda1.is_finite() && lambda1 > 0.0) {
        return Err(OracleError::Eigen(format!("non-positive spectral gap {lambda1}")));
    }
    Ok(1.0 / lambda1)
}

fn two_grid(g: &GridMeasure1D, kind: OracleKind, f: impl Fn(&GridMeasure1D) -> Result<f64, OracleError>) -> Result<OracleResult, OracleError> {
    let fine = f(g)?;
    let coarse = f(&g.refine(g.intervals() / 2)?)?;
    // Second-order scheme: the fine-grid error is about a third of the difference.
    let err = (fine - coarse).abs() / (3.0 * fine.abs());
    Ok(OracleResult { constant: fine, kind, discretization: g.intervals(), richardson_error: err, low_confidence: err > LOW_CONFIDENCE })
}

/// `C_P = 1/λ₁` of the Neumann generator on the grid.
pub fn poincare_1d(g: &GridMeasure1D) -> Result<OracleResult, OracleError> {
    two_grid(g, OracleKind::Poincare, poincare_once)
}

fn check_interior(g: &GridMeasure1D) -> Result<(), OracleError> {
    if g.nodes.len() < MIN_NODES {
        return Err(OracleError::TooFewNodes { min: MIN_NODES, got: g.nodes.len() });
    }
    if let Some(i) = g.log_weights.iter().position(|v| !v.is_finite()) {
        return Err(OracleError::ZeroDensity(g.nodes[i]));
    }
    Ok(())
}

fn cheeger_once(g: &GridMeasure1D, mean: bool) -> Result<f64, OracleError> {
    check_interior(g)?;
    let (left, right, lz) = g.log_cdf();
    let n = g.nodes.len();
    let mut best = f64::NEG_INFINITY;
    for i in 1..n - 1 {
        let v = if mean {
            std::f64::consts::LN_2 + left[i] + right[i] - lz - g.log_weights[i]
        } else {
            left[i].min(right[i]) - g.log_weights[i]
        };
        best = best.max(v);
    }
    Ok(best.exp())
}

/// Median Cheeger constant `sup min(Φ, 1−Φ)/p`.
pub fn cheeger_1d(g: &GridMeasure1D) -> Result<OracleResult, OracleError> {
    two_grid(g, OracleKind::CheegerMedian, |g| cheeger_once(g, false))
}

/// Mean Cheeger constant `sup 2Φ(1−Φ)/p`.
pub fn cheeger_mean_1d(g: &GridMeasure1D) -> Result<OracleResult, OracleError> {
    two_grid(g, OracleKind::CheegerMean, |g| cheeger_once(g, true))
}

fn muckenhoupt_once(g: &GridMeasure1D) -> Result<f64, OracleError> {
    check_interior(g)?;
    let (left, right, _lz) = g.log_cdf();
    let n = g.nodes.len();
    let median = (0..n).find(|&i| left[i] >= right[i]).unwrap_or(n / 2);
    // ∫ e^{V} over intervals, with V = −log-density.
    let inv: Vec<f64> = g.log_weights.windows(2).zip(&g.spacing).map(|(w, h)| log_interval_mass(-w[0], -w[1], *h)).collect();
    let mut best = f64::NEG_INFINITY;
    let mut acc = f64::NEG_INFINITY;
    for i in median + 1..n {
        acc = log_add(acc, inv[i - 1]);
        best = best.max(right[i] + acc);
    }
    acc = f64::NEG_INFINITY;
    for i in (0..median).rev() {
        acc = log_add(acc, inv[i]);
        best = best.max(left[i] + acc);
    }
    if best.is_nan() || best == f64::INFINITY {
        return Err(OracleError::Divergent("one-sided Hardy integral".into()));
    }
    Ok(best.exp())
}

/// Muckenhoupt quantity `B`, with `B ≤ C_P ≤ 4B`.
pub fn muckenhoupt_1d(g: &GridMeasure1D) -> Result<OracleResult, OracleError> {
    two_grid(g, OracleKind::MuckenhouptInterval, muckenhoupt_once)
}

/// Poincaré constant of a product: the maximum over factors.
pub fn poincare_product(components: &[OracleResult]) -> Result<OracleResult, OracleError> {
    let best = components.iter().max_by(|a, b| a.constant.partial_cmp(&b.constant).unwrap()).ok_or(OracleError::EmptyProduct)?;
    let err = components.iter().map(|c| c.richardson_error).fold(0.0, f64::max);
    Ok(OracleResult { constant: best.constant, kind: best.kind, discretization: best.discretization, richardson_error: err, low_confidence: components.iter().any(|c| c.low_confidence) })
}

/// Poincaré constant of `μ_F` for a 1D model, or of `μ` for a separable model.
pub fn poincare_model(m: &MeasureModel, f: Option<&Perturbation>, intervals: usize) -> Result<OracleResult, OracleError> {
    if m.dim == 1 {
        return poincare_1d(&GridMeasure1D::from_model(m, f, intervals)?);
    }
    if f.is_some_and(|f| !f.is_zero()) || !m.is_separable() {
        return Err(OracleError::Measure(MeasureError::Unsupported("oracle handles 1D measures and unperturbed products".into())));
    }
    let parts = (0..m.dim).map(|a| poincare_1d(&GridMeasure1D::from_model(&m.axis_model(a)?, None, intervals)?)).collect::<Result<Vec<_>, _>>()?;
    poincare_product(&parts)
}

/// Normalizing-constant helper used by tests and sweeps: `ln ∫ e^{logp}` on the grid.
pub fn log_normalizer(g: &GridMeasure1D) -> f64 {
    log_sum_exp(g.interval_log_masses())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{MeasureModel, PerturbationKind};

    fn grid(m: &MeasureModel) -> GridMeasure1D {
        GridMeasure1D::from_model(m, None, DEFAULT_INTERVALS).unwrap()
    }

    #[test]
    fn gaussian_poincare_is_one_over_rho() {
        for rho in [1.0, 2.5] {
            let r = poincare_1d(&grid(&MeasureModel::gaussian(rho, 1).unwrap())).unwrap();
            assert!((r.constant * rho - 1.0).abs() < 5e-3, "{}", r.constant);
            assert!(!r.low_confidence);
        }
    }

    #[test]
    fn uniform_poincare_is_inverse_pi_squared() {
        let r = poincare_1d(&grid(&MeasureModel::uniform(0.0, 1.0, 1).unwrap())).unwrap();
        let exact = 1.0 / std::f64::consts::PI.powi(2);
        assert!((r.constant - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn laplace_poincare_near_four() {
        let r = poincare_1d(&grid(&MeasureModel::exponential(1.0, 1).unwrap())).unwrap();
        assert!((r.constant - 4.0).abs() < 0.08, "{}", r.constant);
    }

    #[test]
    fn cheeger_constants_of_laplace_and_gaussian() {
        let lap = grid(&MeasureModel::exponential(1.0, 1).unwrap());
        assert!((cheeger_1d(&lap).unwrap().constant - 1.0).abs() < 1e-2);
        assert!((cheeger_mean_1d(&lap).unwrap().constant - 2.0).abs() < 2e-2);
        let g = grid(&MeasureModel::gaussian(1.0, 1).unwrap());
        let c = cheeger_1d(&g).unwrap().constant;
        assert!((c - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-2);
    }

    #[test]
    fn muckenhoupt_of_laplace_is_one() {
        let lap = grid(&MeasureModel::exponential(1.0, 1).unwrap());
        let b = muckenhoupt_1d(&lap).unwrap().constant;
        assert!((b - 1.0).abs() < 1e-2, "{b}");
    }

    #[test]
    fn product_takes_maximum() {
        let mk = |c| OracleResult { constant: c, kind: OracleKind::Poincare, discretization: 1, richardson_error: 0.0, low_confidence: false };
        assert_eq!(poincare_product(&[mk(1.0), mk(4.0)]).unwrap().constant, 4.0);
        assert_eq!(poincare_product(&[mk(0.101)]).unwrap().constant, 0.101);
        assert!(poincare_product(&[]).is_err());
    }

    #[test]
    fn shifted_gaussian_keeps_constant() {
        let g = MeasureModel::gaussian(1.0, 1).unwrap();
        let f = Perturbation::certify(PerturbationKind::Linear { coef: vec![3.0] }, &g);
        let r = poincare_1d(&GridMeasure1D::from_model(&g, Some(&f), DEFAULT_INTERVALS).unwrap()).unwrap();
        assert!((r.constant - 1.0).abs() < 5e-3);
    }

    #[test]
    fn too_few_nodes_rejected() {
        let g = MeasureModel::gaussian(1.0, 1).unwrap();
        assert!(matches!(GridMeasure1D::from_model(&g, None, 100), Err(OracleError::TooFewNodes { .. })));
    }
}
