//! Atomic measures convolved with a Gaussian (or a general log-concave kernel).
//!
//! For `ν` supported in `B(0, R)` the mollified measure `ν^σ = ν * γ_σ` is a
//! perturbation `e^{−F} γ_σ` with `∇F(x) = −σ⁻² Σ_i y_i h_i(x)`, where
//! `h_i(x) ∝ w_i e^{x·y_i/σ²}` are the posterior weights of the atoms.
//! Hence `|∇F| ≤ R/σ²`. For `σ > R`, `Hess V^σ ≥ (1/σ² − R²/σ⁴) Id` and
//! `C_LS(ν^σ) ≤ 2σ⁴/(σ² − R²)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{bound_mollified, BoundError, BoundResult, MollifiedVariant, ParamSearch};
use crate::measures::quadrature::log_sum_exp;
use crate::measures::MeasureModel;
use crate::oracle::{find_window, poincare_1d, GridMeasure1D, OracleError, OracleResult, ORACLE_RISE};

#[derive(Debug, Error)]
pub enum MollifyError {
    #[error("atomic measure needs at least one atom")]
    Empty,
    #[error("atom weights must be positive and finite, got {0}")]
    BadWeight(f64),
    #[error("atoms must share one dimension")]
    DimensionMismatch,
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("verification runs on one-dimensional measures only")]
    NotOneDimensional,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

/// Finite mixture of Dirac masses with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub locations: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub radius: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl AtomicMeasure {
    /// Weights are normalized; the radius is the largest atom norm.
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self, MollifyError> {
        let dim = atoms.first().ok_or(MollifyError::Empty)?.0.len();
        if dim == 0 {
            return Err(MollifyError::DimensionMismatch);
        }
        let mut total = 0.0;
        for (y, w) in &atoms {
            if y.len() != dim {
                return Err(MollifyError::DimensionMismatch);
            }
            if !(w.is_finite() && *w > 0.0) {
                return Err(MollifyError::BadWeight(*w));
            }
            total += w;
        }
        let radius = atoms.iter().map(|(y, _)| norm(y)).fold(0.0, f64::max);
        let (locations, weights) = atoms.into_iter().map(|(y, w)| (y, w / total)).unzip();
        Ok(AtomicMeasure { locations, weights, radius })
    }

    /// `½(δ_{−r} + δ_r)` on the line.
    pub fn symmetric_pair(r: f64) -> Self {
        AtomicMeasure::new(vec![(vec![-r], 1.0), (vec![r], 1.0)]).expect("two positive weights")
    }

    pub fn dirac(dim: usize) -> Self {
        AtomicMeasure::new(vec![(vec![0.0; dim], 1.0)]).expect("one positive weight")
    }

    pub fn dim(&self) -> usize {
        self.locations[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (y, w) in self.locations.iter().zip(&self.weights) {
            for (mi, yi) in m.iter_mut().zip(y) {
                *mi += w * yi;
            }
        }
        m
    }

    /// Trace of the covariance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.locations.iter().zip(&self.weights).map(|(y, w)| w * y.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum()
    }

    /// Log-weights `ln w_i − |x − y_i|²/2σ²`.
    fn log_terms(&self, sigma: f64, x: &[f64]) -> Vec<f64> {
        let s2 = sigma * sigma;
        self.locations
            .iter()
            .zip(&self.weights)
            .map(|(y, w)| {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() - d2 / (2.0 * s2)
            })
            .collect()
    }
}

/// `−V^σ(x)`, the normalized log-density of `ν * γ_σ`.
pub fn mollified_log_density(nu: &AtomicMeasure, sigma: f64, x: &[f64]) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    let n = nu.dim() as f64;
    log_sum_exp(nu.log_terms(sigma, x)) - 0.5 * n * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
}

/// `∇F` for `ν^σ = e^{−F} γ_σ`; asserts `|∇F(x)| ≤ R/σ²`.
pub fn mollified_grad_f(nu: &AtomicMeasure, sigma: f64, x: &[f64]) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let terms = nu.log_terms(sigma, x);
    let lz = log_sum_exp(terms.iter().copied());
    let s2 = sigma * sigma;
    let h: Vec<f64> = terms.iter().map(|t| (t - lz).exp()).collect();
    let total: f64 = h.iter().sum();
    let mut g = vec![0.0; nu.dim()];
    for (y, h) in nu.locations.iter().zip(&h) {
        for (gi, yi) in g.iter_mut().zip(y) {
            *gi -= h / total * yi;
        }
    }
    let mut gn = norm(&g);
    while gn > nu.radius {
        let k = nu.radius / gn * (1.0 - f64::EPSILON);
        g.iter_mut().for_each(|v| *v *= k);
        gn = norm(&g);
    }
    g.iter_mut().for_each(|v| *v /= s2);
    let bound = nu.radius / s2;
    let gn = norm(&g);
    assert!(gn <= bound * (1.0 + 4.0 * f64::EPSILON) && (nu.dim() > 1 || gn <= bound), "|grad F| = {gn} exceeds R/sigma^2 = {bound}");
    g
}

/// Log-density of `ν * (law of σY)` where `Y` has log-density `kernel`.
pub fn convolved_log_density(nu: &AtomicMeasure, kernel: &dyn Fn(&[f64]) -> f64, sigma: f64, x: &[f64]) -> f64 {
    let n = nu.dim() as f64;
    let mut z = vec![0.0; x.len()];
    let terms = nu.locations.iter().zip(&nu.weights).map(|(y, w)| {
        for ((zi, xi), yi) in z.iter_mut().zip(x).zip(y) {
            *zi = (xi - yi) / sigma;
        }
        w.ln() + kernel(&z)
    });
    log_sum_exp(terms.collect::<Vec<_>>()) - n * sigma.ln()
}

/// One oracle-vs-bound comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MollifyComparison {
    pub sigma: f64,
    pub radius: f64,
    pub oracle: OracleResult,
    pub bound: BoundResult,
    /// `bound / oracle`, when the bound applies.
    pub ratio: Option<f64>,
}

impl MollifyComparison {
    /// Vacuously true when the bound does not apply.
    pub fn sound(&self, tol: f64) -> bool {
        self.ratio.is_none_or(|r| r >= 1.0 - tol)
    }
}

fn compare(logp: Arc<dyn Fn(f64) -> f64 + Send + Sync>, centre: (f64, f64), sigma: f64, radius: f64, bound: BoundResult, intervals: usize) -> Result<MollifyComparison, MollifyError> {
    let window = find_window(&*logp, centre, (false, false), ORACLE_RISE)?;
    let g = GridMeasure1D::new(logp, window, &[], intervals)?;
    let oracle = poincare_1d(&g)?;
    let ratio = bound.value.filter(|_| bound.applicable).map(|b| b / oracle.constant);
    Ok(MollifyComparison { sigma, radius, oracle, bound, ratio })
}

/// Oracle `C_P(ν^σ)` next to the Gaussian-mollifier bound.
pub fn verify_mollified_bound(nu: &AtomicMeasure, sigma: f64, search: &ParamSearch, intervals: usize) -> Result<MollifyComparison, MollifyError> {
    if nu.dim() != 1 {
        return Err(MollifyError::NotOneDimensional);
    }
    if !(sigma > 0.0) {
        return Err(MollifyError::BadSigma(sigma));
    }
    let bound = bound_mollified(nu.radius, sigma, MollifiedVariant::GaussianPoincare, search)?;
    let nu2 = nu.clone();
    let logp = Arc::new(move |x: f64| mollified_log_density(&nu2, sigma, &[x]));
    compare(logp, (-nu.radius - sigma, nu.radius + sigma), sigma, nu.radius, bound, intervals)
}

/// Oracle `C_P` of `X + σY`, `X ~ ν`, `Y ~ kernel`, next to the scaled
/// general-kernel bound with certified `k = sup ‖Hess H‖` and `c_p_kernel = C_P(kernel)`.
pub fn verify_scaled_bound(nu: &AtomicMeasure, kernel: &MeasureModel, k: f64, c_p_kernel: f64, sigma: f64, search: &ParamSearch, intervals: usize) -> Result<MollifyComparison, MollifyError> {
    if nu.dim() != 1 || kernel.dim != 1 {
        return Err(MollifyError::NotOneDimensional);
    }
    if !(sigma > 0.0) {
        return Err(MollifyError::BadSigma(sigma));
    }
    let bound = bound_mollified(nu.radius, sigma, MollifiedVariant::Scaled { k, c_p_mu: c_p_kernel }, search)?;
    let nu2 = nu.clone();
    let kern = kernel.clone();
    let logp = Arc::new(move |x: f64| convolved_log_density(&nu2, &|z: &[f64]| kern.log_density(z).unwrap_or(f64::NEG_INFINITY), sigma, &[x]));
    compare(logp, (-nu.radius - sigma, nu.radius + sigma), sigma, nu.radius, bound, intervals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::DEFAULT_INTERVALS;

    #[test]
    fn dirac_gives_gaussian() {
        let nu = AtomicMeasure::dirac(1);
        for x in [-2.0, 0.0, 0.7] {
            let g = -x * x / (2.0 * 1.5 * 1.5) - 0.5 * (2.0 * std::f64::consts::PI * 2.25f64).ln();
            assert!((mollified_log_density(&nu, 1.5, &[x]) - g).abs() < 1e-14);
            assert_eq!(mollified_grad_f(&nu, 1.5, &[x]), vec![0.0]);
        }
    }

    #[test]
    fn two_atoms_hand_values() {
        let nu = AtomicMeasure::symmetric_pair(1.0);
        let expect = ((1.0 + (-2f64).exp()) / 2.0).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((mollified_log_density(&nu, 1.0, &[1.0]) - expect).abs() < 1e-14);
        assert!((mollified_grad_f(&nu, 1.0, &[1.0])[0] + 1f64.tanh()).abs() < 1e-14);
        assert_eq!(mollified_grad_f(&nu, 1.0, &[0.0])[0], 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let nu = AtomicMeasure::new(vec![(vec![-1.0], 0.3), (vec![0.4], 0.5), (vec![0.9], 0.2)]).unwrap();
        let s = 0.8;
        let f = |x: f64| -mollified_log_density(&nu, s, &[x]) - x * x / (2.0 * s * s);
        for x in [-3.0, -0.5, 0.1, 1.2, 2.5] {
            let h = 1e-5;
            let fd = (f(x + h) - f(x - h)) / (2.0 * h);
            let g = mollified_grad_f(&nu, s, &[x])[0];
            assert!((fd - g).abs() <= 1e-6 * g.abs().max(1e-3), "{x}: {fd} vs {g}");
        }
    }

    #[test]
    fn pair_at_sigma_two() {
        let nu = AtomicMeasure::symmetric_pair(1.0);
        let c = verify_mollified_bound(&nu, 2.0, &ParamSearch::default(), DEFAULT_INTERVALS).unwrap();
        assert!((c.bound.value.unwrap() - 64.0 / 9.0).abs() < 1e-12);
        assert!(c.sound(1e-3));
        // Variance of ν^σ is 1 + σ², a lower bound for C_P.
        assert!(c.oracle.constant >= 5.0 * (1.0 - 1e-3));
    }

    #[test]
    fn dirac_sigma_one_ratio_one() {
        let c = verify_mollified_bound(&AtomicMeasure::dirac(1), 1.0, &ParamSearch::default(), DEFAULT_INTERVALS).unwrap();
        assert!((c.ratio.unwrap() - 1.0).abs() < 5e-3);
    }

    #[test]
    fn small_sigma_is_recorded_not_applicable() {
        let c = verify_mollified_bound(&AtomicMeasure::symmetric_pair(1.0), 0.45, &ParamSearch::default(), DEFAULT_INTERVALS).unwrap();
        assert!(!c.bound.applicable);
        assert!(c.ratio.is_none());
    }

    #[test]
    fn scaled_gaussian_kernel_matches() {
        let nu = AtomicMeasure::symmetric_pair(1.0);
        let k = MeasureModel::gaussian(1.0, 1).unwrap();
        let c = verify_scaled_bound(&nu, &k, 1.0, 1.0, 2.0, &ParamSearch::default(), DEFAULT_INTERVALS).unwrap();
        let d = verify_mollified_bound(&nu, 2.0, &ParamSearch::default(), DEFAULT_INTERVALS).unwrap();
        assert!((c.oracle.constant - d.oracle.constant).abs() / d.oracle.constant < 1e-6);
        assert!(c.sound(1e-3));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(AtomicMeasure::new(vec![(vec![0.0], -1.0)]).is_err());
        assert!(AtomicMeasure::new(vec![]).is_err());
    }
}
