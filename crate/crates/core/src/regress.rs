//! Sparse linear regression with a heavy-tailed Laplace-type prior, its
//! Gibbs posterior `ν_{n,β}`, Poincaré bounds for it, and EWA estimation by
//! Langevin sampling.
//!
//! The posterior log-density is
//! `−(1/β)|Y − Xλ|² − Σ_j ln(τ² + λ_j²) − α Σ_j |λ_j|`, `j = 1..M`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{bound_lipschitz_poincare, BoundError, BoundResult, Margin, ParamSearch, Quantity, TheoremId};
use crate::langevin::{ensemble_series, ewa_average, fit_decay_rate, ula_run, ChainConfig, DecayFit, LangevinError, Target};
use crate::oracle::{find_window, poincare_1d, poincare_product, GridMeasure1D, OracleError, OracleResult, DEFAULT_INTERVALS, ORACLE_RISE};

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Langevin(#[from] LangevinError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Orthogonal columns of norm `√n` when `n ≥ M`, orthogonal rows of norm `√M` otherwise.
    Orthogonal,
    IidGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionProblem {
    pub n: usize,
    pub m: usize,
    /// Design, row-major `n × M`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub truth: Vec<f64>,
    pub noise_sd: f64,
    pub sparsity: usize,
    pub design: Design,
}

impl RegressionProblem {
    pub fn from_data(n: usize, m: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self, RegressError> {
        if x.len() != n * m || y.len() != n || n == 0 || m == 0 {
            return Err(RegressError::Invalid("design must be n x M and responses length n".into()));
        }
        let mut p = RegressionProblem { n, m, x, y, truth: vec![0.0; m], noise_sd: 0.0, sparsity: 0, design: Design::IidGaussian };
        if p.is_orthogonal() {
            p.design = Design::Orthogonal;
        }
        Ok(p)
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.m + j]
    }

    /// Column `X̃^j = (X_1^j, …, X_n^j)`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i, j)).collect()
    }

    pub fn predict(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.m).map(|j| self.at(i, j) * lambda[j]).sum()).collect()
    }

    /// `⟨Y, X̃^j⟩` for every `j`.
    pub fn inner_products(&self) -> Vec<f64> {
        (0..self.m).map(|j| (0..self.n).map(|i| self.y[i] * self.at(i, j)).sum()).collect()
    }

    /// `sup_j |⟨Y, X̃^j⟩|`.
    pub fn sup_inner(&self) -> f64 {
        self.inner_products().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.m, &self.x)
    }

    /// `XᵗX` (if `n ≥ M`) or `XXᵗ` (otherwise) is diagonal.
    pub fn is_orthogonal(&self) -> bool {
        let x = self.matrix();
        let g = if self.n >= self.m { x.transpose() * &x } else { &x * x.transpose() };
        let scale = g.diagonal().amax().max(1e-300);
        (0..g.nrows()).all(|a| (0..g.ncols()).all(|b| a == b || g[(a, b)].abs() <= 1e-10 * scale))
    }

    /// Diagonal of `XᵗX`.
    pub fn column_norms2(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.column(j).iter().map(|v| v * v).sum()).collect()
    }

    /// Largest eigenvalue of `XᵗX`.
    pub fn gram_max_eigen(&self) -> f64 {
        let x = self.matrix();
        (x.transpose() * x).symmetric_eigenvalues().amax()
    }
}

/// Synthetic problem with exactly `sparsity` nonzero `±1` coefficients.
pub fn generate_problem(n: usize, m: usize, sparsity: usize, noise_sd: f64, design: Design, seed: u64) -> Result<RegressionProblem, RegressError> {
    if n == 0 || m == 0 {
        return Err(RegressError::Invalid("n and M must be positive".into()));
    }
    if sparsity > m {
        return Err(RegressError::Invalid(format!("sparsity {sparsity} exceeds M = {m}")));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(RegressError::Invalid(format!("noise_sd must be nonnegative, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |r: usize, c: usize, rng: &mut ChaCha8Rng| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let x: DMatrix<f64> = match design {
        Design::IidGaussian => gauss(n, m, &mut rng),
        Design::Orthogonal if n >= m => gauss(n, m, &mut rng).qr().q() * (n as f64).sqrt(),
        Design::Orthogonal => (gauss(m, n, &mut rng).qr().q() * (m as f64).sqrt()).transpose(),
    };
    let mut truth = vec![0.0; m];
    for j in sample(&mut rng, m, sparsity).into_iter() {
        truth[j] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| RegressError::Invalid(e.to_string()))?;
    let mut flat = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            flat.push(x[(i, j)]);
        }
    }
    let mut p = RegressionProblem { n, m, x: flat, y: vec![0.0; n], truth, noise_sd, sparsity, design };
    let clean = p.predict(&p.truth);
    p.y = clean.into_iter().map(|v| if noise_sd > 0.0 { v + noise.sample(&mut rng) } else { v }).collect();
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSpec {
    pub beta: f64,
    pub alpha: f64,
    pub tau: f64,
    /// L¹-ball radius of the prior; not used by the sampler.
    pub radius: Option<f64>,
}

impl PosteriorSpec {
    pub fn validate(&self) -> Result<(), RegressError> {
        for (name, v) in [("beta", self.beta), ("alpha", self.alpha), ("tau", self.tau)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(RegressError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Unnormalized log-density of `ν_{n,β}` and its (sub)gradient.
pub fn posterior_log_density(p: &RegressionProblem, spec: &PosteriorSpec, lambda: &[f64]) -> (f64, Vec<f64>) {
    let r: Vec<f64> = p.predict(lambda).iter().zip(&p.y).map(|(f, y)| y - f).collect();
    let t2 = spec.tau * spec.tau;
    let mut value = -r.iter().map(|v| v * v).sum::<f64>() / spec.beta;
    let mut grad = vec![0.0; p.m];
    for (j, g) in grad.iter_mut().enumerate() {
        let l = lambda[j];
        value -= (t2 + l * l).ln() + spec.alpha * l.abs();
        let data: f64 = (0..p.n).map(|i| p.at(i, j) * r[i]).sum();
        *g = 2.0 * data / spec.beta - 2.0 * l / (t2 + l * l) - spec.alpha * sign0(l);
    }
    (value, grad)
}

/// Langevin target `W = −log ν_{n,β}`, with `Lip(∇W) ≤ (2/β)‖XᵗX‖ + 2/τ²`.
pub fn posterior_target(p: &RegressionProblem, spec: &PosteriorSpec) -> Target {
    let (p1, p2) = (p.clone(), p.clone());
    let (s1, s2) = (*spec, *spec);
    let mut t = Target::new(
        p.m,
        Arc::new(move |l| -posterior_log_density(&p1, &s1, l).0),
        Arc::new(move |l, out| {
            let (_, g) = posterior_log_density(&p2, &s2, l);
            for (o, gi) in out.iter_mut().zip(g) {
                *o = -gi;
            }
        }),
    );
    t.grad_lipschitz = Some(2.0 * p.gram_max_eigen() / spec.beta + 2.0 / (spec.tau * spec.tau));
    t
}

/// Untraced universal constants, all defaulting to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionConstants {
    /// Constant of the `C ln²(M)/α²` prior bound.
    pub c_barthe_klartag: f64,
    /// Gate threshold `c`.
    pub c_gate: f64,
    /// Constant `C` of the gated bound.
    pub c_bound: f64,
    /// Use the Euclidean Lipschitz constant of `F` instead of the coordinate-wise one.
    pub euclidean: bool,
}

impl Default for RegressionConstants {
    fn default() -> Self {
        RegressionConstants { c_barthe_klartag: 1.0, c_gate: 1.0, c_bound: 1.0, euclidean: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionCheck {
    /// `sup_j |⟨Y, X̃^j⟩|`.
    pub sup_inner: f64,
    /// Gate quantity (`q` or `q'`).
    pub q: f64,
    pub gated: BoundResult,
    /// Prior constant and its Lipschitz perturbation (absent for the orthogonal form).
    pub prior: Option<BoundResult>,
    pub constructive: Option<BoundResult>,
    pub lipschitz: Option<f64>,
}

fn gated_bound(id: TheoremId, q: f64, s: f64, spec: &PosteriorSpec, k: &RegressionConstants) -> BoundResult {
    let mut r = BoundResult::new(id, Quantity::Poincare).input("sup_inner", s).input("beta", spec.beta).input("tau", spec.tau).input("alpha", spec.alpha).param("q", q).param("c", k.c_gate).param("C", k.c_bound).margin(Margin { name: "q".into(), value: q, cap: k.c_gate, strict: false });
    r.untraced = true;
    r.finish(k.c_bound * spec.beta / (s + spec.beta * spec.tau))
}

/// Lipschitz constant of `F(λ) = −(2/β)Σ λ_j⟨Y, X̃^j⟩ + Σ ln(τ² + λ_j²)`.
pub fn perturbation_lipschitz(p: &RegressionProblem, spec: &PosteriorSpec, euclidean: bool) -> f64 {
    let a: Vec<f64> = p.inner_products().iter().map(|v| 2.0 * v.abs() / spec.beta + 1.0 / spec.tau).collect();
    if euclidean {
        a.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        2.0 * p.sup_inner() / spec.beta + 1.0 / spec.tau
    }
}

/// Gated bound with `q = (ln M/(βα))(sup_j|⟨Y,X̃^j⟩| + βτ)`, plus the
/// constructive chain `C ln²(M)/α²` followed by the Lipschitz perturbation bound.
pub fn check_regression_gated(p: &RegressionProblem, spec: &PosteriorSpec, k: &RegressionConstants, search: &ParamSearch) -> Result<RegressionCheck, RegressError> {
    spec.validate()?;
    let s = p.sup_inner();
    let lnm = (p.m as f64).ln();
    let q = lnm / (spec.beta * spec.alpha) * (s + spec.beta * spec.tau);
    let gated = gated_bound(TheoremId::RegressionGated, q, s, spec, k);
    let mut prior = BoundResult::new(TheoremId::BartheKlartag, Quantity::Poincare).input("M", p.m as f64).input("alpha", spec.alpha).param("C", k.c_barthe_klartag);
    prior.untraced = true;
    let prior = if p.m < 2 { prior.refuse("needs M >= 2") } else { prior.finish(k.c_barthe_klartag * lnm * lnm / (spec.alpha * spec.alpha)) };
    let l = perturbation_lipschitz(p, spec, k.euclidean);
    let constructive = match prior.value {
        Some(c) => {
            let mut r = bound_lipschitz_poincare(c, l, search)?;
            r.theorem = TheoremId::RegressionConstructive;
            r.untraced = prior.untraced;
            r.fed_by("C_P_mu", &prior)
        }
        None => BoundResult::new(TheoremId::RegressionConstructive, Quantity::Poincare).refuse("prior constant unavailable"),
    };
    let constructive = if constructive.note.is_none() { constructive.with_note(if k.euclidean { "euclidean Lipschitz constant" } else { "coordinate-wise Lipschitz constant" }) } else { constructive };
    Ok(RegressionCheck { sup_inner: s, q, gated, prior: Some(prior), constructive: Some(constructive), lipschitz: Some(l) })
}

/// Orthogonal-design form with `q' = (n^{1/3}/(βα))(sup_j|⟨Y,X̃^j⟩| + βτ)`.
/// The prior step rests on a marginalization argument and has no computable chain.
pub fn check_orthogonal_gated(p: &RegressionProblem, spec: &PosteriorSpec, k: &RegressionConstants) -> Result<RegressionCheck, RegressError> {
    spec.validate()?;
    let s = p.sup_inner();
    let q = (p.n as f64).cbrt() / (spec.beta * spec.alpha) * (s + spec.beta * spec.tau);
    let gated = if p.is_orthogonal() {
        gated_bound(TheoremId::RegressionOrthogonalGated, q, s, spec, k).with_note("prior step by marginalization, not computed")
    } else {
        BoundResult::new(TheoremId::RegressionOrthogonalGated, Quantity::Poincare).param("q", q).refuse("design is not orthogonal")
    };
    Ok(RegressionCheck { sup_inner: s, q, gated, prior: None, constructive: None, lipschitz: None })
}

/// Exact `C_P(ν_{n,β})` for designs with orthogonal columns: the posterior is
/// a product of one-dimensional factors.
pub fn posterior_oracle(p: &RegressionProblem, spec: &PosteriorSpec, intervals: usize) -> Result<OracleResult, RegressError> {
    spec.validate()?;
    if p.n < p.m || !p.is_orthogonal() {
        return Err(RegressError::Invalid("posterior factorizes only for orthogonal columns".into()));
    }
    let d = p.column_norms2();
    let b = p.inner_products();
    let t2 = spec.tau * spec.tau;
    let mut parts = Vec::with_capacity(p.m);
    for j in 0..p.m {
        let (dj, bj, beta, alpha) = (d[j], b[j], spec.beta, spec.alpha);
        let logp: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(move |t: f64| -(dj * t * t - 2.0 * bj * t) / beta - (t2 + t * t).ln() - alpha * t.abs());
        let centre = if dj > 0.0 { bj / dj } else { 0.0 };
        let window = find_window(&*logp, (centre.min(0.0) - 1.0, centre.max(0.0) + 1.0), (false, false), ORACLE_RISE)?;
        parts.push(poincare_1d(&GridMeasure1D::new(logp, window, &[0.0], intervals)?)?);
    }
    Ok(poincare_product(&parts)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationOptions {
    /// Chains in the relaxation ensemble (0 disables the decay fit).
    pub decay_chains: usize,
    pub decay_steps: usize,
    /// Offset added to every coordinate of the EWA estimate to start the ensemble.
    pub decay_offset: f64,
    /// Fit once the deviation is below this fraction of its initial value.
    pub decay_upper: f64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions { decay_chains: 64, decay_steps: 2000, decay_offset: 5.0, decay_upper: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationReport {
    pub lambda_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub truth: Vec<f64>,
    /// Support coordinates whose estimated sign matches the truth.
    pub sign_matches: usize,
    pub support_size: usize,
    pub iat: f64,
    pub ess: f64,
    pub decay: Option<DecayFit>,
    /// `1/C_P` predicted by the constructive bound, when it applies.
    pub predicted_rate: Option<f64>,
    /// Fitted rate times the constructive bound.
    pub rate_times_bound: Option<f64>,
}

/// EWA estimate from one chain, support recovery, and an ensemble decay fit
/// of the mean coordinate compared against the constructive bound.
pub fn run_estimation(p: &RegressionProblem, spec: &PosteriorSpec, cfg: &ChainConfig, opts: &EstimationOptions, bound: Option<&BoundResult>) -> Result<EstimationReport, RegressError> {
    spec.validate()?;
    let target = posterior_target(p, spec);
    let trace = ula_run(&target, cfg)?;
    let ewa = ewa_average(&trace);
    let support: Vec<usize> = (0..p.m).filter(|&j| p.truth[j] != 0.0).collect();
    let sign_matches = support.iter().filter(|&&j| sign0(ewa.mean[j]) == sign0(p.truth[j])).count();
    let mean_obs = |l: &[f64]| l.iter().sum::<f64>() / l.len() as f64;
    let decay = if opts.decay_chains > 0 {
        let init: Vec<f64> = ewa.mean.iter().map(|v| v + opts.decay_offset).collect();
        let ens_cfg = ChainConfig { steps: opts.decay_steps, burn_in: 0, init, ..cfg.clone() };
        let series = ensemble_series(&target, &ens_cfg, opts.decay_chains, &mean_obs)?;
        Some(fit_decay_rate(&series, Some(mean_obs(&ewa.mean)), opts.decay_upper))
    } else {
        None
    };
    let b = bound.and_then(|b| b.value.filter(|_| b.applicable));
    Ok(EstimationReport {
        stderr: ewa.stderr,
        lambda_hat: ewa.mean,
        truth: p.truth.clone(),
        sign_matches,
        support_size: support.len(),
        iat: trace.diagnostics.iat,
        ess: trace.diagnostics.ess,
        predicted_rate: b.map(|b| 1.0 / b),
        rate_times_bound: match (&decay, b) {
            (Some(d), Some(b)) if !d.flagged => Some(d.rate * b),
            _ => None,
        },
        decay,
    })
}

/// Default oracle grid for posterior factors.
pub const POSTERIOR_INTERVALS: usize = DEFAULT_INTERVALS;

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(beta: f64, alpha: f64, tau: f64) -> PosteriorSpec {
        PosteriorSpec { beta, alpha, tau, radius: None }
    }

    #[test]
    fn problem_generation() {
        let a = generate_problem(32, 16, 3, 0.1, Design::Orthogonal, 11).unwrap();
        let b = generate_problem(32, 16, 3, 0.1, Design::Orthogonal, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.is_orthogonal());
        assert_eq!(a.truth.iter().filter(|v| **v != 0.0).count(), 3);
        let c = generate_problem(8, 16, 2, 0.0, Design::Orthogonal, 1).unwrap();
        assert!(c.is_orthogonal());
        assert_eq!(c.predict(&c.truth), c.y);
        assert!(generate_problem(4, 3, 4, 0.0, Design::IidGaussian, 0).is_err());
        assert!(!generate_problem(32, 16, 3, 0.1, Design::IidGaussian, 3).unwrap().is_orthogonal());
    }

    #[test]
    fn zero_data_value() {
        let p = RegressionProblem::from_data(2, 3, vec![1.0, 0.0, 2.0, 0.5, 1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let (v, _) = posterior_log_density(&p, &spec(1.0, 1.0, 1.5), &[0.0; 3]);
        assert!((v + 3.0 * (1.5f64 * 1.5).ln()).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = generate_problem(10, 6, 2, 0.2, Design::IidGaussian, 5).unwrap();
        let s = spec(2.0, 0.7, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let l: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let (_, g) = posterior_log_density(&p, &s, &l);
            for j in 0..6 {
                let h = 1e-6;
                let (mut a, mut b) = (l.clone(), l.clone());
                a[j] += h;
                b[j] -= h;
                let fd = (posterior_log_density(&p, &s, &a).0 - posterior_log_density(&p, &s, &b).0) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "{fd} {}", g[j]);
            }
        }
    }

    #[test]
    fn regression_gated_zero_data() {
        let p = RegressionProblem::from_data(2, 4, vec![1.0; 8], vec![0.0, 0.0]).unwrap();
        let c = check_regression_gated(&p, &spec(1.0, 2.0, 1.0), &RegressionConstants::default(), &ParamSearch::default()).unwrap();
        assert_eq!(c.lipschitz, Some(1.0));
        assert!((c.q - 4f64.ln() / 2.0).abs() < 1e-15);
        assert!(c.gated.untraced);
        let chain = c.constructive.unwrap().chain();
        assert!(chain.contains(&TheoremId::BartheKlartag) && chain.contains(&TheoremId::RegressionConstructive));
    }

    #[test]
    fn doubling_beta_halves_data_part() {
        let p = generate_problem(16, 8, 2, 0.1, Design::IidGaussian, 2).unwrap();
        let l1 = perturbation_lipschitz(&p, &spec(1.0, 1.0, 2.0), false) - 0.5;
        let l2 = perturbation_lipschitz(&p, &spec(2.0, 1.0, 2.0), false) - 0.5;
        assert!((l1 - 2.0 * l2).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_gate_needs_orthogonal_design() {
        let p = generate_problem(16, 8, 2, 0.1, Design::IidGaussian, 2).unwrap();
        assert!(!check_orthogonal_gated(&p, &spec(1.0, 1.0, 1.0), &RegressionConstants::default()).unwrap().gated.applicable);
        let p = generate_problem(1, 4, 1, 0.0, Design::Orthogonal, 2).unwrap();
        let s = spec(1.0, 1.0, 1.0);
        let a = check_regression_gated(&p, &s, &RegressionConstants::default(), &ParamSearch::default()).unwrap().q;
        let b = check_orthogonal_gated(&p, &s, &RegressionConstants::default()).unwrap().q;
        assert!((b - a / 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scale_equivariance() {
        let p = generate_problem(12, 6, 2, 0.1, Design::IidGaussian, 8).unwrap();
        let c = 3.0;
        let q = RegressionProblem::from_data(12, 6, p.x.iter().map(|v| v * c).collect(), p.y.iter().map(|v| v * c).collect()).unwrap();
        assert!((q.sup_inner() - c * c * p.sup_inner()).abs() < 1e-10 * q.sup_inner());
    }

    #[test]
    fn oracle_below_constructive_bound() {
        let p = generate_problem(32, 16, 3, 0.1, Design::Orthogonal, 1).unwrap();
        let s = spec(64.0, 5.0, 1.0);
        let c = check_regression_gated(&p, &s, &RegressionConstants::default(), &ParamSearch::default()).unwrap();
        let b = c.constructive.unwrap();
        assert!(b.applicable, "{:?}", b.note);
        let o = posterior_oracle(&p, &s, 2048).unwrap();
        assert!(o.constant <= b.value.unwrap());
    }
}
