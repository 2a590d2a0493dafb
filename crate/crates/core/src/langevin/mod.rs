//! Unadjusted Langevin sampler `X ← X − h∇W(X) + √(2h) ξ` with diagnostics.

mod diagnostics;

use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::{autocorrelation, effective_sample_size, fit_decay_rate, integrated_autocorrelation_time, DecayFit, EnsembleSeries, MIN_R_SQUARED, NOISE_SIGMAS, SOKAL_C};

use crate::measures::{MeasureModel, Perturbation, Support};

#[derive(Debug, Error)]
pub enum LangevinError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error("non-finite gradient at step {step}")]
    NonFinite { step: usize, last: Vec<f64> },
    #[error("sample file: {0}")]
    Io(#[from] io::Error),
}

pub type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Target `∝ e^{−W}` given by `W` and `∇W`.
#[derive(Clone)]
pub struct Target {
    pub dim: usize,
    pub potential: PotentialFn,
    pub gradient: GradientFn,
    /// Certified Lipschitz constant of `∇W`, when known.
    pub grad_lipschitz: Option<f64>,
    /// Per-coordinate reflecting walls.
    pub reflect: Option<Vec<(f64, f64)>>,
}

impl std::fmt::Debug for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Target").field("dim", &self.dim).field("grad_lipschitz", &self.grad_lipschitz).field("reflect", &self.reflect).finish()
    }
}

impl Target {
    pub fn new(dim: usize, potential: PotentialFn, gradient: GradientFn) -> Self {
        Target { dim, potential, gradient, grad_lipschitz: None, reflect: None }
    }

    /// Ornstein–Uhlenbeck target `N(mean, ρ⁻¹ Id)`.
    pub fn gaussian(rho: f64, mean: Vec<f64>) -> Self {
        let dim = mean.len();
        let m2 = mean.clone();
        let mut t = Target::new(
            dim,
            Arc::new(move |x| 0.5 * rho * x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()),
            Arc::new(move |x, out| {
                for ((o, a), b) in out.iter_mut().zip(x).zip(&m2) {
                    *o = rho * (a - b);
                }
            }),
        );
        t.grad_lipschitz = Some(rho);
        t
    }

    /// `μ_F` with `W = V + F`; interval and box supports become reflecting walls.
    pub fn from_model(m: &MeasureModel, f: Option<&Perturbation>) -> Self {
        let (m1, m2) = (m.clone(), m.clone());
        let (f1, f2) = (f.cloned(), f.cloned());
        let dim = m.dim;
        let mut t = Target::new(
            dim,
            Arc::new(move |x| m1.potential(x) + f1.as_ref().map_or(0.0, |f| f.value(x))),
            Arc::new(move |x, out| {
                m2.grad_potential(x, out);
                if let Some(f) = &f2 {
                    let mut g = vec![0.0; x.len()];
                    f.gradient(x, &mut g);
                    for (o, gi) in out.iter_mut().zip(g) {
                        *o += gi;
                    }
                }
            }),
        );
        t.reflect = match &m.support {
            Some(Support::Interval { lo, hi }) => Some(vec![(*lo, *hi); dim]),
            Some(Support::Boxed(b)) => Some(b.clone()),
            _ => None,
        };
        t
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        -(self.potential)(x)
    }
}

fn reflect_into(v: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let mut y = (v - lo).rem_euclid(2.0 * w);
    if y > w {
        y = 2.0 * w - y;
    }
    lo + y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub h: f64,
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub init: Vec<f64>,
}

impl ChainConfig {
    pub fn validate(&self, target: &Target) -> Result<(), LangevinError> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(LangevinError::Config(format!("step h must be positive, got {}", self.h)));
        }
        if self.steps == 0 {
            return Err(LangevinError::Config("steps must be positive".into()));
        }
        if self.burn_in >= self.steps {
            return Err(LangevinError::Config(format!("burn-in {} must be below steps {}", self.burn_in, self.steps)));
        }
        if self.init.len() != target.dim {
            return Err(LangevinError::Config(format!("initial point has dimension {}, target has {}", self.init.len(), target.dim)));
        }
        if let Some(l) = target.grad_lipschitz {
            if self.h * l >= 1.0 {
                return Err(LangevinError::Config(format!("h * Lipschitz(grad W) = {} must be below 1", self.h * l)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iat: f64,
    pub ess: f64,
    pub decay_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub dim: usize,
    pub seed: u64,
    pub h: f64,
    pub burn_in: usize,
    /// States after each step, row-major `steps × dim`.
    pub samples: Vec<f64>,
    /// Observable at each stored state.
    pub observable: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl ChainTrace {
    pub fn steps(&self) -> usize {
        self.observable.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.samples[k * self.dim..(k + 1) * self.dim]
    }

    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.samples.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Recompute diagnostics from the post-burn-in observable.
    pub fn recompute_diagnostics(&self) -> Diagnostics {
        let s = &self.observable[self.burn_in..];
        let iat = integrated_autocorrelation_time(s);
        Diagnostics { iat, ess: s.len() as f64 / iat, decay_rate: self.diagnostics.decay_rate }
    }

    /// Raw dump: one text header line `n N seed`, then little-endian f64 rows.
    pub fn write_samples(&self, w: &mut dyn Write) -> io::Result<()> {
        writeln!(w, "{} {} {}", self.dim, self.steps(), self.seed)?;
        for v in &self.samples {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Read a dump written by [`ChainTrace::write_samples`]: `(n, N, seed, samples)`.
pub fn read_samples(r: &mut dyn BufRead) -> io::Result<(usize, usize, u64, Vec<f64>)> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(bad("header must be `n N seed`"));
    }
    let n: usize = parts[0].parse().map_err(|_| bad("bad n"))?;
    let steps: usize = parts[1].parse().map_err(|_| bad("bad N"))?;
    let seed: u64 = parts[2].parse().map_err(|_| bad("bad seed"))?;
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() != n * steps * 8 {
        return Err(bad("payload length does not match header"));
    }
    let vals = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((n, steps, seed, vals))
}

/// Observable recorded along the chain; the first coordinate by default.
pub type Observable<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

fn first_coordinate(x: &[f64]) -> f64 {
    x[0]
}

struct Stepper<'a> {
    target: &'a Target,
    h: f64,
    noise: f64,
    grad: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'a> Stepper<'a> {
    fn new(target: &'a Target, h: f64, seed: u64) -> Self {
        Stepper { target, h, noise: (2.0 * h).sqrt(), grad: vec![0.0; target.dim], rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn step(&mut self, x: &mut [f64], k: usize) -> Result<(), LangevinError> {
        (self.target.gradient)(x, &mut self.grad);
        if self.grad.iter().any(|g| !g.is_finite()) {
            return Err(LangevinError::NonFinite { step: k, last: x.to_vec() });
        }
        for (xi, gi) in x.iter_mut().zip(&self.grad) {
            let xi_noise: f64 = StandardNormal.sample(&mut self.rng);
            *xi += -self.h * gi + self.noise * xi_noise;
        }
        if let Some(walls) = &self.target.reflect {
            for (xi, (lo, hi)) in x.iter_mut().zip(walls) {
                *xi = reflect_into(*xi, *lo, *hi);
            }
        }
        Ok(())
    }
}

/// Run one chain, storing every state.
pub fn ula_run(target: &Target, cfg: &ChainConfig) -> Result<ChainTrace, LangevinError> {
    ula_run_with(target, cfg, &first_coordinate)
}

pub fn ula_run_with(target: &Target, cfg: &ChainConfig, obs: Observable) -> Result<ChainTrace, LangevinError> {
    cfg.validate(target)?;
    let mut st = Stepper::new(target, cfg.h, cfg.seed);
    let mut x = cfg.init.clone();
    let mut samples = Vec::with_capacity(cfg.steps * target.dim);
    let mut observable = Vec::with_capacity(cfg.steps);
    for k in 0..cfg.steps {
        st.step(&mut x, k)?;
        samples.extend_from_slice(&x);
        observable.push(obs(&x));
    }
    let mut t = ChainTrace { dim: target.dim, seed: cfg.seed, h: cfg.h, burn_in: cfg.burn_in, samples, observable, diagnostics: Diagnostics { iat: f64::NAN, ess: f64::NAN, decay_rate: None } };
    t.diagnostics = t.recompute_diagnostics();
    Ok(t)
}

/// Seed of chain `i` in an ensemble started from `seed`.
pub fn chain_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Run `chains` independent chains in parallel and return the observable
/// series (starting with the initial state) in chain order.
pub fn ensemble_series(target: &Target, cfg: &ChainConfig, chains: usize, obs: Observable) -> Result<EnsembleSeries, LangevinError> {
    cfg.validate(target)?;
    let runs: Vec<Vec<f64>> = (0..chains)
        .into_par_iter()
        .map(|i| {
            let mut st = Stepper::new(target, cfg.h, chain_seed(cfg.seed, i));
            let mut x = cfg.init.clone();
            let mut s = Vec::with_capacity(cfg.steps + 1);
            s.push(obs(&x));
            for k in 0..cfg.steps {
                st.step(&mut x, k)?;
                s.push(obs(&x));
            }
            Ok(s)
        })
        .collect::<Result<_, LangevinError>>()?;
    Ok(EnsembleSeries::from_chains(cfg.h, &runs))
}

/// Full traces of an ensemble, in chain order.
pub fn ensemble_run(target: &Target, cfg: &ChainConfig, chains: usize) -> Result<Vec<ChainTrace>, LangevinError> {
    (0..chains).into_par_iter().map(|i| ula_run(target, &ChainConfig { seed: chain_seed(cfg.seed, i), ..cfg.clone() })).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwaEstimate {
    pub mean: Vec<f64>,
    /// Per-coordinate standard error `sd · √(IAT / N)`.
    pub stderr: Vec<f64>,
}

/// Post-burn-in time average of the state.
pub fn ewa_average(trace: &ChainTrace) -> EwaEstimate {
    let n = trace.steps() - trace.burn_in;
    let mut mean = Vec::with_capacity(trace.dim);
    let mut stderr = Vec::with_capacity(trace.dim);
    for j in 0..trace.dim {
        let c: Vec<f64> = trace.coordinate(j)[trace.burn_in..].to_vec();
        let m = c.iter().sum::<f64>() / n as f64;
        let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n.max(2) - 1) as f64;
        let tau = integrated_autocorrelation_time(&c);
        mean.push(m);
        stderr.push((var * tau / n as f64).sqrt());
    }
    EwaEstimate { mean, stderr }
}

/// Exact stationary variance of ULA on `N(0, 1/ρ)`: the AR(1) fixed point
/// of `X ← (1 − hρ)X + √(2h) ξ`, i.e. `2h / (1 − (1 − hρ)²)`.
pub fn ula_ou_stationary_variance(rho: f64, h: f64) -> f64 {
    2.0 * h / (1.0 - (1.0 - h * rho).powi(2))
}

/// Per-unit-time contraction rate of the ULA mean on the OU target: `−ln(1 − hρ)/h`.
pub fn ula_ou_rate(rho: f64, h: f64) -> f64 {
    -(1.0 - h * rho).ln() / h
}

/// Sample variance of a series and its Monte-Carlo standard error
/// (delta method with the IAT of the centred squares).
pub fn variance_with_stderr(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let m = series.iter().sum::<f64>() / n;
    let sq: Vec<f64> = series.iter().map(|v| (v - m) * (v - m)).collect();
    let var = sq.iter().sum::<f64>() / n;
    let vs = sq.iter().map(|s| (s - var) * (s - var)).sum::<f64>() / (n - 1.0);
    let tau = integrated_autocorrelation_time(&sq);
    (var, (vs * tau / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(h: f64, steps: usize, seed: u64, init: Vec<f64>) -> ChainConfig {
        ChainConfig { h, steps, burn_in: steps / 10, seed, init }
    }

    #[test]
    fn deterministic_for_same_seed() {
        let t = Target::gaussian(1.0, vec![0.0, 0.0]);
        let a = ula_run(&t, &cfg(0.05, 500, 9, vec![1.0, -1.0])).unwrap();
        let b = ula_run(&t, &cfg(0.05, 500, 9, vec![1.0, -1.0])).unwrap();
        assert_eq!(a, b);
        let c = ula_run(&t, &cfg(0.05, 500, 10, vec![1.0, -1.0])).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn ou_stationary_variance() {
        let t = Target::gaussian(1.0, vec![0.0]);
        let h = 0.1;
        let tr = ula_run(&t, &cfg(h, 200_000, 1, vec![0.0])).unwrap();
        let (v, se) = variance_with_stderr(&tr.observable[tr.burn_in..]);
        let exact = ula_ou_stationary_variance(1.0, h);
        assert!((exact - 2.0 / (2.0 - h)).abs() < 1e-14);
        assert!((v - exact).abs() < 3.0 * se, "{v} vs {exact} ± {se}");
    }

    #[test]
    fn flat_target_reflects() {
        let mut t = Target::new(1, Arc::new(|_| 0.0), Arc::new(|_, o| o[0] = 0.0));
        t.reflect = Some(vec![(-1.0, 1.0)]);
        let tr = ula_run(&t, &cfg(0.01, 20_000, 4, vec![0.0])).unwrap();
        assert!(tr.observable.iter().all(|v| (-1.0..=1.0).contains(v)));
        let e = ewa_average(&tr);
        assert!(e.mean[0].abs() < 4.0 * e.stderr[0]);
    }

    #[test]
    fn reflection_folds() {
        assert_eq!(reflect_into(1.5, -1.0, 1.0), 0.5);
        assert_eq!(reflect_into(-1.25, -1.0, 1.0), -0.75);
        assert!((reflect_into(3.5, -1.0, 1.0) - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let t = Target::new(1, Arc::new(|_| 0.0), Arc::new(|x, o| o[0] = if x[0] > 0.5 { f64::NAN } else { -1.0 }));
        match ula_run(&t, &cfg(0.1, 1000, 1, vec![0.0])) {
            Err(LangevinError::NonFinite { last, .. }) => assert!(last[0] > 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let t = Target::gaussian(4.0, vec![0.0]);
        assert!(cfg(0.3, 100, 1, vec![0.0]).validate(&t).is_err());
        assert!(ChainConfig { burn_in: 100, ..cfg(0.01, 100, 1, vec![0.0]) }.validate(&t).is_err());
        assert!(cfg(0.01, 100, 1, vec![0.0, 0.0]).validate(&t).is_err());
    }

    #[test]
    fn ensemble_rate_ou() {
        let t = Target::gaussian(1.0, vec![0.0]);
        let s = ensemble_series(&t, &ChainConfig { h: 0.01, steps: 800, burn_in: 0, seed: 7, init: vec![10.0] }, 64, &|x| x[0]).unwrap();
        let f = fit_decay_rate(&s, Some(0.0), 1.0);
        assert!((f.rate - 1.0).abs() < 0.1, "{f:?}");
    }

    #[test]
    fn sample_dump_round_trip() {
        let t = Target::gaussian(1.0, vec![0.0, 1.0]);
        let tr = ula_run(&t, &cfg(0.05, 50, 3, vec![0.0, 0.0])).unwrap();
        let mut buf = Vec::new();
        tr.write_samples(&mut buf).unwrap();
        assert!(buf.starts_with(b"2 50 3\n"));
        let (n, steps, seed, vals) = read_samples(&mut &buf[..]).unwrap();
        assert_eq!((n, steps, seed), (2, 50, 3));
        assert_eq!(vals, tr.samples);
    }

    #[test]
    fn shifted_mean_ewa() {
        let t = Target::gaussian(1.0, vec![3.0]);
        let tr = ula_run(&t, &cfg(0.05, 40_000, 2, vec![3.0])).unwrap();
        let e = ewa_average(&tr);
        assert!((e.mean[0] - 3.0).abs() < 4.0 * e.stderr[0]);
    }
}
