//! Autocorrelation, effective sample size and decay-rate fitting.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Sokal's window constant for the automatic IAT cutoff.
pub const SOKAL_C: f64 = 5.0;

/// Normalized autocorrelation `ρ(0..len)` computed by zero-padded FFT.
pub fn autocorrelation(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return vec![1.0; n];
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        let mut out = vec![0.0; n];
        out[0] = 1.0;
        return out;
    }
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// Integrated autocorrelation time `1 + 2 Σ ρ(t)` with Sokal's adaptive window.
pub fn integrated_autocorrelation_time(series: &[f64]) -> f64 {
    let rho = autocorrelation(series);
    let mut tau = 1.0;
    for (m, r) in rho.iter().enumerate().skip(1) {
        tau += 2.0 * r;
        if m as f64 >= SOKAL_C * tau {
            break;
        }
    }
    tau.max(1.0)
}

pub fn effective_sample_size(series: &[f64]) -> f64 {
    series.len() as f64 / integrated_autocorrelation_time(series)
}

/// Cross-chain mean of an observable at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSeries {
    pub h: f64,
    pub chains: usize,
    pub mean: Vec<f64>,
    /// Standard error of `mean` from the cross-chain spread.
    pub stderr: Vec<f64>,
}

impl EnsembleSeries {
    pub fn from_chains(h: f64, series: &[Vec<f64>]) -> Self {
        let k = series.len();
        let len = series.iter().map(Vec::len).min().unwrap_or(0);
        let mut mean = vec![0.0; len];
        let mut stderr = vec![0.0; len];
        for t in 0..len {
            let m = series.iter().map(|s| s[t]).sum::<f64>() / k as f64;
            let v = if k > 1 { series.iter().map(|s| (s[t] - m).powi(2)).sum::<f64>() / (k - 1) as f64 } else { 0.0 };
            mean[t] = m;
            stderr[t] = (v / k as f64).sqrt();
        }
        EnsembleSeries { h, chains: k, mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub stderr: f64,
    pub r_squared: f64,
    /// Fitted time window.
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
    /// Set when no linear regime was found (`R² < 0.95` or too few points).
    pub flagged: bool,
}

/// Minimum `R²` of an accepted fit.
pub const MIN_R_SQUARED: f64 = 0.95;

/// Deviations below this many standard errors are treated as noise.
pub const NOISE_SIGMAS: f64 = 4.0;

/// Least-squares slope of `ln|mean(t) − stationary|` against `t`.
///
/// The fit starts once the deviation has dropped below `upper` times its
/// initial value and stops at the first step where it falls under
/// [`NOISE_SIGMAS`] standard errors. Without `stationary`, the mean of the
/// last fifth of the series is used.
pub fn fit_decay_rate(series: &EnsembleSeries, stationary: Option<f64>, upper: f64) -> DecayFit {
    let n = series.mean.len();
    let tail = (n / 5).max(1);
    let target = stationary.unwrap_or_else(|| series.mean[n - tail..].iter().sum::<f64>() / tail as f64);
    let dev: Vec<f64> = series.mean.iter().map(|m| (m - target).abs()).collect();
    let d0 = dev.first().copied().unwrap_or(0.0);
    let start = dev.iter().position(|d| *d <= upper * d0).unwrap_or(0);
    let end = (start..n).find(|&i| dev[i] <= NOISE_SIGMAS * series.stderr[i] || dev[i] == 0.0).unwrap_or(n);
    let pts: Vec<(f64, f64)> = (start..end).map(|i| (i as f64 * series.h, dev[i].ln())).collect();
    let (t_start, t_end) = (start as f64 * series.h, end.saturating_sub(1) as f64 * series.h);
    if pts.len() < 3 {
        return DecayFit { rate: f64::NAN, stderr: f64::NAN, r_squared: 0.0, t_start, t_end, points: pts.len(), flagged: true };
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sty / stt;
    let resid: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mt)).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - resid / syy } else { 0.0 };
    let se = (resid / (k - 2.0) / stt).sqrt();
    DecayFit { rate: -slope, stderr: se, r_squared: r2, t_start, t_end, points: pts.len(), flagged: r2 < MIN_R_SQUARED }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn white_noise_iat_near_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let tau = integrated_autocorrelation_time(&x);
        assert!((tau - 1.0).abs() < 0.15, "{tau}");
    }

    #[test]
    fn ar1_iat_matches_closed_form() {
        // τ = (1+φ)/(1−φ).
        let phi: f64 = 0.8;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut x = 0.0;
        let s: Vec<f64> = (0..200_000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + e;
                x
            })
            .collect();
        let tau = integrated_autocorrelation_time(&s);
        assert!((tau - 9.0).abs() / 9.0 < 0.1, "{tau}");
    }

    #[test]
    fn autocorrelation_direct_check() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        let rho = autocorrelation(&x);
        let m = 3.0;
        let c = |t: usize| (0..5 - t).map(|i| (x[i] - m) * (x[i + t] - m)).sum::<f64>();
        for t in 0..5 {
            assert!((rho[t] - c(t) / c(0)).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_exponential_fit() {
        let h = 0.01;
        let mean: Vec<f64> = (0..1000).map(|i| 5.0 * (-2.0 * i as f64 * h).exp()).collect();
        let s = EnsembleSeries { h, chains: 1, stderr: vec![1e-3; mean.len()], mean };
        let f = fit_decay_rate(&s, Some(0.0), 1.0);
        assert!((f.rate - 2.0).abs() < 1e-9);
        assert!(!f.flagged);
    }
}
