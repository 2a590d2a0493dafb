//! Bounds that use log-concavity of `μ` or `μ_F`.

use std::f64::consts::{LN_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use super::{lipschitz_factor, lipschitz_factor_search, optimize_free_params, require_nonneg, BoundError, BoundResult, Margin, ParamBox, ParamSearch, Quantity, TheoremId};
use crate::measures::MomentSet;

/// `64 ln 2`: the price of turning a weak Poincaré inequality into a strong
/// one for log-concave measures.
pub const BL_FACTOR: f64 = 64.0 * LN_2;

/// `(64√2/π)²`, the constant of the concentration-transfer bound.
pub const CONCENTRATION_CAP: f64 = (64.0 * SQRT_2 / PI) * (64.0 * SQRT_2 / PI);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum CheegerInput {
    /// `C_C`, the mean-centred constant.
    Mean(f64),
    /// `C'_C`, the median constant.
    Median(f64),
    Poincare(f64),
}

/// Every constant derivable from one known constant.
pub fn relate_cheeger_poincare(input: CheegerInput, log_concave: bool) -> Result<Vec<BoundResult>, BoundError> {
    Ok(match input {
        CheegerInput::Median(c) => {
            require_nonneg("C'_C", c)?;
            vec![
                BoundResult::new(TheoremId::CheegerToPoincare, Quantity::Poincare).input("C'_C", c).finish(4.0 * c * c),
                BoundResult::new(TheoremId::CheegerMedianToMean, Quantity::CheegerMean).input("C'_C", c).finish(2.0 * c),
            ]
        }
        CheegerInput::Mean(c) => {
            require_nonneg("C_C", c)?;
            vec![
                BoundResult::new(TheoremId::CheegerMeanToMedian, Quantity::CheegerMedian).input("C_C", c).finish(c),
                BoundResult::new(TheoremId::CheegerToPoincare, Quantity::Poincare).input("C_C", c).finish(4.0 * c * c),
            ]
        }
        CheegerInput::Poincare(c) => {
            require_nonneg("C_P", c)?;
            let v = 16.0 / PI * c.sqrt();
            [Quantity::CheegerMean, Quantity::CheegerMedian]
                .into_iter()
                .map(|q| {
                    let r = BoundResult::new(TheoremId::PoincareToCheeger, q).input("C_P", c);
                    if log_concave {
                        r.finish(v)
                    } else {
                        r.refuse("the converse direction needs a log-concave measure")
                    }
                })
                .collect()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakVariant {
    /// `ν|f − m| ≤ β ‖∇f‖_∞ + s Osc f`, `s < ½`.
    L1,
    /// `Var f ≤ β ν|∇f|² + s Osc² f`, `s < 1/6`.
    L2,
}

/// Weak-to-strong upgrade for a log-concave target. Returns the `C'_C` bound
/// and the induced `C_P ≤ 4 C'_C²`.
pub fn weak_to_strong(beta_s: f64, s: f64, variant: WeakVariant, target_log_concave: bool) -> Result<Vec<BoundResult>, BoundError> {
    require_nonneg("beta", beta_s)?;
    require_nonneg("s", s)?;
    let (id, cap) = match variant {
        WeakVariant::L1 => (TheoremId::WeakToStrongL1, 0.5),
        WeakVariant::L2 => (TheoremId::WeakToStrongL2, 1.0 / 6.0),
    };
    let r = BoundResult::new(id, Quantity::CheegerMedian).input("beta", beta_s).input("s", s).margin(Margin::strict("s", s, cap));
    if !target_log_concave {
        let r = r.refuse("target measure must be log-concave");
        let p = BoundResult { quantity: Quantity::Poincare, ..r.clone() };
        return Ok(vec![r, p]);
    }
    let c = match variant {
        WeakVariant::L1 => 4.0 * beta_s / (PI * (0.5 - s) * (0.5 - s)),
        WeakVariant::L2 => 4.0 * (beta_s * LN_2).sqrt() / (1.0 - 6.0 * s),
    };
    let cc = r.clone().finish(c);
    let cp = BoundResult { quantity: Quantity::Poincare, ..r }.finish(4.0 * c * c);
    Ok(vec![cc, cp])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LogConcaveVariant {
    /// Uses the ratio `μ^{1/2}(e^{−2F})/μ(e^{−F})`.
    PerthS,
    /// Uses `μ_F(|∇F|²)`.
    L2,
    /// Uses `μ_F(|∇F|)` and `C_C(μ)`.
    Cheeger { c_c_mu: f64 },
    /// Uses `μ_F([AF − ½|∇F|²]₊)`.
    Generator,
}

/// Perturbation bounds for a log-concave `μ_F`. `c_p_mu` is `C_P(μ)`;
/// `mu_log_concave` enables the Poincaré form of the Cheeger variant.
pub fn bound_logconcave_perturbation(c_p_mu: f64, moments: &MomentSet, variant: LogConcaveVariant, mu_f_log_concave: bool, mu_log_concave: bool, search: &ParamSearch) -> Result<Vec<BoundResult>, BoundError> {
    require_nonneg("C_P_mu", c_p_mu)?;
    let refuse_all = |rs: Vec<BoundResult>, why: &str| rs.into_iter().map(|r| r.refuse(why)).collect::<Vec<_>>();
    match variant {
        LogConcaveVariant::PerthS => {
            let cc = BoundResult::new(TheoremId::LogConcavePerthS, Quantity::CheegerMedian).input("C_P_mu", c_p_mu);
            let cp = BoundResult::new(TheoremId::LogConcavePerthS, Quantity::Poincare).input("C_P_mu", c_p_mu);
            if !mu_f_log_concave {
                return Ok(refuse_all(vec![cc, cp], "mu_F must be log-concave"));
            }
            let Some(m) = moments.m_ratio else {
                return Ok(vec![cc.refuse_missing(vec!["m_ratio".into()]), cp.refuse_missing(vec!["m_ratio".into()])]);
            };
            if m < 1.0 - 1e-9 {
                return Err(BoundError::InvalidInput { name: "m_ratio".into(), value: m, reason: "must be at least 1".into() });
            }
            let m = m.max(1.0);
            Ok(vec![cc.input("m_ratio", m).finish(32.0 / PI * m * c_p_mu.sqrt()), cp.input("m_ratio", m).finish(4.0 * 32.0 * 32.0 / (PI * PI) * m * m * c_p_mu)])
        }
        LogConcaveVariant::L2 => {
            let r = BoundResult::new(TheoremId::LogConcaveL2, Quantity::Poincare).input("C_P_mu", c_p_mu);
            if !mu_f_log_concave {
                return Ok(vec![r.refuse("mu_F must be log-concave")]);
            }
            let Some(g) = moments.grad_f_l2sq else {
                return Ok(vec![r.refuse_missing(vec!["grad_F_l2sq".into()])]);
            };
            require_nonneg("grad_F_l2sq", g)?;
            let r = r.input("grad_F_l2sq", g);
            let a = c_p_mu * g / 4.0;
            let r = r.margin(Margin::strict("C_P_grad2_over_4", a, 1.0 / 6.0));
            if a >= 1.0 / 6.0 {
                return Ok(vec![r.finish(f64::NAN)]);
            }
            if a == 0.0 {
                return Ok(vec![r.param("eps", f64::INFINITY).margin(Margin::strict("s", 0.0, 1.0 / 6.0)).finish(BL_FACTOR * c_p_mu)]);
            }
            let objective = |e: f64| -> Option<f64> {
                let s = (1.0 + e) * a;
                (e > 0.0 && s < 1.0 / 6.0).then(|| BL_FACTOR * (1.0 + 1.0 / e) * c_p_mu / ((1.0 - 6.0 * s) * (1.0 - 6.0 * s)))
            };
            let eps = if search.closed_form() {
                // Stationary point of (u/(u−1))/(1−6au)², u = 1+ε: 12a u² − 6a u − 1 = 0.
                (6.0 * a + (36.0 * a * a + 48.0 * a).sqrt()) / (24.0 * a) - 1.0
            } else {
                let emax = 1.0 / (6.0 * a) - 1.0;
                match optimize_free_params(&|p| objective(p[0]), &[ParamBox::log("eps", emax * 1e-9, emax)], search) {
                    Some(o) => o.params[0],
                    None => return Ok(vec![r.refuse("no feasible eps")]),
                }
            };
            let s = (1.0 + eps) * a;
            let v = objective(eps).unwrap_or(f64::NAN);
            Ok(vec![r.param("eps", eps).margin(Margin::strict("s", s, 1.0 / 6.0)).finish(v)])
        }
        LogConcaveVariant::Cheeger { c_c_mu } => {
            require_nonneg("C_C_mu", c_c_mu)?;
            let cc = BoundResult::new(TheoremId::LogConcaveCheeger, Quantity::CheegerMedian).input("C_C_mu", c_c_mu);
            let cp = BoundResult::new(TheoremId::LogConcaveCheeger, Quantity::Poincare).input("C_C_mu", c_c_mu).input("C_P_mu", c_p_mu);
            if !mu_f_log_concave {
                return Ok(refuse_all(vec![cc, cp], "mu_F must be log-concave"));
            }
            let Some(g1) = moments.grad_f_l1 else {
                return Ok(vec![cc.refuse_missing(vec!["grad_F_l1".into()]), cp.refuse_missing(vec!["grad_F_l1".into()])]);
            };
            require_nonneg("grad_F_l1", g1)?;
            let s = c_c_mu * g1;
            let q = 1.0 - 2.0 * s;
            let cc = cc.input("grad_F_l1", g1).margin(Margin::strict("s", s, 0.5)).finish(16.0 * c_c_mu / (PI * q * q));
            let cp = cp.input("grad_F_l1", g1).margin(Margin::strict("s", s, 0.5));
            let cp = if mu_log_concave { cp.finish(256.0 * 64.0 / PI.powi(4) * c_p_mu / q.powi(4)) } else { cp.refuse("the Poincaré form needs a log-concave mu") };
            Ok(vec![cc, cp])
        }
        LogConcaveVariant::Generator => {
            let r = BoundResult::new(TheoremId::LogConcaveGenerator, Quantity::Poincare).input("C_P_mu", c_p_mu);
            if !mu_f_log_concave {
                return Ok(vec![r.refuse("mu_F must be log-concave")]);
            }
            let Some(g) = moments.generator_plus else {
                return Ok(vec![r.refuse_missing(vec!["generator_plus".into()])]);
            };
            require_nonneg("generator_plus", g)?;
            let s = c_p_mu * g;
            let q = 1.0 - 3.0 * s;
            Ok(vec![r.input("generator_plus", g).margin(Margin::strict("s", s, 1.0 / 3.0)).finish(BL_FACTOR * c_p_mu / (q * q))])
        }
    }
}

/// Exponential concentration profile `α(r) ≤ 16 e^{−r/√(2 C_P)}`.
pub fn concentration_profile(c_p: f64, r: f64) -> f64 {
    16.0 * (-r / (2.0 * c_p).sqrt()).exp()
}

/// Inverse of [`concentration_profile`]: the radius at which the profile reaches `u`.
pub fn concentration_profile_inverse(c_p: f64, u: f64) -> f64 {
    (2.0 * c_p).sqrt() * (16.0 / u).ln()
}

fn transfer_objective(s: f64, log_m: f64) -> Option<f64> {
    if !(s > 0.0 && s < 0.25) {
        return None;
    }
    let q = 1.0 - 4.0 * s;
    let l = 3.0 * LN_2 + (1.0 / s).ln() + log_m;
    Some(CONCENTRATION_CAP / q.powi(4) * l * l)
}

fn minimize_transfer(log_m: f64, search: &ParamSearch) -> Option<(f64, f64, bool)> {
    let out = optimize_free_params(&|p| transfer_objective(p[0], log_m), &[ParamBox::log("s", 1e-12, 0.25)], search)?;
    Some((out.value, out.params[0], out.grid_fallback))
}

/// Explicit constants `C₁ + C₂ μ(F)²` of the concentration-transfer bound,
/// derived from `(a + b)² ≤ 2a² + 2b²` at the unperturbed optimum `s*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationConstants {
    pub c1: f64,
    pub c2: f64,
    pub s_star: f64,
}

impl ConcentrationConstants {
    pub fn derive(search: &ParamSearch) -> ConcentrationConstants {
        let (v, s, _) = minimize_transfer(0.0, &ParamSearch { fixed: Default::default(), ..search.clone() }).expect("objective is finite on (0, 1/4)");
        let k = CONCENTRATION_CAP / (1.0 - 4.0 * s).powi(4);
        ConcentrationConstants { c1: 2.0 * v, c2: k / 2.0, s_star: s }
    }
}

/// Concentration-transfer bound for a log-concave `μ_F`. Emits the
/// Poincaré bound, the Cheeger bound obtained from the profile chain, and
/// (when `mean_f = μ(F)` is given, `min F = 0`) the `(C₁ + C₂ μ(F)²) C_P` form.
pub fn bound_concentration_transfer(c_p_mu: f64, m_ratio: f64, mean_f: Option<f64>, search: &ParamSearch) -> Result<Vec<BoundResult>, BoundError> {
    require_nonneg("C_P_mu", c_p_mu)?;
    if !(m_ratio >= 1.0) {
        return Err(BoundError::InvalidInput { name: "m_ratio".into(), value: m_ratio, reason: "must be at least 1".into() });
    }
    let log_m = m_ratio.ln();
    let base = BoundResult::new(TheoremId::ConcentrationTransfer, Quantity::Poincare).input("C_P_mu", c_p_mu).input("m_ratio", m_ratio);
    let mut out = Vec::new();
    match minimize_transfer(log_m, search) {
        Some((v, s, flag)) => {
            let mut r = base.clone().param("s", s).margin(Margin::strict("s", s, 0.25));
            if flag {
                r = r.with_note("non-convex line search, grid fallback used");
            }
            out.push(r.finish(v * c_p_mu));
        }
        None => out.push(base.clone().margin(Margin::strict("s", search.fixed.get("s").copied().unwrap_or(f64::NAN), 0.25)).finish(f64::NAN)),
    }
    // C'_C(μ_F) ≤ inf_s 32 α_μ⁻¹((s/2M)²) / (π(1−4s)²).
    let cheeger = |s: f64| -> Option<f64> { (s > 0.0 && s < 0.25).then(|| 32.0 * concentration_profile_inverse(c_p_mu, (s / (2.0 * m_ratio)).powi(2)) / (PI * (1.0 - 4.0 * s).powi(2))) };
    let cc = BoundResult { quantity: Quantity::CheegerMedian, ..base.clone() };
    out.push(match optimize_free_params(&|p| cheeger(p[0]), &[ParamBox::log("s", 1e-12, 0.25)], search) {
        Some(o) => cc.param("s", o.params[0]).margin(Margin::strict("s", o.params[0], 0.25)).finish(o.value),
        None => cc.refuse("no feasible s"),
    });
    if let Some(mf) = mean_f {
        require_nonneg("mean_F", mf)?;
        let k = ConcentrationConstants::derive(search);
        let r = BoundResult::new(TheoremId::ConcentrationRemark, Quantity::Poincare).input("C_P_mu", c_p_mu).input("mean_F", mf).param("C1", k.c1).param("C2", k.c2).param("s", k.s_star);
        out.push(r.finish((k.c1 + k.c2 * mf * mf) * c_p_mu));
    }
    Ok(out)
}

/// Modified Brascamp–Lieb prefactor `inf_ε (1+ε⁻¹)/(1 − ¼(1+ε)κ)` and,
/// for log-concave `μ_F`, the bound `64 ln2 · prefactor · ∫‖Hess V⁻¹‖_HS dμ`.
pub fn bound_brascamp_lieb_perturbed(kappa: f64, hs_integral: Option<f64>, mu_f_log_concave: bool, search: &ParamSearch) -> Result<Vec<BoundResult>, BoundError> {
    require_nonneg("kappa", kappa)?;
    let c = kappa / 4.0;
    let pre = BoundResult::new(TheoremId::BrascampLiebPrefactor, Quantity::Prefactor).input("kappa", kappa).margin(Margin::strict("kappa", kappa, 4.0));
    let pf = if search.closed_form() { lipschitz_factor(c).map(|(f, e)| (f, e, false)) } else { lipschitz_factor_search(c, search) };
    let cp = BoundResult::new(TheoremId::BrascampLiebPoincare, Quantity::Poincare).input("kappa", kappa).margin(Margin::strict("kappa", kappa, 4.0));
    let Some((f, eps, _)) = pf else {
        return Ok(vec![pre.finish(f64::NAN), cp.finish(f64::NAN)]);
    };
    let pre = pre.param("eps", eps).finish(f);
    let cp = match hs_integral {
        _ if !mu_f_log_concave => cp.refuse("mu_F must be log-concave"),
        None => cp.refuse_missing(vec!["hs_integral".into()]),
        Some(h) => {
            require_nonneg("hs_integral", h)?;
            cp.input("hs_integral", h).param("eps", eps).finish(BL_FACTOR * f * h)
        }
    };
    Ok(vec![pre, cp])
}

/// Gaussian perturbation `F = ρ|x|²/2` of a log-concave `μ`:
/// `min(1/ρ, (C₁ + C₂ μ(F)²) C_P(μ))`, plus, for isotropic `μ`, the
/// `ρ`-free envelope `sup_ρ min(1/ρ, (C₁ + C₂ ρ²n²/4) C_P(μ))`.
pub fn bound_gaussian_perturbation_forward(c_p_mu: f64, n: usize, rho: f64, mean_f: Option<f64>, isotropic: bool, search: &ParamSearch) -> Result<Vec<BoundResult>, BoundError> {
    require_nonneg("C_P_mu", c_p_mu)?;
    let k = ConcentrationConstants::derive(search);
    let mut r = BoundResult::new(TheoremId::GaussianPerturbation, Quantity::Poincare).input("C_P_mu", c_p_mu).input("rho", rho).param("C1", k.c1).param("C2", k.c2);
    let mf = match (mean_f, isotropic) {
        (Some(m), _) => Some(m),
        (None, true) => Some(rho * n as f64 / 2.0),
        (None, false) => None,
    };
    let first = match mf {
        None => r.refuse_missing(vec!["mean_F".into()]),
        Some(m) => {
            r = r.input("mean_F", m);
            let conc = (k.c1 + k.c2 * m * m) * c_p_mu;
            if rho > 0.0 && 1.0 / rho < conc {
                r.param("branch", 0.0).finish(1.0 / rho)
            } else {
                r.param("branch", 1.0).finish(conc)
            }
        }
    };
    let env = BoundResult::new(TheoremId::GaussianPerturbationEnvelope, Quantity::Poincare).input("C_P_mu", c_p_mu).input("n", n as f64).with_note("constant composed from traced pieces, not quoted");
    let env = if !isotropic || c_p_mu <= 0.0 {
        env.refuse("the envelope needs an isotropic log-concave mu")
    } else {
        let nn = n as f64;
        let g = |lr: f64| {
            let rho = lr.exp();
            rho * (k.c1 + k.c2 * rho * rho * nn * nn / 4.0) * c_p_mu - 1.0
        };
        let (mut lo, mut hi) = (-200.0, 200.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let rho = (0.5 * (lo + hi)).exp();
        let v = 1.0 / rho;
        env.param("rho", rho).param("C", v / (nn.powf(2.0 / 3.0) * c_p_mu.cbrt())).finish(v)
    };
    Ok(vec![first, env])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheeger_poincare_relations() {
        let r = relate_cheeger_poincare(CheegerInput::Median(1.0), false).unwrap();
        assert_eq!(r[0].value, Some(4.0));
        let r = relate_cheeger_poincare(CheegerInput::Poincare(4.0), true).unwrap();
        assert!((r[0].value.unwrap() - 32.0 / PI).abs() < 1e-14);
        assert!((r[0].value.unwrap() - 10.185_916_357_881_302).abs() < 1e-12);
        let r = relate_cheeger_poincare(CheegerInput::Poincare(4.0), false).unwrap();
        assert!(r.iter().all(|b| !b.applicable));
    }

    #[test]
    fn weak_to_strong_examples() {
        let r = weak_to_strong(1.0, 0.0, WeakVariant::L1, true).unwrap();
        assert!((r[0].value.unwrap() - 16.0 / PI).abs() < 1e-14);
        assert!((r[0].value.unwrap() - 5.092_958_178_940_651).abs() < 1e-12);
        let r = weak_to_strong(1.0, 0.0, WeakVariant::L2, true).unwrap();
        assert!((r[0].value.unwrap() - 3.330_218_444_630_791_6).abs() < 1e-12);
        assert!(!weak_to_strong(1.0, 1.0 / 6.0, WeakVariant::L2, true).unwrap()[0].applicable);
    }

    fn ms(f: impl FnOnce(&mut MomentSet)) -> MomentSet {
        let mut m = MomentSet::default();
        f(&mut m);
        m
    }

    #[test]
    fn perths_constant_perturbation() {
        let m = ms(|m| m.m_ratio = Some(1.0));
        let r = bound_logconcave_perturbation(1.0, &m, LogConcaveVariant::PerthS, true, true, &ParamSearch::default()).unwrap();
        assert!((r[0].value.unwrap() - 32.0 / PI).abs() < 1e-14);
        assert!((r[1].value.unwrap() - 4096.0 / (PI * PI)).abs() < 1e-10);
    }

    #[test]
    fn l2_unperturbed_limit_and_closed_form() {
        let m = ms(|m| m.grad_f_l2sq = Some(0.0));
        let r = bound_logconcave_perturbation(2.0, &m, LogConcaveVariant::L2, true, true, &ParamSearch::default()).unwrap();
        assert!((r[0].value.unwrap() - 64.0 * LN_2 * 2.0).abs() < 1e-12);
        let m = ms(|m| m.grad_f_l2sq = Some(0.1));
        let a = bound_logconcave_perturbation(1.0, &m, LogConcaveVariant::L2, true, true, &ParamSearch::default()).unwrap()[0].value.unwrap();
        let b = bound_logconcave_perturbation(1.0, &m, LogConcaveVariant::L2, true, true, &ParamSearch::golden()).unwrap()[0].value.unwrap();
        assert!((a - b).abs() / a < 1e-9, "{a} {b}");
        // Dense scan over ε.
        let best = (1..100_000).map(|i| i as f64 * 1e-4).filter(|e| (1.0 + e) * 0.025 < 1.0 / 6.0).map(|e| 64.0 * LN_2 * (1.0 + 1.0 / e) / (1.0 - 6.0 * (1.0 + e) * 0.025).powi(2)).fold(f64::INFINITY, f64::min);
        assert!(a <= best * (1.0 + 1e-9));
    }

    #[test]
    fn generator_example() {
        let m = ms(|m| m.generator_plus = Some(1.0 / 24.0));
        let r = bound_logconcave_perturbation(4.0, &m, LogConcaveVariant::Generator, true, true, &ParamSearch::default()).unwrap();
        assert!((r[0].value.unwrap() - 1024.0 * LN_2).abs() < 1e-9);
        assert!((r[0].value.unwrap() - 709.782_712_893_384).abs() < 1e-9);
    }

    #[test]
    fn cheeger_variant_gates() {
        let m = ms(|m| m.grad_f_l1 = Some(0.25));
        let r = bound_logconcave_perturbation(1.0, &m, LogConcaveVariant::Cheeger { c_c_mu: 1.0 }, true, true, &ParamSearch::default()).unwrap();
        assert!((r[0].value.unwrap() - 64.0 / PI).abs() < 1e-12);
        assert!((r[1].value.unwrap() - 256.0 * 64.0 * 16.0 / PI.powi(4)).abs() < 1e-9);
        let r = bound_logconcave_perturbation(1.0, &m, LogConcaveVariant::Cheeger { c_c_mu: 2.0 }, true, true, &ParamSearch::default()).unwrap();
        assert!(!r[0].applicable);
        let r = bound_logconcave_perturbation(1.0, &m, LogConcaveVariant::Cheeger { c_c_mu: 1.0 }, false, true, &ParamSearch::default()).unwrap();
        assert!(!r[0].applicable);
    }

    #[test]
    fn concentration_cap_literal() {
        assert!((CONCENTRATION_CAP - 8192.0 / (PI * PI)).abs() < 1e-10, "{CONCENTRATION_CAP}");
    }

    #[test]
    fn concentration_fixed_s() {
        let r = bound_concentration_transfer(1.0, 1.0, None, &ParamSearch::default().fix("s", 0.125)).unwrap();
        let l = 3.0 * LN_2 + 8f64.ln();
        let expect = (64.0 * SQRT_2 / PI).powi(2) * 16.0 * l * l;
        assert!((r[0].value.unwrap() - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn concentration_objective_is_convex_in_log_s() {
        let f = |x: f64| transfer_objective(x.exp(), 0.0).unwrap();
        let xs: Vec<f64> = (1..200).map(|i| (0.25f64).ln() - 0.1 * i as f64).collect();
        for w in xs.windows(3) {
            assert!(f(w[0]) + f(w[2]) - 2.0 * f(w[1]) >= -1e-9 * f(w[1]));
        }
        let a = bound_concentration_transfer(1.0, 1.0, None, &ParamSearch::default()).unwrap()[0].value.unwrap();
        let b = bound_concentration_transfer(1.0, 1f64.exp(), None, &ParamSearch::default()).unwrap()[0].value.unwrap();
        assert!(b > a);
        assert!(bound_concentration_transfer(1.0, 0.5, None, &ParamSearch::default()).is_err());
    }

    #[test]
    fn brascamp_lieb_examples() {
        let s = ParamSearch::default();
        assert_eq!(bound_brascamp_lieb_perturbed(0.0, None, false, &s).unwrap()[0].value, Some(1.0));
        assert!((bound_brascamp_lieb_perturbed(1.0, None, false, &s).unwrap()[0].value.unwrap() - 4.0).abs() < 1e-12);
        assert!(!bound_brascamp_lieb_perturbed(4.0, None, false, &s).unwrap()[0].applicable);
        let r = bound_brascamp_lieb_perturbed(1.0, Some(0.5), true, &s).unwrap();
        assert!((r[1].value.unwrap() - 64.0 * LN_2 * 2.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_forward_limits() {
        let s = ParamSearch::default();
        let k = ConcentrationConstants::derive(&s);
        let r = bound_gaussian_perturbation_forward(1.0, 4, 0.0, Some(0.0), false, &s).unwrap();
        assert!((r[0].value.unwrap() - k.c1).abs() < 1e-9);
        let r = bound_gaussian_perturbation_forward(1.0, 4, 1e9, None, true, &s).unwrap();
        assert!(r[0].value.unwrap() <= 1e-9);
        let env = &bound_gaussian_perturbation_forward(4.0, 8, 1.0, None, true, &s).unwrap()[1];
        let rho = env.params["rho"];
        let lhs = 1.0 / rho;
        let rhs = (k.c1 + k.c2 * rho * rho * 64.0 / 4.0) * 4.0;
        assert!((lhs - rhs).abs() / lhs < 1e-9);
    }
}
