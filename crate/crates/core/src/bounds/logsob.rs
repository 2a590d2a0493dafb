//! Log-Sobolev constants of perturbed measures.

use serde::{Deserialize, Serialize};

use super::general::ExpCurve;
use super::{optimize_free_params, require_nonneg, BoundError, BoundResult, Margin, ParamBox, ParamSearch, Quantity, TheoremId};
use crate::measures::{ExpTag, MomentSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogSobVariant {
    /// `F` Lipschitz and bounded above.
    BoundedAbove,
    /// `F` Lipschitz with the Herbst estimate of `μ_F(e^{αF})`.
    Herbst,
    /// Exponential integrability of `F` and `|∇F|²`.
    Integrability,
    /// Exponential integrability of `F` and `AF − ½|∇F|²`.
    Generator,
}

/// Inputs for [`bound_logsob`]. The formulas assume `μ(e^{−F}) = 1`; when
/// `log_norm = ln μ(e^{−F})` is given, `F` is shifted by it first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogSobInputs {
    pub c_ls_mu: f64,
    pub c_p_mu_f: f64,
    pub lipschitz: Option<f64>,
    pub sup_f: Option<f64>,
    pub mean_f: Option<f64>,
    pub log_norm: Option<f64>,
    pub moments: Option<MomentSet>,
}

pub fn bound_logsob(inputs: &LogSobInputs, variant: LogSobVariant, search: &ParamSearch) -> Result<BoundResult, BoundError> {
    let a = inputs.c_ls_mu;
    let cp = inputs.c_p_mu_f;
    require_nonneg("C_LS_mu", a)?;
    require_nonneg("C_P_mu_F", cp)?;
    let shift = inputs.log_norm.unwrap_or(0.0);
    let id = match variant {
        LogSobVariant::BoundedAbove => TheoremId::LogSobBoundedAbove,
        LogSobVariant::Herbst => TheoremId::LogSobHerbst,
        LogSobVariant::Integrability => TheoremId::LogSobIntegrability,
        LogSobVariant::Generator => TheoremId::LogSobGenerator,
    };
    let mut r = BoundResult::new(id, Quantity::LogSobolev).input("C_LS_mu", a).input("C_P_mu_F", cp);
    if shift != 0.0 {
        r = r.input("log_norm", shift);
    }
    match variant {
        LogSobVariant::BoundedAbove => {
            let (Some(l), Some(m)) = (inputs.lipschitz, inputs.sup_f) else {
                return Ok(r.refuse_missing(missing(&[("L", inputs.lipschitz.is_none()), ("M", inputs.sup_f.is_none())])));
            };
            require_nonneg("L", l)?;
            let m = m + shift;
            let r = r.input("L", l).input("M", m);
            // (1+θ⁻¹)a + (1+θ)b + C_P(M+2), b = C_P L² a/4, minimized at θ = √(a/b).
            let b = cp * l * l * a / 4.0;
            if b == 0.0 {
                return Ok(r.param("theta", f64::INFINITY).finish(a + cp * (m + 2.0)));
            }
            let theta = (a / b).sqrt();
            if search.closed_form() || a == 0.0 {
                let v = (a.sqrt() + b.sqrt()).powi(2) + cp * (m + 2.0);
                return Ok(r.param("theta", theta).finish(v));
            }
            let f = |t: f64| (1.0 + 1.0 / t) * a + (1.0 + t) * b + cp * (m + 2.0);
            let out = optimize_free_params(&|p| Some(f(p[0])), &[ParamBox::log("theta", 1e-8, 1e8)], search);
            Ok(match out {
                Some(o) => r.param("theta", o.params[0]).finish(o.value),
                None => r.refuse("no feasible theta"),
            })
        }
        LogSobVariant::Herbst => {
            let (Some(l), Some(mf)) = (inputs.lipschitz, inputs.mean_f) else {
                return Ok(r.refuse_missing(missing(&[("L", inputs.lipschitz.is_none()), ("mean_F", inputs.mean_f.is_none())])));
            };
            require_nonneg("L", l)?;
            let mf = mf + shift;
            let r = r.input("L", l).input("mean_F", mf);
            let base = cp * (2.0 + mf);
            if l == 0.0 || cp == 0.0 {
                return Ok(r.param("beta", f64::INFINITY).param("theta", f64::INFINITY).finish(a + base));
            }
            // θ* = 2/(L√C_P) for every β; then (1+1/β)a(1+L√C_P/2)² + L²C_P a β²/2.
            let theta = 2.0 / (l * cp.sqrt());
            let k = (1.0 + l * cp.sqrt() / 2.0).powi(2);
            let full = |beta: f64, theta: f64| (beta + 1.0) * (1.0 + 1.0 / theta) / beta * a + base + l * l * cp * a * ((1.0 + theta) * (1.0 + beta) / (4.0 * beta) + beta * beta / 2.0);
            if search.closed_form() {
                let beta = (k / (l * l * cp)).cbrt();
                return Ok(r.param("beta", beta).param("theta", theta).finish(full(beta, theta)));
            }
            let out = optimize_free_params(&|p| Some(full(p[0], p[1])), &[ParamBox::log("beta", 1e-6, 1e6), ParamBox::log("theta", 1e-6, 1e6)], search);
            Ok(match out {
                Some(o) => r.param("beta", o.params[0]).param("theta", o.params[1]).finish(o.value),
                None => r.refuse("no feasible (beta, theta)"),
            })
        }
        LogSobVariant::Integrability | LogSobVariant::Generator => {
            let gtag = if variant == LogSobVariant::Integrability { ExpTag::GradSq } else { ExpTag::Generator };
            let moments = inputs.moments.clone().unwrap_or_default();
            let sf = ExpCurve::from_moments(&moments, ExpTag::SF).filter(|c| c.max_coef() > 1.0);
            let gc = ExpCurve::from_moments(&moments, gtag);
            if sf.is_none() || gc.is_none() {
                return Ok(r.refuse_missing(missing(&[(ExpTag::SF.name(), sf.is_none()), (gtag.name(), gc.is_none())])));
            }
            let (sf, gc) = (sf.unwrap(), gc.unwrap());
            // Returns (value, δ) at a feasible point.
            let eval = |p: &[f64]| -> Option<(f64, f64)> {
                let (alpha, beta) = (p[0], p[1]);
                if alpha <= 1.0 || beta <= 0.0 {
                    return None;
                }
                let lf = sf.eval(alpha)? / alpha + shift;
                let lg = gc.eval(beta)?;
                if variant == LogSobVariant::Integrability {
                    let theta = p[2];
                    let w = a * (1.0 + theta) / (4.0 * beta);
                    let delta = w + 1.0 / alpha;
                    if delta >= 1.0 {
                        return None;
                    }
                    Some(((a * (1.0 + 1.0 / theta) + cp * (2.0 + w * lg + lf)) / (1.0 - delta), delta))
                } else {
                    let w = a / (2.0 * beta);
                    let delta = w + 1.0 / alpha;
                    if delta >= 1.0 {
                        return None;
                    }
                    Some(((a + cp * (2.0 + w * lg + lf)) / (1.0 - delta), delta))
                }
            };
            let mut boxes = vec![ParamBox::linear("alpha", 1.0, sf.max_coef()), ParamBox::log("beta", gc.max_coef() * 1e-6, gc.max_coef())];
            if variant == LogSobVariant::Integrability {
                boxes.push(ParamBox::log("theta", 1e-4, 1e4));
            }
            let Some(out) = optimize_free_params(&|p| eval(p).map(|v| v.0), &boxes, search) else {
                // Report δ at the pinned or most favourable point.
                let pick = |n: &str, dflt: f64| search.fixed.get(n).copied().unwrap_or(dflt);
                let (alpha, beta, theta) = (pick("alpha", sf.max_coef()), pick("beta", gc.max_coef()), pick("theta", 0.0));
                let delta = if variant == LogSobVariant::Integrability { a * (1.0 + theta) / (4.0 * beta) + 1.0 / alpha } else { a / (2.0 * beta) + 1.0 / alpha };
                return Ok(r.margin(Margin::strict("delta", delta, 1.0)).finish(f64::NAN));
            };
            let (v, delta) = eval(&out.params).expect("optimizer returns a feasible point");
            let mut r = r.margin(Margin::strict("delta", delta, 1.0));
            for (n, p) in out.names.iter().zip(&out.params) {
                r = r.param(n, *p);
            }
            Ok(r.finish(v))
        }
    }
}

fn missing(items: &[(&str, bool)]) -> Vec<String> {
    items.iter().filter(|(_, m)| *m).map(|(n, _)| n.to_string()).collect()
}
