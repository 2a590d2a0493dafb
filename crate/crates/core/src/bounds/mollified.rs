//! Constants of compactly supported measures convolved with a smooth kernel.

use serde::{Deserialize, Serialize};

use super::{lipschitz_factor, lipschitz_factor_search, optimize_free_params, require_nonneg, require_positive, BoundError, BoundResult, Margin, ParamBox, ParamSearch, Quantity, TheoremId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MollifiedVariant {
    /// `C_P(ν * γ_σ)`.
    GaussianPoincare,
    /// `C_LS(ν * γ_σ)`.
    GaussianLogSob,
    /// `C_P(ν * e^{−H})` with `sup |Hess H| = k` and `C_P(e^{−H}) = c_p_mu`.
    GeneralH { k: f64, c_p_mu: f64 },
    /// `C_P` of `X + σY` with `Y ~ e^{−H}`.
    Scaled { k: f64, c_p_mu: f64 },
}

pub fn bound_mollified(radius: f64, sigma: f64, variant: MollifiedVariant, search: &ParamSearch) -> Result<BoundResult, BoundError> {
    require_nonneg("R", radius)?;
    let (id, c, base) = match variant {
        MollifiedVariant::GaussianPoincare | MollifiedVariant::GaussianLogSob => {
            require_positive("sigma", sigma)?;
            (TheoremId::MollifiedGaussianPoincare, radius * radius / (4.0 * sigma * sigma), sigma * sigma)
        }
        MollifiedVariant::GeneralH { k, c_p_mu } => {
            require_nonneg("K", k)?;
            require_nonneg("C_P_mu", c_p_mu)?;
            (TheoremId::MollifiedGeneral, k * k * radius * radius * c_p_mu / 4.0, c_p_mu)
        }
        MollifiedVariant::Scaled { k, c_p_mu } => {
            require_nonneg("K", k)?;
            require_nonneg("C_P_mu", c_p_mu)?;
            require_positive("sigma", sigma)?;
            (TheoremId::MollifiedScaled, k * k * radius * radius * c_p_mu / (4.0 * sigma * sigma), c_p_mu * sigma * sigma)
        }
    };
    let mut r = BoundResult::new(id, Quantity::Poincare).input("R", radius);
    if !matches!(variant, MollifiedVariant::GeneralH { .. }) {
        r = r.input("sigma", sigma);
    }
    if let MollifiedVariant::GeneralH { k, c_p_mu } | MollifiedVariant::Scaled { k, c_p_mu } = variant {
        r = r.input("K", k).input("C_P_mu", c_p_mu);
    }
    // Poincaré factor P = inf_ε (1+ε⁻¹)/(1−s), s = (1+ε)c.
    let pf = if search.closed_form() { lipschitz_factor(c).map(|(f, e)| (f, e, false)) } else { lipschitz_factor_search(c, search) };
    let Some((p, eps, _)) = pf else {
        let r = r.margin(Margin::strict("c", c, 1.0));
        let r = if variant == MollifiedVariant::GaussianLogSob { BoundResult { theorem: TheoremId::MollifiedGaussianLogSob, quantity: Quantity::LogSobolev, ..r } } else { r };
        return Ok(r.finish(f64::NAN));
    };
    let s = if eps.is_infinite() { c.sqrt() } else { (1.0 + eps) * c };
    let r = r.param("eps", eps).margin(Margin::strict("s", s, 1.0));
    if variant != MollifiedVariant::GaussianLogSob {
        return Ok(r.finish(p * base));
    }

    let r = BoundResult { theorem: TheoremId::MollifiedGaussianLogSob, quantity: Quantity::LogSobolev, ..r };
    let s2 = sigma * sigma;
    let r2 = radius * radius;
    let value = |beta: f64, theta: f64| (2.0 * (beta + 1.0) * (1.0 + 1.0 / theta) / beta + 5.0 * p) * s2 + 2.0 * p * ((1.0 + theta) * (1.0 + beta) / (4.0 * beta) + beta * beta / 2.0) * r2;
    if radius == 0.0 {
        return Ok(r.param("beta", f64::INFINITY).param("theta", f64::INFINITY).finish(7.0 * s2));
    }
    let theta = 2.0 * sigma / (radius * p.sqrt());
    if search.closed_form() {
        let k = 2.0 * s2 * (1.0 + 1.0 / theta) + p * r2 * (1.0 + theta) / 2.0;
        let beta = (k / (2.0 * p * r2)).cbrt();
        return Ok(r.param("beta", beta).param("theta", theta).finish(value(beta, theta)));
    }
    let out = optimize_free_params(&|q| Some(value(q[0], q[1])), &[ParamBox::log("beta", 1e-6, 1e6), ParamBox::log("theta", 1e-6, 1e6)], search);
    Ok(match out {
        Some(o) => r.param("beta", o.params[0]).param("theta", o.params[1]).finish(o.value),
        None => r.refuse("no feasible (beta, theta)"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(r: f64, s: f64) -> BoundResult {
        bound_mollified(r, s, MollifiedVariant::GaussianPoincare, &ParamSearch::default()).unwrap()
    }

    #[test]
    fn point_mass_gives_gaussian_constant() {
        assert_eq!(gp(0.0, 1.7).value, Some(1.7 * 1.7));
    }

    #[test]
    fn two_atoms_at_sigma_two() {
        let r = gp(1.0, 2.0);
        assert!((r.value.unwrap() - 64.0 / 9.0).abs() < 1e-12);
        assert!((r.params["eps"] - 3.0).abs() < 1e-12);
        let g = bound_mollified(1.0, 2.0, MollifiedVariant::GaussianPoincare, &ParamSearch::grid(400)).unwrap();
        assert!((g.value.unwrap() - 64.0 / 9.0).abs() / (64.0 / 9.0) < 1e-6);
    }

    #[test]
    fn sigma_above_half_radius_applies() {
        assert!((gp(1.0, 1.0).value.unwrap() - 4.0).abs() < 1e-12);
        assert!(!gp(1.0, 0.5).applicable);
        assert!(gp(1.0, 0.51).applicable);
    }

    #[test]
    fn logsob_variants() {
        let r0 = bound_mollified(0.0, 1.0, MollifiedVariant::GaussianLogSob, &ParamSearch::default()).unwrap();
        assert_eq!(r0.value, Some(7.0));
        let a = bound_mollified(1.0, 2.0, MollifiedVariant::GaussianLogSob, &ParamSearch::default()).unwrap().value.unwrap();
        let b = bound_mollified(1.0, 2.0, MollifiedVariant::GaussianLogSob, &ParamSearch::golden()).unwrap().value.unwrap();
        assert!((a - b).abs() / a < 1e-6, "{a} {b}");
        assert_eq!(bound_mollified(1.0, 2.0, MollifiedVariant::GaussianLogSob, &ParamSearch::default()).unwrap().quantity, Quantity::LogSobolev);
    }

    #[test]
    fn scaled_reduces_to_gaussian_for_unit_kernel() {
        // H = |x|²/2: K = 1, C_P = 1.
        let s = bound_mollified(1.0, 2.0, MollifiedVariant::Scaled { k: 1.0, c_p_mu: 1.0 }, &ParamSearch::default()).unwrap();
        assert!((s.value.unwrap() - 64.0 / 9.0).abs() < 1e-12);
        let g = bound_mollified(1.0, 0.0, MollifiedVariant::GeneralH { k: 1.0, c_p_mu: 1.0 }, &ParamSearch::default()).unwrap();
        assert!((g.value.unwrap() - 4.0).abs() < 1e-12);
    }
}
