//! Bounds that need no log-concavity: bounded and Lipschitz perturbations,
//! the generator condition and the entropy method.

use serde::{Deserialize, Serialize};

use super::{lipschitz_factor, lipschitz_factor_search, optimize_free_params, require_nonneg, BoundError, BoundResult, Margin, ParamBox, ParamSearch, Quantity, TheoremId};
use crate::measures::{Certified, ExpTag, MomentSet};

/// `e^{Osc F}·c`, for `c` either `C_P(μ)` or `C_LS(μ)`.
pub fn bound_holley_stroock(c: f64, quantity: Quantity, osc: Certified) -> Result<BoundResult, BoundError> {
    require_nonneg("c", c)?;
    let r = BoundResult::new(TheoremId::HolleyStroock, quantity).input("c", c);
    match osc {
        Certified::Finite(o) => {
            require_nonneg("osc", o)?;
            Ok(r.input("osc", o).param("factor", o.exp()).finish(o.exp() * c))
        }
        Certified::Infinite => Ok(r.refuse("oscillation is infinite")),
        Certified::Unknown => Ok(r.refuse_missing(vec!["osc".into()])),
    }
}

/// `C_P ≤ 1/ρ` and `C_LS ≤ 2/ρ` for `Hess V ≥ ρ`.
pub fn bakry_emery(rho: f64) -> Vec<BoundResult> {
    let mk = |q, v: f64| {
        let r = BoundResult::new(TheoremId::BakryEmery, q).input("rho", rho).margin(Margin::strict("-rho", -rho, 0.0));
        r.finish(v)
    };
    vec![mk(Quantity::Poincare, 1.0 / rho), mk(Quantity::LogSobolev, 2.0 / rho)]
}

/// `C_P(μ_F) ≤ C (ln n)^{(2−p)/p} C_P(μ)` for `V = Σ|x_i|^p`, `1 ≤ p ≤ 2`,
/// `n ≥ 2` and even convex `F`. `C` is not explicit; it is passed in and the
/// result is flagged untraced.
pub fn barthe_klartag(c_p_mu: f64, n: usize, p: f64, f_even_convex: bool, constant: f64) -> Result<BoundResult, BoundError> {
    require_nonneg("C_P_mu", c_p_mu)?;
    let mut r = BoundResult::new(TheoremId::BartheKlartag, Quantity::Poincare).input("C_P_mu", c_p_mu).input("C", constant).param("p", p).param("n", n as f64);
    r.untraced = true;
    if !f_even_convex {
        return Ok(r.refuse("F must be even and convex"));
    }
    if !(1.0..=2.0).contains(&p) {
        return Ok(r.refuse(format!("exponent p = {p} outside [1, 2]")));
    }
    if n < 2 {
        return Ok(r.refuse("dimension must be at least 2"));
    }
    let v = constant * (n as f64).ln().powf((2.0 - p) / p) * c_p_mu;
    Ok(r.finish(v))
}

/// Bound for an `L`-Lipschitz perturbation,
/// `inf_ε (1+ε⁻¹) C_P / (1 − ¼(1+ε) C_P L²)`.
pub fn bound_lipschitz_poincare(c_p_mu: f64, l: f64, search: &ParamSearch) -> Result<BoundResult, BoundError> {
    require_nonneg("C_P_mu", c_p_mu)?;
    require_nonneg("L", l)?;
    let c = c_p_mu * l * l / 4.0;
    let r = BoundResult::new(TheoremId::LipschitzPoincare, Quantity::Poincare).input("C_P_mu", c_p_mu).input("L", l).margin(Margin::strict("L2_C_P", l * l * c_p_mu, 4.0));
    if c >= 1.0 {
        return Ok(r.finish(f64::NAN));
    }
    if let Some(&eps) = search.fixed.get("eps") {
        let s = (1.0 + eps) * c;
        let r = r.param("eps", eps).margin(Margin::strict("s", s, 1.0));
        return Ok(if eps > 0.0 && s < 1.0 { r.finish((1.0 + 1.0 / eps) * c_p_mu / (1.0 - s)) } else { r.finish(f64::NAN) });
    }
    let (factor, eps, flag) = if search.closed_form() {
        let (f, e) = lipschitz_factor(c).expect("c < 1");
        (f, e, false)
    } else {
        match lipschitz_factor_search(c, search) {
            Some(v) => v,
            None => return Ok(r.refuse("no feasible eps")),
        }
    };
    let s = if eps.is_infinite() { c.sqrt() } else { (1.0 + eps) * c };
    let mut r = r.param("eps", eps).margin(Margin::strict("s", s, 1.0));
    if flag {
        r = r.with_note("non-convex line search, grid fallback used");
    }
    Ok(r.finish(factor * c_p_mu))
}

/// `C'_C(μ_F) ≤ C_C(μ) / (1 − C_C(μ) L)`.
pub fn bound_lipschitz_cheeger(c_c_mu: f64, l: f64) -> Result<BoundResult, BoundError> {
    require_nonneg("C_C_mu", c_c_mu)?;
    require_nonneg("L", l)?;
    let s = c_c_mu * l;
    Ok(BoundResult::new(TheoremId::LipschitzCheeger, Quantity::CheegerMedian).input("C_C_mu", c_c_mu).input("L", l).margin(Margin::strict("s", s, 1.0)).finish(c_c_mu / (1.0 - s)))
}

/// `C_P(μ_F) ≤ C_P(μ)/ε` with `ε = 1 − C_P(μ) G⁺/2`, where
/// `G⁺ = sup (AF − ½|∇F|²)₊`. On a restricted support the caller must also
/// certify `∂ₙF ≥ 0` on the boundary.
pub fn bound_generator_poincare(c_p_mu: f64, g_plus_sup: f64, restricted: bool, boundary_ok: bool) -> Result<BoundResult, BoundError> {
    require_nonneg("C_P_mu", c_p_mu)?;
    require_nonneg("G_plus_sup", g_plus_sup)?;
    let prod = c_p_mu * g_plus_sup;
    let eps = 1.0 - prod / 2.0;
    let r = BoundResult::new(TheoremId::GeneratorPoincare, Quantity::Poincare).input("C_P_mu", c_p_mu).input("G_plus_sup", g_plus_sup).param("eps", eps).margin(Margin::strict("C_P_G_plus", prod, 2.0));
    if restricted && !boundary_ok {
        return Ok(r.refuse("restricted support needs a nonnegative normal derivative of F on the boundary"));
    }
    Ok(r.finish(c_p_mu / eps))
}

/// Upper envelope of a log-moment-generating function `c ↦ ln E e^{c h}`
/// from sampled values. The function is convex with value 0 at `c = 0`, so
/// chords lie above it and linear interpolation is a valid upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpCurve {
    points: Vec<(f64, f64)>,
}

impl ExpCurve {
    pub fn from_moments(m: &MomentSet, tag: ExpTag) -> Option<ExpCurve> {
        let mut points: Vec<(f64, f64)> = m.exp_curve(tag).into_iter().filter(|(c, _)| *c > 0.0).collect();
        if points.is_empty() {
            return None;
        }
        points.insert(0, (0.0, 0.0));
        Some(ExpCurve { points })
    }

    pub fn max_coef(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }

    pub fn eval(&self, c: f64) -> Option<f64> {
        if !(0.0..=self.max_coef()).contains(&c) {
            return None;
        }
        let i = self.points.partition_point(|p| p.0 < c);
        if i == 0 {
            return Some(self.points[0].1);
        }
        let (c0, v0) = self.points[i - 1];
        let (c1, v1) = self.points[i];
        Some(v0 + (v1 - v0) * (c - c0) / (c1 - c0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyVariant {
    /// Moments of `|∇F|²`.
    Gradient,
    /// Moments of `AF − ½|∇F|²`.
    Generator,
}

/// Entropy-method Poincaré bound; minimizes over `(s, t, θ, α, ε)` (or
/// `(s, t, α)` for the generator variant) inside the feasible set
/// `D < 1`, `T' < 1`.
pub fn bound_entropy_poincare(c_p_mu: f64, c_ls_mu: f64, moments: &MomentSet, variant: EntropyVariant, search: &ParamSearch) -> Result<BoundResult, BoundError> {
    require_nonneg("C_P_mu", c_p_mu)?;
    require_nonneg("C_LS_mu", c_ls_mu)?;
    let id = match variant {
        EntropyVariant::Gradient => TheoremId::EntropyPoincareGradient,
        EntropyVariant::Generator => TheoremId::EntropyPoincareGenerator,
    };
    let r = BoundResult::new(id, Quantity::Poincare).input("C_P_mu", c_p_mu).input("C_LS_mu", c_ls_mu);
    let grad_tag = match variant {
        EntropyVariant::Gradient => ExpTag::GradSq,
        EntropyVariant::Generator => ExpTag::Generator,
    };
    let sf = ExpCurve::from_moments(moments, ExpTag::SF).filter(|c| c.max_coef() > 1.0);
    let gc = ExpCurve::from_moments(moments, grad_tag);
    let neg = moments.exp(ExpTag::BaseNegF, 1.0).and_then(|v| v.finite());
    let mut missing = Vec::new();
    if sf.is_none() {
        missing.push(ExpTag::SF.name().to_string());
    }
    if gc.is_none() {
        missing.push(grad_tag.name().to_string());
    }
    if neg.is_none() {
        missing.push(ExpTag::BaseNegF.name().to_string());
    }
    if !missing.is_empty() {
        return Ok(r.refuse_missing(missing));
    }
    let (sf, gc, neg) = (sf.unwrap(), gc.unwrap(), neg.unwrap());
    let r = r.input("ln_mu_exp_negF", neg);

    // Returns (value, D, T') at a feasible point.
    let eval = |p: &[f64]| -> Option<(f64, f64, f64)> {
        let (s, t, alpha) = (p[0], p[1], p[2]);
        let (theta, eps) = if variant == EntropyVariant::Gradient { (p[3], p[4]) } else { (0.0, 0.0) };
        if s <= 1.0 || t <= 0.0 || alpha <= 0.0 {
            return None;
        }
        let ls = sf.eval(s)?;
        let lt = gc.eval(t)?;
        let la = gc.eval(alpha)?;
        match variant {
            EntropyVariant::Gradient => {
                let w = (1.0 + theta) * c_ls_mu / (4.0 * t);
                let d = 1.0 / s + w;
                if d >= 1.0 {
                    return None;
                }
                let t1 = la + (ls / s + neg + w * lt) / (1.0 - d);
                let tp = (1.0 + eps) * c_p_mu * t1 / (4.0 * alpha);
                if tp >= 1.0 {
                    return None;
                }
                let v = c_p_mu * ((1.0 + 1.0 / eps) + (1.0 + 1.0 / theta) * (1.0 + eps) * c_ls_mu / (4.0 * alpha)) / (1.0 - tp);
                Some((v, d, tp))
            }
            EntropyVariant::Generator => {
                let w = c_ls_mu / t;
                let d = 1.0 / s + w;
                if d >= 1.0 {
                    return None;
                }
                let t2 = la + (ls / s + neg + w * lt) / (1.0 - d);
                let tp = c_p_mu * t2 / (2.0 * alpha);
                if tp >= 1.0 {
                    return None;
                }
                Some((c_p_mu * (1.0 + c_ls_mu / alpha) / (1.0 - tp), d, tp))
            }
        }
    };
    let mut boxes = vec![ParamBox::linear("s", 1.0, sf.max_coef()), ParamBox::log("t", gc.max_coef() * 1e-6, gc.max_coef()), ParamBox::log("alpha", gc.max_coef() * 1e-6, gc.max_coef())];
    if variant == EntropyVariant::Gradient {
        boxes.push(ParamBox::log("theta", 1e-4, 1e4));
        boxes.push(ParamBox::log("eps", 1e-4, 1e4));
    }
    let out = optimize_free_params(&|p| eval(p).map(|v| v.0), &boxes, search);
    let Some(out) = out else {
        let dname = if variant == EntropyVariant::Gradient { "D1" } else { "D2" };
        return Ok(r.refuse(format!("feasible set {dname} < 1, T' < 1 is empty over the available moment coefficients")));
    };
    let (v, d, tp) = eval(&out.params).expect("optimizer returns a feasible point");
    let (dname, tname) = if variant == EntropyVariant::Gradient { ("D1", "T1_prime") } else { ("D2", "T2_prime") };
    let mut r = r.margin(Margin::strict(dname, d, 1.0)).margin(Margin::strict(tname, tp, 1.0));
    for (n, p) in out.names.iter().zip(&out.params) {
        r = r.param(n, *p);
    }
    if out.grid_fallback {
        r = r.with_note("non-convex line search, grid fallback used");
    }
    Ok(r.finish(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::MomentValue;

    #[test]
    fn holley_stroock_examples() {
        let v = |c, o| bound_holley_stroock(c, Quantity::Poincare, Certified::Finite(o)).unwrap().value.unwrap();
        assert_eq!(v(1.0, 0.0), 1.0);
        assert!((v(1.0, 2f64.ln()) - 2.0).abs() < 1e-15);
        assert!((v(4.0, 1.0) - 10.873_127_313_836_2).abs() < 1e-12);
        assert!(!bound_holley_stroock(1.0, Quantity::Poincare, Certified::Unknown).unwrap().applicable);
    }

    #[test]
    fn lipschitz_poincare_examples() {
        let s = ParamSearch::default();
        assert_eq!(bound_lipschitz_poincare(1.0, 0.0, &s).unwrap().value, Some(1.0));
        let r = bound_lipschitz_poincare(4.0, 0.5, &s).unwrap();
        assert_eq!(r.value, Some(16.0));
        assert_eq!(r.params["eps"], 1.0);
        assert!(!bound_lipschitz_poincare(4.0, 1.0, &s).unwrap().applicable);
    }

    #[test]
    fn lipschitz_poincare_closed_form_matches_dense_grid() {
        // Independent dense scan over ε.
        let (cp, l) = (4.0, 0.5);
        let c = cp * l * l / 4.0;
        let best = (1..200_000).map(|i| i as f64 * 1e-5 * 3.0).filter(|e| (1.0 + e) * c < 1.0).map(|e| (1.0 + 1.0 / e) * cp / (1.0 - (1.0 + e) * c)).fold(f64::INFINITY, f64::min);
        let v = bound_lipschitz_poincare(cp, l, &ParamSearch::golden()).unwrap().value.unwrap();
        assert!((v - best).abs() / best < 1e-6);
        assert!((v - 16.0).abs() / 16.0 < 1e-9);
    }

    #[test]
    fn lipschitz_cheeger_examples() {
        assert_eq!(bound_lipschitz_cheeger(1.0, 0.0).unwrap().value, Some(1.0));
        assert_eq!(bound_lipschitz_cheeger(2.0, 0.25).unwrap().value, Some(4.0));
        assert!(!bound_lipschitz_cheeger(2.0, 0.5).unwrap().applicable);
    }

    #[test]
    fn generator_poincare_examples() {
        assert_eq!(bound_generator_poincare(4.0, 0.0, false, true).unwrap().value, Some(4.0));
        let r = bound_generator_poincare(4.0, 0.25, false, true).unwrap();
        assert_eq!(r.value, Some(8.0));
        assert_eq!(r.params["eps"], 0.5);
        assert!(!bound_generator_poincare(4.0, 0.5, false, true).unwrap().applicable);
        assert!(!bound_generator_poincare(1.0, 0.0, true, false).unwrap().applicable);
    }

    fn zero_moments() -> MomentSet {
        let mut m = MomentSet::default();
        for c in [0.5, 1.0, 2.0, 4.0, 8.0] {
            m.set_exp(ExpTag::SF, c, MomentValue::Finite(0.0));
            m.set_exp(ExpTag::GradSq, c, MomentValue::Finite(0.0));
            m.set_exp(ExpTag::Generator, c, MomentValue::Finite(0.0));
        }
        m.set_exp(ExpTag::BaseNegF, 1.0, MomentValue::Finite(0.0));
        m
    }

    #[test]
    fn entropy_unperturbed_is_finite_multiple() {
        let r = bound_entropy_poincare(1.0, 2.0, &zero_moments(), EntropyVariant::Gradient, &ParamSearch::default()).unwrap();
        assert!(r.applicable);
        let v = r.value.unwrap();
        assert!(v >= 1.0 && v < 10.0, "{v}");
        let tp = r.margins.iter().find(|m| m.name == "T1_prime").unwrap().value;
        assert_eq!(tp, 0.0);
        let g = bound_entropy_poincare(1.0, 2.0, &zero_moments(), EntropyVariant::Generator, &ParamSearch::default()).unwrap();
        assert!(g.applicable);
    }

    #[test]
    fn entropy_reports_missing_moment() {
        let mut m = zero_moments();
        m.exp_moments.retain(|e| e.tag != ExpTag::SF);
        let r = bound_entropy_poincare(1.0, 2.0, &m, EntropyVariant::Gradient, &ParamSearch::default()).unwrap();
        assert!(!r.applicable);
        assert_eq!(r.missing, vec!["exp_sF".to_string()]);
    }

    #[test]
    fn exp_curve_interpolates_chords() {
        let mut m = MomentSet::default();
        m.set_exp(ExpTag::SF, 2.0, MomentValue::Finite(4.0));
        let c = ExpCurve::from_moments(&m, ExpTag::SF).unwrap();
        assert_eq!(c.eval(1.0), Some(2.0));
        assert_eq!(c.eval(3.0), None);
    }

    #[test]
    fn bakry_emery_pair() {
        let r = bakry_emery(2.0);
        assert_eq!(r[0].value, Some(0.5));
        assert_eq!(r[1].value, Some(1.0));
        assert!(!bakry_emery(0.0)[0].applicable);
    }
}
