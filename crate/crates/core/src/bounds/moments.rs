//! Bounds of log-concave measures in terms of low-order moments.

use std::f64::consts::{E, LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::{require_nonneg, BoundError, BoundResult, Margin, Quantity, TheoremId};
use crate::measures::MomentSet;

/// `32 · 81 ln 2`.
pub const COR_VARIANCE_FACTOR: f64 = 2592.0 * LN_2;

/// `512 ln 2`, the constant in front of the Subbotin-comparison bounds.
pub const SUBBOTIN_C: f64 = 512.0 * LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentVariant {
    /// `C_P ≤ 2592 ln2 · μ(|x − μ(x)|²)`.
    Variance,
    /// `C_P ≤ 2592 ln2 · μ(|∇H|²)` for `Hess H ≥ Id`.
    HessH,
    /// `C'_C ≤ (16/π) μ(|x − m|)`, plus the weaker `100√10/π²` form.
    CheegerFirstMoment,
}

pub fn bound_from_moments(moments: &MomentSet, variant: MomentVariant, log_concave: bool) -> Result<Vec<BoundResult>, BoundError> {
    let (id, q, tag, val) = match variant {
        MomentVariant::Variance => (TheoremId::MomentVariance, Quantity::Poincare, "second", moments.second),
        MomentVariant::HessH => (TheoremId::MomentHessH, Quantity::Poincare, "grad_H_l2sq", moments.grad_h_l2sq),
        MomentVariant::CheegerFirstMoment => (TheoremId::MomentCheeger, Quantity::CheegerMedian, "first_abs", moments.first_abs),
    };
    let mut rs = vec![BoundResult::new(id, q)];
    if variant == MomentVariant::CheegerFirstMoment {
        rs.push(BoundResult::new(TheoremId::MomentCheegerWeak, q));
    }
    if !log_concave {
        return Ok(rs.into_iter().map(|r| r.refuse("mu must be log-concave")).collect());
    }
    let Some(v) = val else {
        return Ok(rs.into_iter().map(|r| r.refuse_missing(vec![tag.into()])).collect());
    };
    require_nonneg(tag, v)?;
    let factors: &[f64] = match variant {
        MomentVariant::CheegerFirstMoment => &[16.0 / PI, 100.0 * 10f64.sqrt() / (PI * PI)],
        _ => &[COR_VARIANCE_FACTOR],
    };
    Ok(rs.into_iter().zip(factors).map(|(r, f)| r.input(tag, v).finish(f * v)).collect())
}

/// Bobkov's bound `C_P(S_p) ≤ 12 Γ(3/p)/Γ(1/p)` for the one-dimensional
/// Subbotin law with density `∝ e^{−|x|^p}`.
pub fn bobkov_subbotin_poincare(p: f64) -> f64 {
    12.0 * gamma(3.0 / p) / gamma(1.0 / p)
}

/// `C_P(S_p) ≤ p^{1−2/p} / (2(1+p)^{1−2/p})`.
pub fn bjm_subbotin_poincare(p: f64) -> f64 {
    let e = 1.0 - 2.0 / p;
    p.powf(e) / (2.0 * (1.0 + p).powf(e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SubbotinVariant {
    UnconditionalOptimal,
    UnconditionalAtP { p: f64 },
    GeneralAtP { p: f64, c_p_nu: f64 },
}

fn subbotin_lambda(p: f64, c_p_nu: f64, n: usize, sigma2: f64) -> f64 {
    let l2 = (1.0 / (6.0 * p * p * c_p_nu * n as f64)).powf(1.0 / (p - 1.0)) / ((p - 1.0).powi(2) * sigma2);
    l2.sqrt()
}

/// Poincaré bound by comparison with a product of Subbotin laws.
pub fn bound_subbotin(n: usize, sigma2: f64, variant: SubbotinVariant, log_concave: bool, unconditional: bool) -> Result<BoundResult, BoundError> {
    require_nonneg("sigma2", sigma2)?;
    if n == 0 {
        return Err(BoundError::InvalidInput { name: "n".into(), value: 0.0, reason: "dimension must be positive".into() });
    }
    let nf = n as f64;
    let id = match variant {
        SubbotinVariant::UnconditionalOptimal => TheoremId::SubbotinOptimal,
        SubbotinVariant::UnconditionalAtP { .. } => TheoremId::SubbotinAtP,
        SubbotinVariant::GeneralAtP { .. } => TheoremId::SubbotinGeneralAtP,
    };
    let r = BoundResult::new(id, Quantity::Poincare).input("n", nf).input("sigma2", sigma2);
    if !log_concave {
        return Ok(r.refuse("mu must be log-concave"));
    }
    if !unconditional && !matches!(variant, SubbotinVariant::GeneralAtP { .. }) {
        return Ok(r.refuse("mu must be unconditional"));
    }
    Ok(match variant {
        SubbotinVariant::UnconditionalOptimal => {
            if n < 2 {
                return Ok(r.refuse("the optimal exponent needs n >= 2"));
            }
            let l = (3.0 * nf).ln();
            let p = 1.0 + l / 2.0;
            r.param("p", p).param("lambda", subbotin_lambda(p, bjm_subbotin_poincare(p), n, sigma2)).finish(SUBBOTIN_C * E * E * l * l * sigma2)
        }
        SubbotinVariant::UnconditionalAtP { p } => {
            let r = r.param("p", p).margin(Margin { name: "p".into(), value: 2.0, cap: p, strict: true });
            if p <= 2.0 {
                return Ok(r.finish(f64::NAN));
            }
            let q = 1.0 / (p - 1.0);
            r.param("lambda", subbotin_lambda(p, bjm_subbotin_poincare(p), n, sigma2)).finish(4.0 * SUBBOTIN_C * 3f64.powf(q) * (p - 1.0).powi(2) * nf.powf(q) * sigma2)
        }
        SubbotinVariant::GeneralAtP { p, c_p_nu } => {
            require_positive_nu(c_p_nu)?;
            let r = r.input("C_P_nu", c_p_nu).param("p", p).margin(Margin { name: "p".into(), value: 2.0, cap: p, strict: true });
            if p <= 2.0 {
                return Ok(r.finish(f64::NAN));
            }
            let q = 1.0 / (p - 1.0);
            let v = SUBBOTIN_C * 6f64.powf(q) * p.powf(2.0 * q) * (p - 1.0).powi(2) * nf.powf(q) * c_p_nu.powf(p * q) * sigma2;
            r.param("lambda", subbotin_lambda(p, c_p_nu, n, sigma2)).finish(v)
        }
    })
}

fn require_positive_nu(c: f64) -> Result<(), BoundError> {
    super::require_positive("C_P_nu", c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_factor() {
        assert!((COR_VARIANCE_FACTOR - 1796.6).abs() < 0.05);
        let m = MomentSet { second: Some(1.0), grad_h_l2sq: Some(1.0), ..Default::default() };
        let a = bound_from_moments(&m, MomentVariant::Variance, true).unwrap();
        let b = bound_from_moments(&m, MomentVariant::HessH, true).unwrap();
        assert_eq!(a[0].value, b[0].value);
        assert!(!bound_from_moments(&MomentSet::default(), MomentVariant::Variance, true).unwrap()[0].applicable);
    }

    #[test]
    fn cheeger_first_moment_pair() {
        let m = MomentSet { first_abs: Some(1.0), ..Default::default() };
        let r = bound_from_moments(&m, MomentVariant::CheegerFirstMoment, true).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].value.unwrap() - 5.092_958_178_940_651).abs() < 1e-12);
        assert!(r[1].value.unwrap() > r[0].value.unwrap());
    }

    #[test]
    fn subbotin_constants() {
        // Γ(1/3) = 2.678938534707747...
        assert!((bobkov_subbotin_poincare(3.0) - 12.0 / 2.678_938_534_707_747).abs() < 1e-9);
        assert!((bjm_subbotin_poincare(3.0) - 3f64.cbrt() / (2.0 * 4f64.cbrt())).abs() < 1e-14);
        assert!((bjm_subbotin_poincare(3.0) - 0.4543).abs() < 1e-4);
        // p = 2 gives the Gaussian e^{-x²} with C_P = ½.
        assert!((bjm_subbotin_poincare(2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn subbotin_optimal_n2() {
        let r = bound_subbotin(2, 1.0, SubbotinVariant::UnconditionalOptimal, true, true).unwrap();
        let expect = 512.0 * E * E * LN_2 * 6f64.ln().powi(2);
        assert!((r.value.unwrap() - expect).abs() < 1e-9);
        assert!((r.value.unwrap() - 8418.0).abs() < 1.0);
        assert!(!bound_subbotin(1, 1.0, SubbotinVariant::UnconditionalOptimal, true, true).unwrap().applicable);
    }

    #[test]
    fn subbotin_at_p_gates() {
        assert!(!bound_subbotin(4, 1.0, SubbotinVariant::UnconditionalAtP { p: 2.0 }, true, true).unwrap().applicable);
        let r = bound_subbotin(4, 1.0, SubbotinVariant::UnconditionalAtP { p: 3.0 }, true, true).unwrap();
        assert!((r.value.unwrap() - 4.0 * 512.0 * LN_2 * 3f64.sqrt() * 4.0 * 2.0).abs() < 1e-9);
        assert!(r.params["lambda"] > 0.0);
        assert!(!bound_subbotin(4, 1.0, SubbotinVariant::UnconditionalAtP { p: 3.0 }, true, false).unwrap().applicable);
        assert!(bound_subbotin(4, 1.0, SubbotinVariant::GeneralAtP { p: 3.0, c_p_nu: 0.5 }, true, false).unwrap().applicable);
    }
}
