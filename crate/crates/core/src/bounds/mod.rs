//! Explicit perturbation bounds, one calculator per result.
//!
//! Every calculator returns a [`BoundResult`]. A failed hypothesis is not an
//! error: it yields `applicable = false` with the violated margin recorded.

mod general;
mod logconcave;
mod logsob;
mod moments;
mod mollified;
pub mod optimize;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use general::{bakry_emery, barthe_klartag, bound_entropy_poincare, bound_generator_poincare, bound_holley_stroock, bound_lipschitz_cheeger, bound_lipschitz_poincare, EntropyVariant, ExpCurve};
pub use logconcave::{
    bound_brascamp_lieb_perturbed, bound_concentration_transfer, bound_gaussian_perturbation_forward, bound_logconcave_perturbation, concentration_profile, concentration_profile_inverse, relate_cheeger_poincare, weak_to_strong, CheegerInput, ConcentrationConstants,
    LogConcaveVariant, WeakVariant, BL_FACTOR, CONCENTRATION_CAP,
};
pub use logsob::{bound_logsob, LogSobInputs, LogSobVariant};
pub use moments::{bound_from_moments, bound_subbotin, bjm_subbotin_poincare, bobkov_subbotin_poincare, MomentVariant, SubbotinVariant, COR_VARIANCE_FACTOR, SUBBOTIN_C};
pub use mollified::{bound_mollified, MollifiedVariant};
pub use optimize::{optimize_free_params, ParamBox, ParamSearch, SearchOutcome, Strategy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("invalid input {name} = {value}: {reason}")]
    InvalidInput { name: String, value: f64, reason: String },
}

pub(crate) fn require_nonneg(name: &str, v: f64) -> Result<(), BoundError> {
    if v.is_nan() || v < 0.0 {
        return Err(BoundError::InvalidInput { name: name.into(), value: v, reason: "must be nonnegative".into() });
    }
    Ok(())
}

pub(crate) fn require_positive(name: &str, v: f64) -> Result<(), BoundError> {
    if !(v > 0.0) {
        return Err(BoundError::InvalidInput { name: name.into(), value: v, reason: "must be positive".into() });
    }
    Ok(())
}

/// Identifies the result a calculator implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremId {
    HolleyStroock,
    BakryEmery,
    BartheKlartag,
    LipschitzPoincare,
    LipschitzCheeger,
    GeneratorPoincare,
    EntropyPoincareGradient,
    EntropyPoincareGenerator,
    LogSobBoundedAbove,
    LogSobHerbst,
    LogSobIntegrability,
    LogSobGenerator,
    MollifiedGaussianPoincare,
    MollifiedGaussianLogSob,
    MollifiedGeneral,
    MollifiedScaled,
    CheegerToPoincare,
    CheegerMeanToMedian,
    CheegerMedianToMean,
    PoincareToCheeger,
    WeakToStrongL1,
    WeakToStrongL2,
    LogConcavePerthS,
    LogConcaveL2,
    LogConcaveCheeger,
    LogConcaveGenerator,
    ConcentrationTransfer,
    ConcentrationRemark,
    BrascampLiebPrefactor,
    BrascampLiebPoincare,
    MomentVariance,
    MomentHessH,
    MomentCheeger,
    MomentCheegerWeak,
    SubbotinOptimal,
    SubbotinAtP,
    SubbotinGeneralAtP,
    GaussianPerturbation,
    GaussianPerturbationEnvelope,
    RegressionGated,
    RegressionConstructive,
    RegressionOrthogonalGated,
}

impl TheoremId {
    pub fn name(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Which constant of which measure the value bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `C_P` of the target measure.
    Poincare,
    /// `C_LS` of the target measure.
    LogSobolev,
    /// `C_C`, the mean-centred L¹ constant.
    CheegerMean,
    /// `C'_C`, the median Cheeger constant.
    CheegerMedian,
    /// A dimensionless multiplicative factor.
    Prefactor,
}

/// A hypothesis written as `value < cap` (or `≤` when not strict).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub name: String,
    pub value: f64,
    pub cap: f64,
    pub strict: bool,
}

impl Margin {
    pub fn strict(name: &str, value: f64, cap: f64) -> Margin {
        Margin { name: name.into(), value, cap, strict: true }
    }

    pub fn satisfied(&self) -> bool {
        if self.strict {
            self.value < self.cap
        } else {
            self.value <= self.cap
        }
    }
}

/// An input consumed by a calculator. When the input was itself produced by
/// another bound, `chain` lists the theorems behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub name: String,
    pub value: f64,
    pub chain: Vec<TheoremId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub theorem: TheoremId,
    pub quantity: Quantity,
    pub applicable: bool,
    pub value: Option<f64>,
    pub margins: Vec<Margin>,
    pub params: BTreeMap<String, f64>,
    pub provenance: Vec<Provenance>,
    /// Set when the value carries a universal constant that is not explicit.
    pub untraced: bool,
    pub missing: Vec<String>,
    pub note: Option<String>,
}

impl BoundResult {
    pub fn new(theorem: TheoremId, quantity: Quantity) -> BoundResult {
        BoundResult { theorem, quantity, applicable: false, value: None, margins: Vec::new(), params: BTreeMap::new(), provenance: Vec::new(), untraced: false, missing: Vec::new(), note: None }
    }

    pub fn input(mut self, name: &str, value: f64) -> Self {
        self.provenance.push(Provenance { name: name.into(), value, chain: Vec::new() });
        self
    }

    pub fn margin(mut self, m: Margin) -> Self {
        self.margins.push(m);
        self
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.into(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Marks the result applicable with `value` if every margin holds.
    pub fn finish(mut self, value: f64) -> Self {
        if self.margins.iter().all(Margin::satisfied) && value.is_finite() && value >= 0.0 {
            self.applicable = true;
            self.value = Some(value);
        } else {
            self.applicable = false;
            self.value = None;
            if self.note.is_none() {
                let failed: Vec<String> = self.margins.iter().filter(|m| !m.satisfied()).map(|m| format!("{} = {} not {} {}", m.name, m.value, if m.strict { "<" } else { "<=" }, m.cap)).collect();
                self.note = Some(if failed.is_empty() { format!("non-finite value {value}") } else { failed.join("; ") });
            }
        }
        self
    }

    /// Not applicable, with a reason.
    pub fn refuse(mut self, reason: impl Into<String>) -> Self {
        self.applicable = false;
        self.value = None;
        self.note = Some(reason.into());
        self
    }

    pub fn refuse_missing(mut self, missing: Vec<String>) -> Self {
        let reason = format!("missing inputs: {}", missing.join(", "));
        self.missing = missing;
        self.refuse(reason)
    }

    /// Records that input `name` was produced by `upstream`.
    pub fn fed_by(mut self, name: &str, upstream: &BoundResult) -> Self {
        let chain = upstream.chain();
        if let Some(p) = self.provenance.iter_mut().find(|p| p.name == name) {
            p.chain = chain;
        } else {
            self.provenance.push(Provenance { name: name.into(), value: upstream.value.unwrap_or(f64::NAN), chain });
        }
        self
    }

    /// Every theorem used to produce this value, leaves first.
    pub fn chain(&self) -> Vec<TheoremId> {
        let mut out = Vec::new();
        for p in &self.provenance {
            for t in &p.chain {
                if !out.contains(t) {
                    out.push(*t);
                }
            }
        }
        out.push(self.theorem);
        out
    }

    pub fn input_value(&self, name: &str) -> Option<f64> {
        self.provenance.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn flat(&self) -> FlatRecord {
        FlatRecord {
            theorem: self.theorem.name(),
            quantity: serde_json::to_value(self.quantity).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            applicable: self.applicable,
            value: self.value,
            params: self.params.iter().map(|(k, v)| format!("{k}={}", fmt_num(*v))).collect::<Vec<_>>().join(";"),
            margins: self.margins.iter().map(|m| format!("{}={}{}{}", m.name, fmt_num(m.value), if m.strict { "<" } else { "<=" }, fmt_num(m.cap))).collect::<Vec<_>>().join(";"),
            untraced: self.untraced,
        }
    }
}

/// Fixed-width formatting shared by all emitters so records are byte-stable.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.12e}")
    }
}

/// Flat serialization of a [`BoundResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatRecord {
    pub theorem: String,
    pub quantity: String,
    pub applicable: bool,
    pub value: Option<f64>,
    pub params: String,
    pub margins: String,
    pub untraced: bool,
}

/// Minimizes `(1 + 1/ε) / (1 − (1+ε)c)` over `ε > 0`: the optimum is
/// `1/(1−√c)²` at `ε* = 1/√c − 1`, with `ε* = ∞` when `c = 0`.
pub fn lipschitz_factor(c: f64) -> Option<(f64, f64)> {
    if !(0.0..1.0).contains(&c) {
        return None;
    }
    if c == 0.0 {
        return Some((1.0, f64::INFINITY));
    }
    let r = c.sqrt();
    Some((1.0 / ((1.0 - r) * (1.0 - r)), 1.0 / r - 1.0))
}

/// Same family minimized numerically over `ln ε`.
pub(crate) fn lipschitz_factor_search(c: f64, search: &ParamSearch) -> Option<(f64, f64, bool)> {
    if !(0.0..1.0).contains(&c) {
        return None;
    }
    if c == 0.0 {
        return Some((1.0, f64::INFINITY, false));
    }
    let eps_max = 1.0 / c - 1.0;
    let boxes = [ParamBox::log("eps", (eps_max * 1e-9).min(1e-6), eps_max)];
    let out = optimize_free_params(
        &|p: &[f64]| {
            let e = p[0];
            let s = (1.0 + e) * c;
            if e <= 0.0 || s >= 1.0 {
                return None;
            }
            Some((1.0 + 1.0 / e) / (1.0 - s))
        },
        &boxes,
        search,
    )?;
    Some((out.value, out.params[0], out.grid_fallback))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theorem_ids_have_snake_case_names() {
        assert_eq!(TheoremId::LipschitzPoincare.name(), "lipschitz_poincare");
        assert_eq!(TheoremId::EntropyPoincareGenerator.to_string(), "entropy_poincare_generator");
    }

    #[test]
    fn finish_never_emits_value_with_failed_gate() {
        let r = BoundResult::new(TheoremId::LipschitzCheeger, Quantity::CheegerMedian).margin(Margin::strict("s", 1.0, 1.0)).finish(3.0);
        assert!(!r.applicable);
        assert!(r.value.is_none());
        assert!(r.note.unwrap().contains("s = 1"));
    }

    #[test]
    fn lipschitz_factor_matches_quarter() {
        let (v, e) = lipschitz_factor(0.25).unwrap();
        assert!((v - 4.0).abs() < 1e-15);
        assert!((e - 1.0).abs() < 1e-15);
        assert_eq!(lipschitz_factor(0.0), Some((1.0, f64::INFINITY)));
        assert!(lipschitz_factor(1.0).is_none());
    }

    #[test]
    fn chain_collects_upstream_theorems() {
        let up = BoundResult::new(TheoremId::LipschitzPoincare, Quantity::Poincare).input("C_P_mu", 1.0).finish(2.0);
        let down = BoundResult::new(TheoremId::LogSobBoundedAbove, Quantity::LogSobolev).input("C_P_mu_F", 2.0).fed_by("C_P_mu_F", &up).finish(5.0);
        assert_eq!(down.chain(), vec![TheoremId::LipschitzPoincare, TheoremId::LogSobBoundedAbove]);
    }

    #[test]
    fn flat_record_is_stable() {
        let r = BoundResult::new(TheoremId::HolleyStroock, Quantity::Poincare).param("osc", 0.5).margin(Margin::strict("x", 0.1, 1.0)).finish(2.0);
        let f = r.flat();
        assert_eq!(f.params, "osc=5.000000000000e-1");
        assert_eq!(f.margins, "x=1.000000000000e-1<1.000000000000e0");
    }
}
