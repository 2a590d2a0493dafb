//! Base measures `μ = Z⁻¹ e^{-V} dx`, perturbations `F`, and the moments the
//! calculators consume.

pub mod moments;
pub mod perturbation;
pub mod quadrature;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use moments::{compute_moments, expectation, ExpMoment, ExpTag, MomentReport, MomentRequest, MomentSet, MomentValue};
pub use perturbation::{Certified, Perturbation, PerturbationKind, PerturbationMeta};
pub use quadrature::QuadratureSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("potential is not integrable: {0}")]
    NotIntegrable(String),
}

pub type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// User-supplied potential. `V` may return `+inf` outside the support.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub potential: PotentialFn,
    pub gradient: Option<GradientFn>,
    /// Points of non-smoothness, used as quadrature breakpoints (1D only).
    pub kinks: Vec<f64>,
    /// Per-axis integration window; searched automatically when absent.
    pub window: Option<Vec<(f64, f64)>>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential").field("name", &self.name).field("kinks", &self.kinks).finish()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    /// `V = ρ|x|²/2`.
    Gaussian { rho: f64 },
    /// `V = α Σ|x_i|`.
    Exponential { alpha: f64 },
    /// `V = Σ|x_i|^p`.
    Subbotin { p: f64 },
    /// Uniform on `[lo, hi]^n`.
    Uniform { lo: f64, hi: f64 },
    /// `V = Σ (x_i⁴ − a x_i²)`.
    DoubleWell { a: f64 },
    /// Law of `σY` where `Y` follows `base`.
    Dilated { base: Box<MeasureModel>, sigma: f64 },
    ProductOf(Vec<MeasureModel>),
    Custom(CustomPotential),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Flags {
    pub log_concave: bool,
    pub even: bool,
    pub unconditional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct KnownConstants {
    pub c_p: Option<f64>,
    pub c_ls: Option<f64>,
    /// Cheeger constant around the mean.
    pub c_c: Option<f64>,
    /// Cheeger constant around a median.
    pub c_c_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Interval { lo: f64, hi: f64 },
    Boxed(Vec<(f64, f64)>),
    Ball { radius: f64 },
}

#[derive(Debug, Clone)]
pub struct MeasureModel {
    pub family: Family,
    pub dim: usize,
    pub flags: Flags,
    pub known: KnownConstants,
    pub support: Option<Support>,
}

fn positive(name: &str, v: f64) -> Result<(), MeasureError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(MeasureError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_dim(dim: usize) -> Result<(), MeasureError> {
    if dim == 0 {
        return Err(MeasureError::InvalidParameter("dimension must be positive".into()));
    }
    Ok(())
}

const NAMED_FLAGS: Flags = Flags { log_concave: true, even: true, unconditional: true };

impl MeasureModel {
    pub fn gaussian(rho: f64, dim: usize) -> Result<Self, MeasureError> {
        positive("rho", rho)?;
        check_dim(dim)?;
        let known = KnownConstants {
            c_p: Some(1.0 / rho),
            c_ls: Some(2.0 / rho),
            c_c: None,
            c_c_median: Some((std::f64::consts::PI / (2.0 * rho)).sqrt()),
        };
        Ok(MeasureModel { family: Family::Gaussian { rho }, dim, flags: NAMED_FLAGS, known, support: None })
    }

    /// Two-sided exponential (Laplace) law `∝ e^{-α|x|}` per coordinate.
    pub fn exponential(alpha: f64, dim: usize) -> Result<Self, MeasureError> {
        positive("alpha", alpha)?;
        check_dim(dim)?;
        let one_d = dim == 1;
        let known = KnownConstants {
            c_p: Some(4.0 / (alpha * alpha)),
            c_ls: None,
            c_c: one_d.then_some(2.0 / alpha),
            c_c_median: one_d.then_some(1.0 / alpha),
        };
        Ok(MeasureModel { family: Family::Exponential { alpha }, dim, flags: NAMED_FLAGS, known, support: None })
    }

    pub fn subbotin(p: f64, dim: usize) -> Result<Self, MeasureError> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(MeasureError::InvalidParameter(format!("Subbotin exponent must be >= 1, got {p}")));
        }
        check_dim(dim)?;
        let mut m = MeasureModel { family: Family::Subbotin { p }, dim, flags: NAMED_FLAGS, known: KnownConstants::default(), support: None };
        if p == 2.0 {
            m.known = MeasureModel::gaussian(2.0, dim)?.known;
        } else if p == 1.0 {
            m.known = MeasureModel::exponential(1.0, dim)?.known;
        }
        Ok(m)
    }

    pub fn uniform(lo: f64, hi: f64, dim: usize) -> Result<Self, MeasureError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(MeasureError::InvalidParameter(format!("empty interval [{lo}, {hi}]")));
        }
        check_dim(dim)?;
        let w = hi - lo;
        let even = lo == -hi;
        let one_d = dim == 1;
        let known = KnownConstants {
            c_p: Some(w * w / (std::f64::consts::PI * std::f64::consts::PI)),
            c_ls: None,
            c_c: one_d.then_some(w / 2.0),
            c_c_median: one_d.then_some(w / 2.0),
        };
        let support = if one_d { Support::Interval { lo, hi } } else { Support::Boxed(vec![(lo, hi); dim]) };
        Ok(MeasureModel {
            family: Family::Uniform { lo, hi },
            dim,
            flags: Flags { log_concave: true, even, unconditional: even },
            known,
            support: Some(support),
        })
    }

    /// `V = x⁴ − a x²` per coordinate; log-concave iff `a <= 0`.
    pub fn double_well(a: f64, dim: usize) -> Result<Self, MeasureError> {
        if !a.is_finite() {
            return Err(MeasureError::InvalidParameter("double-well parameter must be finite".into()));
        }
        check_dim(dim)?;
        Ok(MeasureModel {
            family: Family::DoubleWell { a },
            dim,
            flags: Flags { log_concave: a <= 0.0, even: true, unconditional: true },
            known: KnownConstants::default(),
            support: None,
        })
    }

    pub fn product(components: Vec<MeasureModel>) -> Result<Self, MeasureError> {
        if components.is_empty() {
            return Err(MeasureError::InvalidParameter("empty product".into()));
        }
        let dim = components.iter().map(|c| c.dim).sum();
        let flags = Flags {
            log_concave: components.iter().all(|c| c.flags.log_concave),
            even: components.iter().all(|c| c.flags.even),
            unconditional: components.iter().all(|c| c.flags.unconditional),
        };
        let max_of = |get: fn(&KnownConstants) -> Option<f64>| -> Option<f64> {
            components.iter().map(|c| get(&c.known)).try_fold(0.0f64, |acc, v| v.map(|v| acc.max(v)))
        };
        let known = KnownConstants { c_p: max_of(|k| k.c_p), c_ls: max_of(|k| k.c_ls), c_c: None, c_c_median: None };
        let support = if components.iter().any(|c| c.support.is_some()) {
            let mut boxes = Vec::with_capacity(dim);
            for c in &components {
                for i in 0..c.dim {
                    boxes.push(c.axis_bounds(i));
                }
            }
            Some(Support::Boxed(boxes))
        } else {
            None
        };
        Ok(MeasureModel { family: Family::ProductOf(components), dim, flags, known, support })
    }

    pub fn custom(potential: CustomPotential, dim: usize, flags: Flags, known: KnownConstants) -> Result<Self, MeasureError> {
        check_dim(dim)?;
        if let Some(w) = &potential.window {
            if w.len() != dim {
                return Err(MeasureError::DimensionMismatch { expected: dim, got: w.len() });
            }
        }
        Ok(MeasureModel { family: Family::Custom(potential), dim, flags, known, support: None })
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = Some(support);
        self
    }

    /// Law of `σY` for `Y ~ self`.
    pub fn dilate(&self, sigma: f64) -> Result<Self, MeasureError> {
        positive("sigma", sigma)?;
        match &self.family {
            Family::Gaussian { rho } => MeasureModel::gaussian(rho / (sigma * sigma), self.dim),
            Family::Exponential { alpha } => MeasureModel::exponential(alpha / sigma, self.dim),
            Family::Uniform { lo, hi } => MeasureModel::uniform(lo * sigma, hi * sigma, self.dim),
            _ => {
                let k = self.known;
                let known = KnownConstants {
                    c_p: k.c_p.map(|c| c * sigma * sigma),
                    c_ls: k.c_ls.map(|c| c * sigma * sigma),
                    c_c: k.c_c.map(|c| c * sigma),
                    c_c_median: k.c_c_median.map(|c| c * sigma),
                };
                let support = self.support.as_ref().map(|s| match s {
                    Support::Interval { lo, hi } => Support::Interval { lo: lo * sigma, hi: hi * sigma },
                    Support::Boxed(b) => Support::Boxed(b.iter().map(|(l, h)| (l * sigma, h * sigma)).collect()),
                    Support::Ball { radius } => Support::Ball { radius: radius * sigma },
                });
                Ok(MeasureModel {
                    family: Family::Dilated { base: Box::new(self.clone()), sigma },
                    dim: self.dim,
                    flags: self.flags,
                    known,
                    support,
                })
            }
        }
    }

    pub fn name(&self) -> String {
        match &self.family {
            Family::Gaussian { rho } => format!("gaussian(rho={rho})"),
            Family::Exponential { alpha } => format!("exponential(alpha={alpha})"),
            Family::Subbotin { p } => format!("subbotin(p={p})"),
            Family::Uniform { lo, hi } => format!("uniform([{lo},{hi}])"),
            Family::DoubleWell { a } => format!("double_well(a={a})"),
            Family::Dilated { base, sigma } => format!("dilated({}, sigma={sigma})", base.name()),
            Family::ProductOf(c) => format!("product({})", c.iter().map(|c| c.name()).collect::<Vec<_>>().join(", ")),
            Family::Custom(c) => format!("custom({})", c.name),
        }
    }

    /// True when the measure factorizes over coordinates.
    pub fn is_separable(&self) -> bool {
        match &self.family {
            Family::Custom(_) => self.dim == 1,
            Family::ProductOf(c) => c.iter().all(|c| c.is_separable()),
            Family::Dilated { base, .. } => base.is_separable(),
            _ => true,
        }
    }

    pub fn is_restricted(&self) -> bool {
        self.support.is_some()
    }

    /// Potential `V(x)`, `+inf` outside the support. `x.len()` must equal `dim`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.family {
            Family::Gaussian { rho } => 0.5 * rho * x.iter().map(|v| v * v).sum::<f64>(),
            Family::Exponential { alpha } => alpha * x.iter().map(|v| v.abs()).sum::<f64>(),
            Family::Subbotin { p } => x.iter().map(|v| v.abs().powf(*p)).sum(),
            Family::Uniform { lo, hi } => {
                if x.iter().all(|v| *v >= *lo && *v <= *hi) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Family::DoubleWell { a } => x.iter().map(|v| v.powi(4) - a * v * v).sum(),
            Family::Dilated { base, sigma } => {
                let y: Vec<f64> = x.iter().map(|v| v / sigma).collect();
                base.potential(&y)
            }
            Family::ProductOf(c) => {
                let mut offset = 0;
                let mut total = 0.0;
                for comp in c {
                    total += comp.potential(&x[offset..offset + comp.dim]);
                    offset += comp.dim;
                }
                total
            }
            Family::Custom(c) => (c.potential)(x),
        }
    }

    /// Gradient of `V`; the subgradient 0 is used at kinks.
    pub fn grad_potential(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        match &self.family {
            Family::Gaussian { rho } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = rho * v;
                }
            }
            Family::Exponential { alpha } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = alpha * sign0(*v);
                }
            }
            Family::Subbotin { p } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = p * v.abs().powf(p - 1.0) * sign0(*v);
                }
            }
            Family::Uniform { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            Family::DoubleWell { a } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = 4.0 * v.powi(3) - 2.0 * a * v;
                }
            }
            Family::Dilated { base, sigma } => {
                let y: Vec<f64> = x.iter().map(|v| v / sigma).collect();
                base.grad_potential(&y, out);
                out.iter_mut().for_each(|o| *o /= sigma);
            }
            Family::ProductOf(c) => {
                let mut offset = 0;
                for comp in c {
                    comp.grad_potential(&x[offset..offset + comp.dim], &mut out[offset..offset + comp.dim]);
                    offset += comp.dim;
                }
            }
            Family::Custom(c) => match &c.gradient {
                Some(g) => g(x, out),
                None => finite_difference_gradient(&*c.potential, x, out),
            },
        }
    }

    /// `−V(x)` (unnormalized), `-inf` outside the support.
    pub fn log_density(&self, x: &[f64]) -> Result<f64, MeasureError> {
        if x.len() != self.dim {
            return Err(MeasureError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(-self.potential(x))
    }

    /// Lower bound on the eigenvalues of `Hess V` (0 when only convexity is known).
    pub fn curvature_lower(&self) -> Option<f64> {
        match &self.family {
            Family::Gaussian { rho } => Some(*rho),
            Family::Exponential { .. } | Family::Subbotin { .. } | Family::Uniform { .. } => Some(0.0),
            Family::DoubleWell { a } => Some(-2.0 * a),
            Family::Dilated { base, sigma } => base.curvature_lower().map(|k| k / (sigma * sigma)),
            Family::ProductOf(c) => c.iter().map(|c| c.curvature_lower()).try_fold(f64::INFINITY, |acc, v| v.map(|v| acc.min(v))),
            Family::Custom(_) => None,
        }
    }

    /// One-dimensional factor governing coordinate `axis` (separable models only).
    pub fn axis_model(&self, axis: usize) -> Result<MeasureModel, MeasureError> {
        if axis >= self.dim {
            return Err(MeasureError::DimensionMismatch { expected: self.dim, got: axis + 1 });
        }
        if self.dim == 1 {
            return Ok(self.clone());
        }
        match &self.family {
            Family::Gaussian { rho } => MeasureModel::gaussian(*rho, 1),
            Family::Exponential { alpha } => MeasureModel::exponential(*alpha, 1),
            Family::Subbotin { p } => MeasureModel::subbotin(*p, 1),
            Family::Uniform { lo, hi } => MeasureModel::uniform(*lo, *hi, 1),
            Family::DoubleWell { a } => MeasureModel::double_well(*a, 1),
            Family::Dilated { base, sigma } => base.axis_model(axis)?.dilate(*sigma),
            Family::ProductOf(c) => {
                let mut offset = 0;
                for comp in c {
                    if axis < offset + comp.dim {
                        return comp.axis_model(axis - offset);
                    }
                    offset += comp.dim;
                }
                unreachable!("axis checked against dimension")
            }
            Family::Custom(_) => Err(MeasureError::Unsupported("custom potentials in n > 1 are not separable".into())),
        }
    }

    fn axis_bounds(&self, axis: usize) -> (f64, f64) {
        match &self.support {
            Some(Support::Interval { lo, hi }) => (*lo, *hi),
            Some(Support::Boxed(b)) => b[axis],
            Some(Support::Ball { radius }) => (-radius, *radius),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Breakpoints of a 1D potential (kinks) that quadrature panels must respect.
    pub fn kinks_1d(&self) -> Vec<f64> {
        match &self.family {
            Family::Exponential { .. } => vec![0.0],
            Family::Subbotin { .. } => vec![0.0],
            Family::Dilated { base, sigma } => base.kinks_1d().into_iter().map(|k| k * sigma).collect(),
            Family::Custom(c) => c.kinks.clone(),
            _ => Vec::new(),
        }
    }

    /// Integration window along `axis` where the axis potential rises by at
    /// least `drop` above its minimum, clipped to the support.
    pub fn axis_window(&self, axis: usize, drop: f64) -> Result<(f64, f64), MeasureError> {
        if let Family::Custom(c) = &self.family {
            if let Some(w) = &c.window {
                return Ok(w[axis]);
            }
            if self.dim == 1 {
                return search_window(&|t: f64| (c.potential)(&[t]), drop);
            }
            let dim = self.dim;
            return search_window(
                &|t: f64| {
                    let mut x = vec![0.0; dim];
                    x[axis] = t;
                    (c.potential)(&x)
                },
                drop,
            );
        }
        let m = self.axis_model(axis)?;
        let (lo, hi) = match &m.family {
            Family::Gaussian { rho } => {
                let t = (2.0 * drop / rho).sqrt();
                (-t, t)
            }
            Family::Exponential { alpha } => (-drop / alpha, drop / alpha),
            Family::Subbotin { p } => {
                let t = drop.powf(1.0 / p);
                (-t, t)
            }
            Family::Uniform { lo, hi } => (*lo, *hi),
            Family::DoubleWell { a } => {
                let vmin = if *a > 0.0 { -a * a / 4.0 } else { 0.0 };
                let level = drop + vmin;
                let t = ((a + (a * a + 4.0 * level).sqrt()) / 2.0).sqrt();
                (-t, t)
            }
            Family::Dilated { base, sigma } => {
                let (l, h) = base.axis_window(0, drop)?;
                (l * sigma, h * sigma)
            }
            Family::Custom(_) => m.axis_window(0, drop)?,
            Family::ProductOf(_) => unreachable!("axis models are one-dimensional"),
        };
        let (slo, shi) = self.axis_bounds(axis);
        Ok((lo.max(slo), hi.min(shi)))
    }

    /// Whether the support is bounded along `axis` on the (low, high) side.
    pub fn axis_bounded(&self, axis: usize) -> (bool, bool) {
        let (lo, hi) = self.axis_bounds(axis);
        let (mut bl, mut bh) = (lo.is_finite(), hi.is_finite());
        if let Ok(m) = self.axis_model(axis) {
            if let Family::Uniform { .. } = m.family {
                bl = true;
                bh = true;
            }
            if let Family::Dilated { base, .. } = &m.family {
                if let Family::Uniform { .. } = base.family {
                    bl = true;
                    bh = true;
                }
            }
        }
        (bl, bh)
    }
}

pub(crate) fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Central differences with step `1e-6` (scaled by `max(1, |x_i|)`).
pub fn finite_difference_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], out: &mut [f64]) {
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// Expand a symmetric bracket until a 1D potential rises by `drop` on both sides.
fn search_window(v: &dyn Fn(f64) -> f64, drop: f64) -> Result<(f64, f64), MeasureError> {
    let mut t = 1.0;
    while t <= 1e6 {
        let n = 2001;
        let mut vmin = f64::INFINITY;
        let mut finite = Vec::with_capacity(n);
        for k in 0..n {
            let x = -t + 2.0 * t * k as f64 / (n - 1) as f64;
            let val = v(x);
            if val.is_finite() {
                vmin = vmin.min(val);
                finite.push(x);
            }
        }
        if vmin.is_finite() {
            let lo = finite.first().copied().unwrap_or(-t);
            let hi = finite.last().copied().unwrap_or(t);
            let lo_ok = v(lo) - vmin >= drop || lo > -t;
            let hi_ok = v(hi) - vmin >= drop || hi < t;
            if lo_ok && hi_ok {
                return Ok((lo, hi));
            }
        }
        t *= 2.0;
    }
    Err(MeasureError::NotIntegrable("potential does not grow within |x| <= 1e6".into()))
}
