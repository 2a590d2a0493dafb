//! Perturbations `F` of a base measure and their certified metadata.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{finite_difference_gradient, sign0, Family, MeasureModel, Support};

/// A metadata value that is either certified or explicitly unknown.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Certified {
    #[default]
    Unknown,
    Finite(f64),
    Infinite,
}

impl Certified {
    pub fn finite(self) -> Option<f64> {
        match self {
            Certified::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_known(self) -> bool {
        !matches!(self, Certified::Unknown)
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum PerturbationKind {
    Zero,
    Constant { c: f64 },
    /// `F(x) = ⟨a, x⟩`.
    Linear { coef: Vec<f64> },
    /// `F(x) = ρ|x|²/2`.
    Quadratic { rho: f64 },
    /// `F(x) = c|x|` (Euclidean norm).
    AbsScaled { c: f64 },
    /// `F(x) = A exp(−|x − x₀|²/(2w²))`.
    Bump { amplitude: f64, width: f64, center: Vec<f64> },
    Custom {
        name: String,
        value: ScalarFn,
        gradient: Option<VectorFn>,
        laplacian: Option<ScalarFn>,
    },
}

impl fmt::Debug for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::Zero => write!(f, "Zero"),
            PerturbationKind::Constant { c } => write!(f, "Constant({c})"),
            PerturbationKind::Linear { coef } => write!(f, "Linear({coef:?})"),
            PerturbationKind::Quadratic { rho } => write!(f, "Quadratic({rho})"),
            PerturbationKind::AbsScaled { c } => write!(f, "AbsScaled({c})"),
            PerturbationKind::Bump { amplitude, width, center } => write!(f, "Bump({amplitude}, {width}, {center:?})"),
            PerturbationKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Metadata certified for `F` relative to a particular base measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PerturbationMeta {
    pub lipschitz: Certified,
    pub oscillation: Certified,
    /// `sup F` on the support.
    pub sup_above: Certified,
    /// `inf F` on the support.
    pub inf_below: Certified,
    /// `sup (AF − ½|∇F|²)₊` with `A = Δ − ∇V·∇`.
    pub generator_plus_sup: Certified,
    /// Lower bound on the eigenvalues of `Hess F`.
    pub curvature_lower: Certified,
    pub convex: bool,
    pub even: bool,
    /// `∂ₙF ≥ 0` on the boundary of a restricted support; `None` when unrestricted.
    pub boundary_ok: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub dim: usize,
    pub meta: PerturbationMeta,
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl PerturbationKind {
    pub fn name(&self) -> String {
        match self {
            PerturbationKind::Zero => "zero".into(),
            PerturbationKind::Constant { c } => format!("constant({c})"),
            PerturbationKind::Linear { coef } => format!("linear({})", coef.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")),
            PerturbationKind::Quadratic { rho } => format!("quadratic({rho})"),
            PerturbationKind::AbsScaled { c } => format!("abs({c})"),
            PerturbationKind::Bump { amplitude, width, center } => {
                format!("bump({amplitude},{width},{})", center.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"))
            }
            PerturbationKind::Custom { name, .. } => format!("custom({name})"),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            PerturbationKind::Zero => 0.0,
            PerturbationKind::Constant { c } => *c,
            PerturbationKind::Linear { coef } => coef.iter().zip(x).map(|(a, v)| a * v).sum(),
            PerturbationKind::Quadratic { rho } => 0.5 * rho * norm2(x),
            PerturbationKind::AbsScaled { c } => c * norm2(x).sqrt(),
            PerturbationKind::Bump { amplitude, width, center } => {
                let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            PerturbationKind::Custom { value, .. } => value(x),
        }
    }

    /// Gradient of `F`; the subgradient 0 is used at the kink of `c|x|`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            PerturbationKind::Zero | PerturbationKind::Constant { .. } => out.iter_mut().for_each(|o| *o = 0.0),
            PerturbationKind::Linear { coef } => out.copy_from_slice(coef),
            PerturbationKind::Quadratic { rho } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = rho * v;
                }
            }
            PerturbationKind::AbsScaled { c } => {
                let r = norm2(x).sqrt();
                if x.len() == 1 {
                    out[0] = c * sign0(x[0]);
                } else {
                    for (o, v) in out.iter_mut().zip(x) {
                        *o = if r > 0.0 { c * v / r } else { 0.0 };
                    }
                }
            }
            PerturbationKind::Bump { width, center, .. } => {
                let f = self.value(x);
                let w2 = width * width;
                for ((o, v), c) in out.iter_mut().zip(x).zip(center) {
                    *o = -f * (v - c) / w2;
                }
            }
            PerturbationKind::Custom { value, gradient, .. } => match gradient {
                Some(g) => g(x, out),
                None => finite_difference_gradient(&**value, x, out),
            },
        }
    }

    /// `ΔF` away from non-smooth points.
    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let n = x.len() as f64;
        match self {
            PerturbationKind::Zero | PerturbationKind::Constant { .. } | PerturbationKind::Linear { .. } => 0.0,
            PerturbationKind::Quadratic { rho } => rho * n,
            PerturbationKind::AbsScaled { c } => {
                let r = norm2(x).sqrt();
                if x.len() == 1 || r == 0.0 {
                    0.0
                } else {
                    c * (n - 1.0) / r
                }
            }
            PerturbationKind::Bump { width, center, .. } => {
                let f = self.value(x);
                let w2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(v, c)| (v - c) * (v - c)).sum();
                f * (r2 / (w2 * w2) - n / w2)
            }
            PerturbationKind::Custom { value, laplacian, .. } => match laplacian {
                Some(l) => l(x),
                None => {
                    let mut y = x.to_vec();
                    let f0 = value(x);
                    let mut total = 0.0;
                    for i in 0..x.len() {
                        let h = 1e-4 * x[i].abs().max(1.0);
                        y[i] = x[i] + h;
                        let fp = value(&y);
                        y[i] = x[i] - h;
                        let fm = value(&y);
                        y[i] = x[i];
                        total += (fp - 2.0 * f0 + fm) / (h * h);
                    }
                    total
                }
            },
        }
    }
}

impl Perturbation {
    /// Wraps `kind` and certifies its metadata against the base measure `m`.
    pub fn certify(kind: PerturbationKind, m: &MeasureModel) -> Perturbation {
        let meta = certify_meta(&kind, m);
        Perturbation { kind, dim: m.dim, meta }
    }

    /// Custom perturbation with caller-certified metadata.
    pub fn with_meta(kind: PerturbationKind, dim: usize, meta: PerturbationMeta) -> Perturbation {
        Perturbation { kind, dim, meta }
    }

    pub fn zero(dim: usize) -> Perturbation {
        Perturbation {
            kind: PerturbationKind::Zero,
            dim,
            meta: PerturbationMeta {
                lipschitz: Certified::Finite(0.0),
                oscillation: Certified::Finite(0.0),
                sup_above: Certified::Finite(0.0),
                inf_below: Certified::Finite(0.0),
                generator_plus_sup: Certified::Finite(0.0),
                curvature_lower: Certified::Finite(0.0),
                convex: true,
                even: true,
                boundary_ok: None,
            },
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.kind.value(x)
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.kind.gradient(x, out)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PerturbationKind::Zero)
    }
}

/// `AF − ½|∇F|²` at `x`, with `A = Δ − ∇V·∇`.
pub fn generator_quantity(m: &MeasureModel, f: &PerturbationKind, x: &[f64]) -> f64 {
    let n = x.len();
    let mut gv = vec![0.0; n];
    let mut gf = vec![0.0; n];
    m.grad_potential(x, &mut gv);
    f.gradient(x, &mut gf);
    let dot: f64 = gv.iter().zip(&gf).map(|(a, b)| a * b).sum();
    f.laplacian(x) - dot - 0.5 * norm2(&gf)
}

/// Base family reduced to a per-coordinate description, when the model is a
/// named i.i.d. family.
enum Base {
    Gaussian,
    Exponential(f64),
    Subbotin,
    Uniform,
    DoubleWell(f64),
    Other,
}

fn base_of(m: &MeasureModel) -> Base {
    match &m.family {
        Family::Gaussian { .. } => Base::Gaussian,
        Family::Exponential { alpha } => Base::Exponential(*alpha),
        Family::Subbotin { p } if *p == 1.0 => Base::Exponential(1.0),
        Family::Subbotin { .. } => Base::Subbotin,
        Family::Uniform { .. } => Base::Uniform,
        Family::DoubleWell { a } => Base::DoubleWell(*a),
        _ => Base::Other,
    }
}

/// Axis-aligned bounding box of the support, if bounded.
fn support_box(m: &MeasureModel) -> Option<Vec<(f64, f64)>> {
    match &m.support {
        Some(Support::Interval { lo, hi }) => Some(vec![(*lo, *hi)]),
        Some(Support::Boxed(b)) if b.iter().all(|(l, h)| l.is_finite() && h.is_finite()) => Some(b.clone()),
        Some(Support::Ball { radius }) => Some(vec![(-radius, *radius); m.dim]),
        _ => None,
    }
}

fn certify_meta(kind: &PerturbationKind, m: &MeasureModel) -> PerturbationMeta {
    use Certified::*;
    let n = m.dim as f64;
    let bbox = support_box(m);
    let max_radius = bbox.as_ref().map(|b| b.iter().map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt());
    let base = base_of(m);
    let mut meta = PerturbationMeta { boundary_ok: m.is_restricted().then_some(true), ..Default::default() };

    match kind {
        PerturbationKind::Zero | PerturbationKind::Constant { .. } => {
            let c = if let PerturbationKind::Constant { c } = kind { *c } else { 0.0 };
            meta.lipschitz = Finite(0.0);
            meta.oscillation = Finite(0.0);
            meta.sup_above = Finite(c);
            meta.inf_below = Finite(c);
            meta.generator_plus_sup = Finite(0.0);
            meta.curvature_lower = Finite(0.0);
            meta.convex = true;
            meta.even = true;
        }
        PerturbationKind::Linear { coef } => {
            let norm = norm2(coef).sqrt();
            meta.lipschitz = Finite(norm);
            meta.curvature_lower = Finite(0.0);
            meta.convex = true;
            meta.even = norm == 0.0;
            if let Some(b) = &bbox {
                let hi: f64 = coef.iter().zip(b).map(|(a, (l, h))| (a * l).max(a * h)).sum();
                let lo: f64 = coef.iter().zip(b).map(|(a, (l, h))| (a * l).min(a * h)).sum();
                meta.sup_above = Finite(hi);
                meta.inf_below = Finite(lo);
                meta.oscillation = Finite(hi - lo);
            } else if norm == 0.0 {
                meta.sup_above = Finite(0.0);
                meta.inf_below = Finite(0.0);
                meta.oscillation = Finite(0.0);
            } else {
                meta.sup_above = Infinite;
                meta.inf_below = Infinite;
                meta.oscillation = Infinite;
            }
            let half_sq = 0.5 * norm * norm;
            meta.generator_plus_sup = match base {
                _ if norm == 0.0 => Finite(0.0),
                Base::Exponential(alpha) => Finite((alpha * coef.iter().map(|a| a.abs()).sum::<f64>() - half_sq).max(0.0)),
                Base::Uniform => Finite(0.0),
                Base::Gaussian | Base::Subbotin | Base::DoubleWell(_) => Infinite,
                Base::Other => Unknown,
            };
            if let Some(b) = &bbox {
                // outward normal derivative at each face is ±a_i
                meta.boundary_ok = Some(coef.iter().zip(b).all(|(a, (l, h))| (!h.is_finite() || *a >= 0.0) && (!l.is_finite() || *a <= 0.0)));
            }
        }
        PerturbationKind::Quadratic { rho } => {
            let rho = *rho;
            meta.curvature_lower = Finite(rho);
            meta.convex = rho >= 0.0;
            meta.even = true;
            match max_radius {
                Some(r) => {
                    meta.lipschitz = Finite(rho.abs() * r);
                    let min_r2: f64 = bbox.as_ref().unwrap().iter().map(|(l, h)| if *l <= 0.0 && *h >= 0.0 { 0.0 } else { l.abs().min(h.abs()).powi(2) }).sum();
                    let (a, b) = (0.5 * rho * min_r2, 0.5 * rho * r * r);
                    meta.sup_above = Finite(a.max(b));
                    meta.inf_below = Finite(a.min(b));
                    meta.oscillation = Finite((b - a).abs());
                }
                None => {
                    meta.lipschitz = if rho == 0.0 { Finite(0.0) } else { Infinite };
                    if rho <= 0.0 {
                        meta.sup_above = Finite(0.0);
                        meta.inf_below = if rho == 0.0 { Finite(0.0) } else { Infinite };
                    } else {
                        meta.sup_above = Infinite;
                        meta.inf_below = Finite(0.0);
                    }
                    meta.oscillation = if rho == 0.0 { Finite(0.0) } else { Infinite };
                }
            }
            meta.generator_plus_sup = match base {
                Base::Gaussian | Base::Subbotin | Base::Exponential(_) if rho >= 0.0 => Finite(rho * n),
                Base::Uniform => Finite((rho * n).max(0.0)),
                Base::DoubleWell(a) if rho > 0.0 => {
                    let b = 2.0 * a * rho - 0.5 * rho * rho;
                    let per_axis = rho + if b > 0.0 { b * b / (16.0 * rho) } else { 0.0 };
                    Finite(per_axis * n)
                }
                Base::DoubleWell(_) if rho == 0.0 => Finite(0.0),
                Base::Other => Unknown,
                _ => Infinite,
            };
            if let Some(b) = &bbox {
                meta.boundary_ok = Some(b.iter().all(|(l, h)| rho * h >= 0.0 && -rho * l >= 0.0));
            }
        }
        PerturbationKind::AbsScaled { c } => {
            let c = *c;
            meta.lipschitz = Finite(c.abs());
            meta.convex = c >= 0.0;
            meta.even = true;
            meta.curvature_lower = if c >= 0.0 { Finite(0.0) } else { Unknown };
            match max_radius {
                Some(r) => {
                    let min_r: f64 = bbox.as_ref().unwrap().iter().map(|(l, h)| if *l <= 0.0 && *h >= 0.0 { 0.0 } else { l.abs().min(h.abs()).powi(2) }).sum::<f64>().sqrt();
                    let (a, b) = (c * min_r, c * r);
                    meta.sup_above = Finite(a.max(b));
                    meta.inf_below = Finite(a.min(b));
                    meta.oscillation = Finite((b - a).abs());
                }
                None => {
                    meta.sup_above = if c <= 0.0 { Finite(0.0) } else { Infinite };
                    meta.inf_below = if c >= 0.0 { Finite(0.0) } else { Infinite };
                    meta.oscillation = if c == 0.0 { Finite(0.0) } else { Infinite };
                }
            }
            // Off the origin, AF − ½|∇F|² = −c ∂_r V − c²/2 in one dimension;
            // the distributional Laplacian at 0 has the sign of c.
            meta.generator_plus_sup = if c == 0.0 {
                Finite(0.0)
            } else if m.dim != 1 || c > 0.0 {
                Unknown
            } else {
                match base {
                    Base::Exponential(alpha) => Finite((alpha * c.abs() - 0.5 * c * c).max(0.0)),
                    Base::Uniform => Finite(0.0),
                    Base::Gaussian | Base::Subbotin | Base::DoubleWell(_) => Infinite,
                    Base::Other => Unknown,
                }
            };
            if let Some(b) = &bbox {
                meta.boundary_ok = Some(b.iter().all(|(l, h)| (*h <= 0.0 || c >= 0.0) && (*l >= 0.0 || c >= 0.0)));
            }
        }
        PerturbationKind::Bump { amplitude, width, .. } => {
            let a = *amplitude;
            let w = *width;
            meta.lipschitz = Finite(a.abs() / w * (-0.5f64).exp());
            meta.sup_above = Finite(a.max(0.0));
            meta.inf_below = Finite(a.min(0.0));
            meta.oscillation = Finite(a.abs());
            meta.convex = a == 0.0;
            meta.even = match kind {
                PerturbationKind::Bump { center, .. } => center.iter().all(|c| *c == 0.0),
                _ => unreachable!(),
            };
            // Hessian eigenvalues of A e^{-r²/2w²} lie in [−A/w², 2A e^{-3/2}/w²] for A ≥ 0.
            meta.curvature_lower = if a >= 0.0 { Finite(-a / (w * w)) } else { Finite(2.0 * a * (-1.5f64).exp() / (w * w)) };
            meta.generator_plus_sup = if a == 0.0 { Finite(0.0) } else { Unknown };
            if bbox.is_some() {
                meta.boundary_ok = None;
            }
        }
        PerturbationKind::Custom { .. } => {
            meta.boundary_ok = None;
        }
    }
    if !m.is_restricted() {
        meta.boundary_ok = None;
    }
    meta
}
