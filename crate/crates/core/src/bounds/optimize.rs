//! Deterministic minimization over the free parameters of a bound.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Use the analytic optimum where a calculator has one; otherwise behaves as `GoldenSection`.
    #[default]
    ClosedForm,
    GoldenSection,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSearch {
    pub strategy: Strategy,
    /// Points per axis for grid scans.
    pub grid_resolution: usize,
    /// Relative distance kept from open box ends.
    pub slack: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Parameters pinned by the caller.
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
}

impl Default for ParamSearch {
    fn default() -> Self {
        ParamSearch { strategy: Strategy::ClosedForm, grid_resolution: 64, slack: 1e-9, rel_tol: 1e-6, max_iter: 200, fixed: BTreeMap::new() }
    }
}

impl ParamSearch {
    pub fn golden() -> Self {
        ParamSearch { strategy: Strategy::GoldenSection, ..Default::default() }
    }

    pub fn grid(resolution: usize) -> Self {
        ParamSearch { strategy: Strategy::Grid, grid_resolution: resolution, ..Default::default() }
    }

    pub fn fix(mut self, name: &str, value: f64) -> Self {
        self.fixed.insert(name.into(), value);
        self
    }

    pub fn closed_form(&self) -> bool {
        self.strategy == Strategy::ClosedForm && self.fixed.is_empty()
    }
}

/// Open interval for one parameter; searched on a log scale when `log_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub log_scale: bool,
}

impl ParamBox {
    pub fn linear(name: &str, lo: f64, hi: f64) -> ParamBox {
        ParamBox { name: name.into(), lo, hi, log_scale: false }
    }

    pub fn log(name: &str, lo: f64, hi: f64) -> ParamBox {
        ParamBox { name: name.into(), lo, hi, log_scale: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub value: f64,
    /// Set when a line scan saw several local minima.
    pub grid_fallback: bool,
    pub evaluations: usize,
}

impl SearchOutcome {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }
}

struct Axis {
    a: f64,
    b: f64,
    log: bool,
    pinned: Option<f64>,
}

impl Axis {
    fn to_param(&self, u: f64) -> f64 {
        if let Some(v) = self.pinned {
            return v;
        }
        if self.log {
            u.exp()
        } else {
            u
        }
    }
}

struct Eval<'a> {
    f: &'a dyn Fn(&[f64]) -> Option<f64>,
    axes: &'a [Axis],
    count: usize,
}

impl Eval<'_> {
    fn at(&mut self, u: &[f64]) -> f64 {
        self.count += 1;
        let p: Vec<f64> = u.iter().zip(self.axes).map(|(u, ax)| ax.to_param(*u)).collect();
        match (self.f)(&p) {
            Some(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }
}

const SCAN_POINTS: usize = 17;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn scan(ev: &mut Eval, u: &mut [f64], k: usize, n: usize) -> (usize, Vec<f64>, Vec<f64>) {
    let (a, b) = (ev.axes[k].a, ev.axes[k].b);
    let xs: Vec<f64> = (0..n).map(|i| if n == 1 { 0.5 * (a + b) } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect();
    let mut vals = Vec::with_capacity(n);
    for x in &xs {
        u[k] = *x;
        vals.push(ev.at(u));
    }
    let best = (0..n).fold(0, |bi, i| if vals[i] < vals[bi] { i } else { bi });
    (best, xs, vals)
}

fn local_minima(vals: &[f64]) -> usize {
    let n = vals.len();
    (0..n)
        .filter(|&i| vals[i].is_finite() && (i == 0 || vals[i] < vals[i - 1]) && (i + 1 == n || vals[i] <= vals[i + 1]))
        .count()
}

/// Golden-section search of axis `k` inside `[lo, hi]`; returns `(u, value)`.
fn golden(ev: &mut Eval, u: &mut [f64], k: usize, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    u[k] = x1;
    let mut f1 = ev.at(u);
    u[k] = x2;
    let mut f2 = ev.at(u);
    let width0 = (hi - lo).abs().max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-13 * width0.max(1.0) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            u[k] = x1;
            f1 = ev.at(u);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            u[k] = x2;
            f2 = ev.at(u);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimizes `objective` over the boxes. The objective returns `None` at
/// infeasible points; it must check its own gate before evaluating the
/// bound. Returns `None` when no feasible point is found.
pub fn optimize_free_params(objective: &dyn Fn(&[f64]) -> Option<f64>, boxes: &[ParamBox], search: &ParamSearch) -> Option<SearchOutcome> {
    let axes: Vec<Axis> = boxes
        .iter()
        .map(|b| {
            let pinned = search.fixed.get(&b.name).copied();
            let (mut a, mut c) = if b.log_scale { (b.lo.max(f64::MIN_POSITIVE).ln(), b.hi.ln()) } else { (b.lo, b.hi) };
            let pad = search.slack * (c - a).abs().max(if b.log_scale { 0.0 } else { 1.0 });
            a += pad;
            c -= pad;
            if c < a {
                c = a;
            }
            Axis { a, b: c, log: b.log_scale, pinned }
        })
        .collect();
    let names: Vec<String> = boxes.iter().map(|b| b.name.clone()).collect();
    if axes.is_empty() {
        let v = objective(&[])?;
        return Some(SearchOutcome { names, params: Vec::new(), value: v, grid_fallback: false, evaluations: 1 });
    }
    let d = axes.len();
    let mut ev = Eval { f: objective, axes: &axes, count: 0 };
    let free: Vec<usize> = (0..d).filter(|&k| axes[k].pinned.is_none() && axes[k].b > axes[k].a).collect();

    // Starting point: coarse product grid over the free axes.
    let per_axis = match free.len() {
        0 => 1,
        1 => search.grid_resolution.max(SCAN_POINTS),
        2 => search.grid_resolution.clamp(SCAN_POINTS, 64),
        3 => 16,
        _ => 8,
    };
    let mut u: Vec<f64> = axes.iter().map(|ax| 0.5 * (ax.a + ax.b)).collect();
    let mut best_u = u.clone();
    let mut best = ev.at(&u);
    let total = per_axis.pow(free.len() as u32);
    for idx in 0..total {
        let mut r = idx;
        for &k in &free {
            let i = r % per_axis;
            r /= per_axis;
            u[k] = axes[k].a + (axes[k].b - axes[k].a) * i as f64 / (per_axis - 1).max(1) as f64;
        }
        let v = ev.at(&u);
        if v < best {
            best = v;
            best_u.clone_from(&u);
        }
    }
    if !best.is_finite() {
        return None;
    }
    u = best_u;
    let mut fallback = false;

    for _ in 0..search.max_iter {
        let start = best;
        for &k in &free {
            let prev = u[k];
            let n = if search.strategy == Strategy::Grid { search.grid_resolution.max(3) } else { SCAN_POINTS };
            let (i, xs, vals) = scan(&mut ev, &mut u, k, n);
            if local_minima(&vals) > 1 {
                fallback = true;
            }
            let (mut x, mut v) = (xs[i], vals[i]);
            if v.is_finite() {
                let (gx, gv) = golden(&mut ev, &mut u, k, xs[i.saturating_sub(1)], xs[(i + 1).min(n - 1)]);
                if gv < v {
                    x = gx;
                    v = gv;
                }
            }
            if v <= best {
                u[k] = x;
                best = v;
            } else {
                u[k] = prev;
            }
        }
        if free.is_empty() || (start - best).abs() <= search.rel_tol * best.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let value = ev.at(&u);
    let params = u.iter().zip(&axes).map(|(u, ax)| ax.to_param(*u)).collect();
    Some(SearchOutcome { names, params, value, grid_fallback: fallback, evaluations: ev.count })
}
