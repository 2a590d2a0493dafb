//! Composite Gauss–Legendre rules on truncated windows.
//!
//! Panels are laid out so that every breakpoint (kinks of non-smooth
//! potentials, support edges) sits on a panel boundary.

use std::sync::OnceLock;

/// Points per Gauss–Legendre panel.
pub const PANEL_ORDER: usize = 16;

/// Default number of nodes per axis.
pub const DEFAULT_NODES: usize = 2048;

/// Potential rise used to place truncation points: the discarded
/// unnormalized mass is of order `e^{-TAIL_DROP}`.
pub const TAIL_DROP: f64 = 40.0;

fn reference_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A one-dimensional quadrature rule.
#[derive(Debug, Clone)]
pub struct Rule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1D {
    /// Composite rule on `[lo, hi]` with roughly `total_nodes` points.
    /// `breaks` lists interior points that must coincide with panel edges.
    pub fn composite(lo: f64, hi: f64, breaks: &[f64], total_nodes: usize) -> Rule1D {
        assert!(hi > lo, "empty quadrature window [{lo}, {hi}]");
        let mut edges = vec![lo];
        let mut inner: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
        inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
        inner.dedup();
        edges.extend(inner);
        edges.push(hi);

        let panels_total = (total_nodes / PANEL_ORDER).max(edges.len() - 1);
        let width = hi - lo;
        let (ref_x, ref_w) = reference_rule();
        let mut nodes = Vec::with_capacity(panels_total * PANEL_ORDER);
        let mut weights = Vec::with_capacity(panels_total * PANEL_ORDER);
        for seg in edges.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let panels = ((panels_total as f64) * (b - a) / width).round().max(1.0) as usize;
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let pa = a + p as f64 * h;
                let mid = pa + 0.5 * h;
                for (x, w) in ref_x.iter().zip(ref_w) {
                    nodes.push(mid + 0.5 * h * x);
                    weights.push(0.5 * h * w);
                }
            }
        }
        Rule1D { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Numerically stable `ln Σ exp(v_i)`; returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.into_iter().collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Quadrature parameters shared by all moment computations.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    /// Nodes per axis; multi-dimensional tensor rules cap the total point count.
    pub nodes_per_axis: usize,
    /// Overrides the automatic truncation half-width.
    pub truncation: Option<f64>,
    /// Potential rise defining the truncation point.
    pub tail_drop: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { nodes_per_axis: DEFAULT_NODES, truncation: None, tail_drop: TAIL_DROP }
    }
}

/// Largest total number of tensor points a multi-dimensional rule may use.
pub const MAX_TENSOR_POINTS: usize = 1 << 22;

impl QuadratureSpec {
    /// Nodes per axis actually used for a `dim`-dimensional tensor rule.
    pub fn effective_nodes(&self, dim: usize) -> usize {
        let cap = (MAX_TENSOR_POINTS as f64).powf(1.0 / dim as f64).floor() as usize;
        let n = self.nodes_per_axis.min(cap.max(PANEL_ORDER));
        (n / PANEL_ORDER).max(1) * PANEL_ORDER
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        // degree 30 is the highest exact degree for 16 points
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((integral - 2.0 / 31.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule_places_breaks_on_panel_edges() {
        let rule = Rule1D::composite(-3.0, 5.0, &[0.0], 256);
        let integral: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.abs()).sum();
        assert!((integral - (4.5 + 12.5)).abs() < 1e-12);
        assert!(rule.nodes.iter().all(|x| *x != 0.0));
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp([1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn effective_nodes_caps_tensor_size() {
        let spec = QuadratureSpec::default();
        assert_eq!(spec.effective_nodes(1), 2048);
        assert_eq!(spec.effective_nodes(2), 2048);
        assert!(spec.effective_nodes(3).pow(3) <= MAX_TENSOR_POINTS);
    }
}
