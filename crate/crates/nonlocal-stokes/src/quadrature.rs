//! Gauss-Legendre quadrature with graded endpoint treatment.
//!
//! All radial integrals in this crate run through [`integrate_refined`]:
//! a composite Gauss-Legendre rule on panels of (0, 1], with an optional
//! power substitution t = s^q that absorbs an algebraic singularity at the
//! left endpoint, wrapped in a panel-doubling loop that stops once two
//! consecutive estimates agree to the requested absolute tolerance.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on the Legendre polynomial; nodes accurate to a
    /// few ulps for the orders used here (<= 4096).
    fn compute(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi-style initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let (p2, d2) = legendre_with_derivative(n, x);
                    dp = d2;
                    x -= p2 / d2;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
            let (_, d) = legendre_with_derivative(n, 0.0);
            weights[n / 2] = 2.0 / (d * d);
        }
        GaussLegendre { nodes, weights }
    }

    /// Cached rule lookup.
    pub fn rule(n: usize) -> Arc<GaussLegendre> {
        static CACHE: RwLock<Option<HashMap<usize, Arc<GaussLegendre>>>> = RwLock::new(None);
        if let Some(map) = CACHE.read().unwrap().as_ref() {
            if let Some(r) = map.get(&n) {
                return Arc::clone(r);
            }
        }
        let rule = Arc::new(GaussLegendre::compute(n));
        let mut guard = CACHE.write().unwrap();
        let map = guard.get_or_insert_with(HashMap::new);
        Arc::clone(map.entry(n).or_insert(rule))
    }

    /// Integrate f over [a, b] with a single application of the rule.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// One segment of a radial integrand on (lo, hi] with a grading exponent
/// for a left-endpoint singularity (grading only meaningful when lo == 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub grading: u32,
}

impl Segment {
    pub fn plain(lo: f64, hi: f64) -> Self {
        Segment { lo, hi, grading: 1 }
    }

    pub fn graded(hi: f64, q: u32) -> Self {
        Segment { lo: 0.0, hi, grading: q.max(1) }
    }
}

/// Panel layout shared by every refinement level. `base_panels` panels are
/// used per unit oscillation budget; refinement multiplies the count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelPlan {
    pub nodes_per_panel: usize,
    pub base_panels: usize,
    pub max_panels: usize,
}

impl Default for PanelPlan {
    fn default() -> Self {
        PanelPlan { nodes_per_panel: 32, base_panels: 8, max_panels: 8192 }
    }
}

/// Evaluation points and weights for integrands of the form t^alpha * f(t)
/// with f bounded at the origin: the integral is approximated by
/// sum_i w_i * f(t_i), with t^alpha already folded into the weights.
///
/// Graded segments substitute t = hi * s^q and absorb the algebraic factor
/// analytically, so the node weight is
/// q * hi^(alpha+1) * s^(q(alpha+1)-1), with a nonnegative s-exponent
/// whenever q (alpha+1) >= 1. This keeps singular profiles (alpha < 0)
/// free of spurious inf * 0 at the endpoint.
pub fn power_nodes(segments: &[Segment], alpha: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::rule(order);
    let mut out = Vec::with_capacity(segments.len() * panels * order);
    for seg in segments {
        if seg.lo == 0.0 && (seg.grading > 1 || alpha != 0.0) {
            let q = seg.grading as f64;
            let hi = seg.hi;
            let exponent = q * (alpha + 1.0) - 1.0;
            let prefactor = q * hi.powf(alpha + 1.0);
            let width = 1.0 / panels as f64;
            for p in 0..panels {
                let lo = p as f64 * width;
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    let s = lo + 0.5 * width * (x + 1.0);
                    let t = hi * s.powi(seg.grading as i32);
                    out.push((t, 0.5 * width * w * prefactor * s.powf(exponent)));
                }
            }
        } else {
            let width = (seg.hi - seg.lo) / panels as f64;
            for p in 0..panels {
                let lo = seg.lo + p as f64 * width;
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    let t = lo + 0.5 * width * (x + 1.0);
                    let tw = if alpha == 0.0 { 1.0 } else { t.powf(alpha) };
                    out.push((t, 0.5 * width * w * tw));
                }
            }
        }
    }
    out
}

/// Composite rule over the segments; integrand is t^alpha * f(t).
pub fn integrate_segments<F>(
    segments: &[Segment],
    alpha: f64,
    panels: usize,
    order: usize,
    f: &F,
) -> f64
where
    F: Fn(f64) -> f64,
{
    power_nodes(segments, alpha, panels, order).iter().map(|&(t, w)| w * f(t)).sum()
}

/// Panel-doubling refinement until |I_k - I_2k| <= tol. Returns the finer
/// estimate; errors out with the last two estimates if the budget runs out.
/// The integrand is t^alpha * f(t); see [`integrate_segments`].
pub fn integrate_refined<F>(
    segments: &[Segment],
    alpha: f64,
    base_panels: usize,
    plan: PanelPlan,
    tol: f64,
    f: &F,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut panels = base_panels.max(1);
    let mut prev = integrate_segments(segments, alpha, panels, plan.nodes_per_panel, f);
    loop {
        panels *= 2;
        let next = integrate_segments(segments, alpha, panels, plan.nodes_per_panel, f);
        if (next - prev).abs() <= tol {
            return Ok(next);
        }
        if panels >= plan.max_panels {
            return Err(Error::QuadratureNonConvergence { last: next, previous: prev, target: tol });
        }
        prev = next;
    }
}

/// sin(x)/x with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}
