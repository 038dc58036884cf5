//! One-dimensional finite-difference discretizations of the nonlocal
//! gradient and their discrete Fourier symbols.
//!
//! The operator int_0^delta w_g(s) (p(x+s) - p(x-s)) ds admits two natural
//! stencils on a uniform grid of spacing h:
//!
//! ```text
//! regular:   sum_k d_k (p(x_{j+k})     - p(x_{j-k})),      nodes k h
//! staggered: sum_k d_k (p(x_{j+k+1/2}) - p(x_{j-k-1/2})),  nodes (k+1/2) h
//! ```
//!
//! with rectangle-rule weights d_k = w_g(node) h over the nodes inside the
//! horizon. Applied to e^(i n x) the stencils act as i b(n) with
//! b(n) = 2 sum_k d_k sin(n * node_k); the audit scans b over n = 1..N/2
//! for (near-)zero rows, the checkerboard pathology of collocated grids.

use crate::error::{Error, Result};
use crate::kernel::{KernelRole, ScaledKernel};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout1D {
    Regular,
    Staggered,
}

impl Layout1D {
    pub fn name(&self) -> &'static str {
        match self {
            Layout1D::Regular => "regular",
            Layout1D::Staggered => "staggered",
        }
    }
}

/// A 1D stencil for the nonlocal gradient: node offsets and nonnegative
/// rectangle-rule weights.
#[derive(Debug, Clone)]
pub struct Discretization1D {
    pub spacing: f64,
    pub delta: f64,
    pub layout: Layout1D,
    /// Horizon measured in whole cells, floor(delta / h).
    pub horizon_cells: usize,
    pub offsets: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Rectangle-rule weights d_k = w_g(node) h over all stencil nodes inside
/// the horizon: nodes k h (k >= 1) for the regular layout, (k + 1/2) h
/// (k >= 0) for the staggered one.
pub fn build_weights(kernel: &ScaledKernel, h: f64, layout: Layout1D) -> Result<Discretization1D> {
    if kernel.dim != 1 || kernel.profile.role != KernelRole::Gradient {
        return Err(Error::InvalidParameter(
            "build_weights needs a one-dimensional gradient kernel".into(),
        ));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {h}")));
    }
    let delta = kernel.delta;
    let ratio = delta / h;
    let horizon_cells = (ratio + 1e-12).floor() as usize;
    let count = match layout {
        Layout1D::Regular => horizon_cells,
        Layout1D::Staggered => (ratio + 0.5 + 1e-12).floor() as usize,
    };
    if count == 0 {
        return Err(Error::EmptyStencil { delta, h, layout: layout.name().into() });
    }
    let offsets: Vec<f64> = match layout {
        Layout1D::Regular => (1..=count).map(|k| k as f64 * h).collect(),
        Layout1D::Staggered => (0..count).map(|k| (k as f64 + 0.5) * h).collect(),
    };
    let weights: Vec<f64> = offsets.iter().map(|&s| kernel.eval(s) * h).collect();
    Ok(Discretization1D { spacing: h, delta, layout, horizon_cells, offsets, weights })
}

/// Stencil for the standard grid h = 2 pi / N.
pub fn discretization_for_grid(
    kernel: &ScaledKernel,
    modes_per_axis: usize,
    layout: Layout1D,
) -> Result<Discretization1D> {
    if modes_per_axis < 4 || modes_per_axis % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "modes per axis must be an even integer >= 4, got {modes_per_axis}"
        )));
    }
    build_weights(kernel, 2.0 * PI / modes_per_axis as f64, layout)
}

/// Discrete symbol b(n) = 2 sum_k d_k sin(n * node_k); odd in n.
pub fn discrete_gradient_symbol(disc: &Discretization1D, n: i64) -> f64 {
    let nf = n as f64;
    2.0 * disc
        .offsets
        .iter()
        .zip(&disc.weights)
        .map(|(&s, &w)| w * (nf * s).sin())
        .sum::<f64>()
}

/// Discrete first moment 2 sum_k d_k node_k; consistent with the d = 1
/// normalization (= 1) up to the rectangle-rule error O(h).
pub fn first_moment(disc: &Discretization1D) -> f64 {
    2.0 * disc.offsets.iter().zip(&disc.weights).map(|(&s, &w)| w * s).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridVerdict {
    RankDeficient,
    Stable,
}

impl GridVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            GridVerdict::RankDeficient => "rank-deficient",
            GridVerdict::Stable => "stable",
        }
    }
}

/// Scan of |b(n)| over n = 1..N/2.
#[derive(Debug, Clone, Copy)]
pub struct NyquistAudit {
    pub modes_per_axis: usize,
    pub min_abs: f64,
    pub min_at: usize,
    pub max_abs: f64,
    pub max_at: usize,
    /// Symbol value at the checkerboard mode n = N/2.
    pub nyquist_value: f64,
    pub verdict: GridVerdict,
}

/// Audit the discrete symbol over n = 1..N/2; rank-deficient when the
/// smallest magnitude is below 1e-12 of the largest.
pub fn nyquist_audit(disc: &Discretization1D) -> Result<NyquistAudit> {
    let n_real = 2.0 * PI / disc.spacing;
    let n = n_real.round() as usize;
    if n < 4 || n % 2 != 0 || (n as f64 - n_real).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "audit needs h = 2 pi / N with even N >= 4; h = {} gives N = {n_real}",
            disc.spacing
        )));
    }
    let mut audit = NyquistAudit {
        modes_per_axis: n,
        min_abs: f64::INFINITY,
        min_at: 0,
        max_abs: 0.0,
        max_at: 0,
        nyquist_value: discrete_gradient_symbol(disc, (n / 2) as i64),
        verdict: GridVerdict::Stable,
    };
    for k in 1..=n / 2 {
        let v = discrete_gradient_symbol(disc, k as i64).abs();
        if v < audit.min_abs {
            audit.min_abs = v;
            audit.min_at = k;
        }
        if v > audit.max_abs {
            audit.max_abs = v;
            audit.max_at = k;
        }
    }
    if audit.min_abs < 1e-12 * audit.max_abs {
        audit.verdict = GridVerdict::RankDeficient;
    }
    Ok(audit)
}
