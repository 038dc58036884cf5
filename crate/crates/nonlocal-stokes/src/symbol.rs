//! Fourier symbols of the nonlocal operators.
//!
//! On the periodic cell the nonlocal diffusion operator acts on a mode
//! e^(i xi . x) as multiplication by -lambda(|xi|), and the nonlocal
//! gradient as multiplication by i b(|xi|) xi/|xi|, with
//!
//! ```text
//! lambda(|xi|) = int_{|s|<=delta} w_d(|s|) (1 - cos(xi . s)) ds
//! b(|xi|)      = component of int w_g(|s|) s/|s| sin(xi . s) ds along xi
//! ```
//!
//! Both reduce to an oscillatory radial integral against the unit profile,
//! scaled by powers of the horizon:
//! lambda_delta(xi) = delta^-2 L(delta xi), b_delta(xi) = delta^-1 B(delta xi).
//! The radial quadrature is composite Gauss-Legendre with a graded power
//! substitution for fractional profiles and panel-doubling refinement; the
//! angular integral uses a fixed Gauss-Legendre rule whose order grows with
//! the oscillation parameter delta * xi.

use crate::error::{Error, Result};
use crate::kernel::{KernelRole, ScaledKernel};
use crate::quadrature::{power_nodes, sinc, GaussLegendre};
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

/// Quadrature settings recorded alongside computed tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolQuadrature {
    /// Gauss-Legendre order per radial panel.
    pub radial_order: usize,
    /// Base radial panel count; the oscillatory budget and the refinement
    /// loop scale it up.
    pub base_panels: usize,
    /// Angular Gauss-Legendre order at small oscillation.
    pub angular_base: usize,
    /// Absolute tolerance scale (multiplies max(1, xi^k)).
    pub tolerance: f64,
}

impl Default for SymbolQuadrature {
    fn default() -> Self {
        SymbolQuadrature { radial_order: 32, base_panels: 8, angular_base: 64, tolerance: 1e-9 }
    }
}

const SYMBOL_TOL: f64 = 1e-9;
const MAX_PANELS: usize = 8192;

#[derive(Clone, Copy)]
enum Oscillation {
    /// 1 - cos(mu t) = (mu t)^2 / 2 * sinc(mu t / 2)^2, diffusion symbol.
    OneMinusCos,
    /// sin(mu t) = mu t * sinc(mu t), gradient symbol.
    Sine,
}

/// Angular rule order grows with the oscillation parameter so large
/// delta*xi products stay resolved.
fn angular_order(a: f64) -> usize {
    let blocks = (a / 24.0).floor() as usize;
    (64 * (1 + blocks)).min(8192)
}

fn radial_base_panels(a: f64) -> usize {
    (2.0 * a / PI).ceil().max(8.0) as usize
}

/// Unit-profile symbol integral at oscillation parameter a = delta * xi.
///
/// The role decides both the angular weight and the power split:
/// the radial integrand is t^alpha * rest(t) * osc(mu t) with
/// alpha = d + 1 + p (diffusion) or d + p (gradient), p the algebraic
/// exponent of the profile at the origin, rest bounded.
fn unit_symbol(kernel: &ScaledKernel, a: f64, osc: Oscillation, tol: f64) -> Result<f64> {
    let d = kernel.dim;
    let profile = &kernel.profile;
    let p0 = profile.origin_exponent(d);
    let alpha = match osc {
        Oscillation::OneMinusCos => (d + 1) as f64 + p0,
        Oscillation::Sine => d as f64 + p0,
    };
    let segments = profile.segments();
    let amplitude = profile.amplitude;

    let eval = |panels: usize| -> f64 {
        let radial: Vec<(f64, f64)> = power_nodes(&segments, alpha, panels, 32)
            .into_iter()
            .map(|(t, w)| (t, w * amplitude * profile.shape_regular(t, d)))
            .collect();
        let radial_sum = |mu: f64| -> f64 {
            let mut acc = 0.0;
            match osc {
                Oscillation::OneMinusCos => {
                    let half = 0.5 * mu;
                    for &(t, w) in &radial {
                        let s = sinc(half * t);
                        acc += w * 0.5 * mu * mu * s * s;
                    }
                }
                Oscillation::Sine => {
                    for &(t, w) in &radial {
                        acc += w * mu * sinc(mu * t);
                    }
                }
            }
            acc
        };
        match d {
            1 => 2.0 * radial_sum(a),
            2 | 3 => {
                let rule = GaussLegendre::rule(angular_order(a));
                let mut acc = 0.0;
                for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                    let phi = FRAC_PI_2 * 0.5 * (x + 1.0);
                    let weight = FRAC_PI_2 * 0.5 * w;
                    let angular = match (d, osc) {
                        (2, Oscillation::OneMinusCos) => 1.0,
                        (2, Oscillation::Sine) => phi.cos(),
                        (3, Oscillation::OneMinusCos) => phi.sin(),
                        (3, Oscillation::Sine) => phi.cos() * phi.sin(),
                        _ => unreachable!(),
                    };
                    acc += weight * angular * radial_sum(a * phi.cos());
                }
                let prefactor = if d == 2 { 4.0 } else { 4.0 * PI };
                prefactor * acc
            }
            _ => unreachable!("dimension checked at kernel construction"),
        }
    };

    let mut panels = radial_base_panels(a);
    let mut prev = eval(panels);
    loop {
        panels *= 2;
        let next = eval(panels);
        if (next - prev).abs() <= tol {
            return Ok(next);
        }
        if panels >= MAX_PANELS {
            return Err(Error::QuadratureNonConvergence { last: next, previous: prev, target: tol });
        }
        prev = next;
    }
}

/// Diffusion symbol lambda_delta(xi) >= 0; exactly zero at xi = 0.
/// Absolute quadrature error is at most 1e-9 * max(1, xi^2).
pub fn diffusion_symbol(kernel: &ScaledKernel, xi: f64) -> Result<f64> {
    if kernel.profile.role != KernelRole::Diffusion {
        return Err(Error::InvalidParameter("diffusion_symbol needs a diffusion kernel".into()));
    }
    if xi < 0.0 || !xi.is_finite() {
        return Err(Error::InvalidParameter(format!("wavenumber must be finite and >= 0: {xi}")));
    }
    if xi == 0.0 {
        return Ok(0.0);
    }
    let delta = kernel.delta;
    let tol_unit = SYMBOL_TOL * (xi * xi).max(1.0) * delta * delta;
    let unit = unit_symbol(kernel, delta * xi, Oscillation::OneMinusCos, 0.5 * tol_unit)?;
    Ok(unit / (delta * delta))
}

/// Gradient symbol b_delta(xi); exactly zero at xi = 0, may be negative
/// for kernels without strong nearby interactions. Absolute quadrature
/// error is at most 1e-9 * max(1, xi).
pub fn gradient_symbol(kernel: &ScaledKernel, xi: f64) -> Result<f64> {
    if kernel.profile.role != KernelRole::Gradient {
        return Err(Error::InvalidParameter("gradient_symbol needs a gradient kernel".into()));
    }
    if xi < 0.0 || !xi.is_finite() {
        return Err(Error::InvalidParameter(format!("wavenumber must be finite and >= 0: {xi}")));
    }
    if xi == 0.0 {
        return Ok(0.0);
    }
    let delta = kernel.delta;
    let tol_unit = SYMBOL_TOL * xi.max(1.0) * delta;
    let unit = unit_symbol(kernel, delta * xi, Oscillation::Sine, 0.5 * tol_unit)?;
    Ok(unit / delta)
}

/// One row of a sampled symbol table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolRow {
    pub xi: f64,
    pub lambda: f64,
    pub b: f64,
}

/// Sampled symbols on a wavenumber grid, with quadrature metadata.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    pub dim: usize,
    pub delta: f64,
    pub rows: Vec<SymbolRow>,
    pub quadrature: SymbolQuadrature,
}

/// Batch evaluation of both symbols on a strictly increasing positive grid.
/// Deterministic: identical inputs produce bit-identical tables.
pub fn symbol_table(
    diffusion: &ScaledKernel,
    gradient: &ScaledKernel,
    grid: &[f64],
) -> Result<SymbolTable> {
    if diffusion.dim != gradient.dim || diffusion.delta != gradient.delta {
        return Err(Error::InvalidParameter(
            "diffusion and gradient kernels must share dim and delta".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter("wavenumber grid is empty".into()));
    }
    for pair in grid.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidParameter("wavenumber grid must be strictly increasing".into()));
        }
    }
    if grid[0] <= 0.0 {
        return Err(Error::InvalidParameter("wavenumber grid must be positive".into()));
    }
    let rows = grid
        .par_iter()
        .map(|&xi| {
            let lambda = diffusion_symbol(diffusion, xi)?;
            let b = gradient_symbol(gradient, xi)?;
            Ok(SymbolRow { xi, lambda, b })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SymbolTable {
        dim: diffusion.dim,
        delta: diffusion.delta,
        rows,
        quadrature: SymbolQuadrature::default(),
    })
}

/// Result of scanning the gradient symbol for zero crossings.
#[derive(Debug, Clone)]
pub struct ZeroScan {
    /// Sign-change brackets refined by bisection to width <= 1e-6.
    pub brackets: Vec<(f64, f64)>,
    /// Sample points where |b| dips below 1e-8 without a sign change.
    pub near_zero_minima: Vec<f64>,
    /// Smallest sampled value of b and its location.
    pub min_value: f64,
    pub min_at: f64,
}

impl ZeroScan {
    pub fn is_positive(&self) -> bool {
        self.brackets.is_empty() && self.min_value > 0.0
    }
}

const BISECTION_WIDTH: f64 = 1e-6;
const NEAR_ZERO: f64 = 1e-8;

/// Sample b on `resolution` uniform points of (0, xi_max] and bracket every
/// sign change. An empty bracket list means b kept one sign on the grid.
pub fn scan_gradient_symbol_zeros(
    kernel: &ScaledKernel,
    xi_max: f64,
    resolution: usize,
) -> Result<ZeroScan> {
    if resolution < 64 {
        return Err(Error::InvalidParameter(format!(
            "scan resolution must be at least 64, got {resolution}"
        )));
    }
    if !(xi_max.is_finite() && xi_max > 0.0) {
        return Err(Error::InvalidParameter(format!("xi_max must be positive, got {xi_max}")));
    }
    let xs: Vec<f64> =
        (1..=resolution).map(|i| xi_max * i as f64 / resolution as f64).collect();
    let bs = xs
        .par_iter()
        .map(|&xi| gradient_symbol(kernel, xi))
        .collect::<Result<Vec<_>>>()?;

    let mut brackets = Vec::new();
    let mut near_zero = Vec::new();
    let mut min_value = f64::INFINITY;
    let mut min_at = xs[0];
    for (i, (&xi, &b)) in xs.iter().zip(&bs).enumerate() {
        if b < min_value {
            min_value = b;
            min_at = xi;
        }
        if i + 1 < xs.len() {
            let (b0, b1) = (b, bs[i + 1]);
            if b0 == 0.0 {
                // landed exactly on a zero; report a degenerate bracket
                brackets.push((xi, xi));
            } else if b0 * b1 < 0.0 {
                brackets.push(bisect_zero(kernel, xi, xs[i + 1], b0)?);
            }
        }
        // local |b| minimum below the near-zero threshold, same sign on
        // both sides: a tangential touch rather than a crossing.
        if i > 0 && i + 1 < xs.len() {
            let (prev, next) = (bs[i - 1], bs[i + 1]);
            if b.abs() < NEAR_ZERO
                && b.abs() <= prev.abs()
                && b.abs() <= next.abs()
                && prev * b > 0.0
                && next * b > 0.0
            {
                near_zero.push(xi);
            }
        }
    }
    Ok(ZeroScan { brackets, near_zero_minima: near_zero, min_value, min_at })
}

fn bisect_zero(kernel: &ScaledKernel, mut lo: f64, mut hi: f64, b_lo: f64) -> Result<(f64, f64)> {
    let sign_lo = b_lo.signum();
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        let bm = gradient_symbol(kernel, mid)?;
        if bm == 0.0 {
            return Ok((mid, mid));
        }
        if bm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo, hi))
}

/// Radially de-duplicated symbol values for a spectral solve: the integer
/// lattice collides heavily in |xi|^2, so symbols are computed once per
/// distinct squared norm and shared read-only afterwards.
#[derive(Debug, Clone)]
pub struct SymbolCache {
    pub dim: usize,
    pub delta: f64,
    lambda: HashMap<u64, f64>,
    b: HashMap<u64, f64>,
}

impl SymbolCache {
    /// Warm the cache for every squared norm in `norms_sq`. Kernels may be
    /// omitted when the corresponding symbol is not needed by the variant.
    pub fn build(
        diffusion: Option<&ScaledKernel>,
        gradient: Option<&ScaledKernel>,
        dim: usize,
        delta: f64,
        norms_sq: &[u64],
    ) -> Result<Self> {
        let mut sorted: Vec<u64> = norms_sq.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let lambda = match diffusion {
            Some(k) => {
                let vals = sorted
                    .par_iter()
                    .map(|&n| diffusion_symbol(k, (n as f64).sqrt()).map(|v| (n, v)))
                    .collect::<Result<Vec<_>>>()?;
                vals.into_iter().collect()
            }
            None => HashMap::new(),
        };
        let b = match gradient {
            Some(k) => {
                let vals = sorted
                    .par_iter()
                    .map(|&n| gradient_symbol(k, (n as f64).sqrt()).map(|v| (n, v)))
                    .collect::<Result<Vec<_>>>()?;
                vals.into_iter().collect()
            }
            None => HashMap::new(),
        };
        Ok(SymbolCache { dim, delta, lambda, b })
    }

    pub fn lambda(&self, norm_sq: u64) -> f64 {
        self.lambda[&norm_sq]
    }

    pub fn b(&self, norm_sq: u64) -> f64 {
        self.b[&norm_sq]
    }

    pub fn holds_lambda(&self) -> bool {
        !self.lambda.is_empty()
    }
}
