//! Radial interaction kernels: profiles on [0, 1], their moments and
//! normalization, horizon rescaling, and the strong-nearby-interaction
//! audit for gradient kernels.
//!
//! A profile w(r) is supported on the unit interval and enters the
//! operators after rescaling to horizon delta:
//!
//! ```text
//! diffusion: w_d(r) = delta^-(d+2) w(r/delta)
//! gradient:  w_g(r) = delta^-(d+1) w(r/delta)
//! ```
//!
//! Normalization fixes the amplitude so that the second moment of the
//! diffusion kernel, respectively the first moment of the gradient kernel,
//! equals the dimension d.

use crate::error::{Error, Result};
use crate::quadrature::{integrate_refined, PanelPlan, Segment};

/// Surface measure of the unit sphere S^(d-1); d = 1 counts both half-lines.
pub fn sphere_surface(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("dimension {d} not supported"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileKind {
    /// c * r^-(d+beta) on (0, 1].
    Fractional { beta: f64 },
    /// c on [0, 1].
    Constant,
    /// Standard cubic B-spline rescaled so its support is [0, 1].
    CubicSpline,
    /// c * exp(-r^2 / (2 sigma^2)) truncated at r = 1.
    TruncatedGaussian { sigma: f64 },
    /// Fractional on (0, cutover], then a constant tail matched
    /// continuously at the cutover.
    PiecewiseFractional { beta: f64, cutover: f64 },
}

impl ProfileKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileKind::Fractional { .. } => "fractional",
            ProfileKind::Constant => "constant",
            ProfileKind::CubicSpline => "cubic_spline",
            ProfileKind::TruncatedGaussian { .. } => "truncated_gaussian",
            ProfileKind::PiecewiseFractional { .. } => "piecewise_fractional",
        }
    }

    fn fractional_exponent(&self) -> Option<f64> {
        match self {
            ProfileKind::Fractional { beta } | ProfileKind::PiecewiseFractional { beta, .. } => {
                Some(*beta)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelRole {
    Diffusion,
    Gradient,
}

impl KernelRole {
    pub fn name(&self) -> &'static str {
        match self {
            KernelRole::Diffusion => "diffusion",
            KernelRole::Gradient => "gradient",
        }
    }

    /// Rescaling exponent d + 2 (diffusion) or d + 1 (gradient).
    pub fn scaling_exponent(&self, d: usize) -> i32 {
        match self {
            KernelRole::Diffusion => d as i32 + 2,
            KernelRole::Gradient => d as i32 + 1,
        }
    }

    /// Power of r multiplying the profile in the moment integrand.
    fn moment_power(&self, d: usize) -> f64 {
        match self {
            KernelRole::Diffusion => (d + 1) as f64,
            KernelRole::Gradient => d as f64,
        }
    }

    fn moment_prefactor(&self, d: usize) -> f64 {
        match self {
            KernelRole::Diffusion => 0.5 * sphere_surface(d),
            KernelRole::Gradient => sphere_surface(d),
        }
    }
}

/// A radial profile on [0, 1] with an amplitude and a role.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile {
    pub kind: ProfileKind,
    pub amplitude: f64,
    pub role: KernelRole,
}

/// Verdict of the strong-nearby-interaction audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Monotonicity {
    Pass,
    /// First sampled subinterval on which r^(d-1) w(r) increases.
    Fail { r_lo: f64, r_hi: f64 },
}

impl Monotonicity {
    pub fn passed(&self) -> bool {
        matches!(self, Monotonicity::Pass)
    }
}

impl RadialProfile {
    pub fn new(kind: ProfileKind, amplitude: f64, role: KernelRole) -> Result<Self> {
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be a finite nonnegative real, got {amplitude}"
            )));
        }
        match kind {
            ProfileKind::Fractional { beta } | ProfileKind::PiecewiseFractional { beta, .. } => {
                if !beta.is_finite() {
                    return Err(Error::InvalidParameter("beta must be finite".into()));
                }
            }
            ProfileKind::TruncatedGaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "sigma must be positive, got {sigma}"
                    )));
                }
            }
            _ => {}
        }
        if let ProfileKind::PiecewiseFractional { cutover, .. } = kind {
            if !(cutover > 0.0 && cutover <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "cutover must lie in (0, 1], got {cutover}"
                )));
            }
        }
        Ok(RadialProfile { kind, amplitude, role })
    }

    /// Unit-amplitude shape. Exactly zero outside the support.
    pub fn shape(&self, r: f64, d: usize) -> f64 {
        if r > 1.0 || r < 0.0 {
            return 0.0;
        }
        match self.kind {
            ProfileKind::Fractional { beta } => r.powf(-(d as f64 + beta)),
            ProfileKind::Constant => 1.0,
            ProfileKind::CubicSpline => cubic_spline_shape(r),
            ProfileKind::TruncatedGaussian { sigma } => (-r * r / (2.0 * sigma * sigma)).exp(),
            ProfileKind::PiecewiseFractional { beta, cutover } => {
                let p = -(d as f64 + beta);
                if r <= cutover {
                    r.powf(p)
                } else {
                    cutover.powf(p)
                }
            }
        }
    }

    /// Profile value c * w(r); zero for r outside [0, 1].
    pub fn value(&self, r: f64, d: usize) -> f64 {
        self.amplitude * self.shape(r, d)
    }

    /// Algebraic exponent of the shape at the origin: w(r) ~ r^p near 0.
    pub(crate) fn origin_exponent(&self, d: usize) -> f64 {
        match self.kind.fractional_exponent() {
            Some(beta) => -(d as f64 + beta),
            None => 0.0,
        }
    }

    /// Shape with the origin power factored out: shape(r) = r^p * rest(r)
    /// with rest bounded near r = 0 (rest(0) = 1 for fractional shapes).
    pub(crate) fn shape_regular(&self, r: f64, d: usize) -> f64 {
        if r > 1.0 || r < 0.0 {
            return 0.0;
        }
        match self.kind {
            ProfileKind::Fractional { .. } => 1.0,
            ProfileKind::PiecewiseFractional { beta, cutover } => {
                if r <= cutover {
                    1.0
                } else {
                    (r / cutover).powf(d as f64 + beta)
                }
            }
            _ => self.shape(r, d),
        }
    }

    /// Integration segments of (0, 1] with grading that absorbs the
    /// fractional origin singularity, and panel breaks on interior knots.
    pub(crate) fn segments(&self) -> Vec<Segment> {
        let segs = match self.kind {
            ProfileKind::Fractional { beta } => {
                vec![Segment::graded(1.0, grading_exponent(beta, self.role))]
            }
            ProfileKind::PiecewiseFractional { beta, cutover } => {
                let q = grading_exponent(beta, self.role);
                if cutover >= 1.0 {
                    vec![Segment::graded(1.0, q)]
                } else {
                    vec![Segment::graded(cutover, q), Segment::plain(cutover, 1.0)]
                }
            }
            ProfileKind::CubicSpline => {
                vec![Segment::plain(0.0, 0.5), Segment::plain(0.5, 1.0)]
            }
            _ => vec![Segment::plain(0.0, 1.0)],
        };
        segs.into_iter().filter(|s| s.hi > s.lo).collect()
    }

    fn moment_integrable(&self) -> bool {
        match self.kind.fractional_exponent() {
            Some(beta) => match self.role {
                KernelRole::Gradient => beta < 1.0,
                KernelRole::Diffusion => beta < 2.0,
            },
            None => true,
        }
    }

    /// Whether the profile satisfies both admissibility conditions for
    /// gradient kernels: r^(d-1) w(r) nonincreasing on (0, 1) and
    /// fractional behavior c r^-(d+beta), beta in (-1, 1), near the origin.
    pub fn admissible(&self, d: usize) -> bool {
        let beta_ok = matches!(self.kind.fractional_exponent(), Some(beta) if beta > -1.0 && beta < 1.0);
        beta_ok && check_gradient_monotonicity(self, d).passed()
    }
}

/// Grading exponent ceil(2 / (1 - beta)) for fractional kernels; the
/// diffusion role tolerates beta in [1, 2) where the direct formula is
/// undefined, so the grading switches to the exponent that flattens the
/// moment integrand r^(1-beta).
fn grading_exponent(beta: f64, role: KernelRole) -> u32 {
    if beta < 1.0 {
        if beta <= -1.0 {
            1
        } else {
            (2.0 / (1.0 - beta)).ceil() as u32
        }
    } else {
        match role {
            KernelRole::Gradient => 1, // divergent anyway; caught earlier
            KernelRole::Diffusion => ((2.0 / (2.0 - beta)).ceil() as u32).saturating_add(1),
        }
    }
}

/// Standard cubic B-spline with support rescaled from [0, 2] to [0, 1];
/// amplitude is left to normalization.
fn cubic_spline_shape(r: f64) -> f64 {
    let q = 2.0 * r;
    if q <= 1.0 {
        1.0 - 1.5 * q * q + 0.75 * q * q * q
    } else if q <= 2.0 {
        0.25 * (2.0 - q).powi(3)
    } else {
        0.0
    }
}

/// Moment tolerance pinned by the artifact contract.
const MOMENT_TOL: f64 = 1e-10;

/// Second (diffusion) or first (gradient) moment of the unscaled profile:
///
/// ```text
/// diffusion: 1/2 S_{d-1} int_0^1 w(r) r^(d+1) dr
/// gradient:      S_{d-1} int_0^1 w(r) r^d     dr
/// ```
pub fn kernel_moment(profile: &RadialProfile, d: usize) -> Result<f64> {
    check_dim(d)?;
    if profile.amplitude == 0.0 {
        return Ok(0.0);
    }
    if !profile.moment_integrable() {
        return Err(Error::DivergentMoment {
            kind: profile.kind.name().into(),
            beta: profile.kind.fractional_exponent().unwrap_or(f64::NAN),
            role: profile.role.name().into(),
        });
    }
    let alpha = profile.role.moment_power(d) + profile.origin_exponent(d);
    let prefactor = profile.role.moment_prefactor(d) * profile.amplitude;
    let segments = profile.segments();
    let inner = integrate_refined(
        &segments,
        alpha,
        8,
        PanelPlan::default(),
        0.5 * MOMENT_TOL / prefactor.max(1.0),
        &|r: f64| profile.shape_regular(r, d),
    )?;
    Ok(prefactor * inner)
}

/// Rescale the amplitude so the kernel moment equals d. Idempotent up to
/// quadrature tolerance.
pub fn normalize_profile(profile: &RadialProfile, d: usize) -> Result<RadialProfile> {
    let moment = kernel_moment(profile, d)?;
    if moment <= 0.0 {
        return Err(Error::ZeroMoment);
    }
    let mut out = *profile;
    out.amplitude = profile.amplitude * d as f64 / moment;
    Ok(out)
}

/// Audit of the strong-nearby-interaction condition: r^(d-1) w(r) must be
/// nonincreasing on (0, 1). A pure power shape is decided analytically;
/// everything else is sampled densely (4096 points).
pub fn check_gradient_monotonicity(profile: &RadialProfile, d: usize) -> Monotonicity {
    const SAMPLES: usize = 4096;
    if let ProfileKind::Fractional { beta } = profile.kind {
        // r^(d-1) w = c r^(-1-beta): nonincreasing iff beta >= -1.
        if beta >= -1.0 {
            return Monotonicity::Pass;
        }
    }
    let g = |r: f64| r.powi(d as i32 - 1) * profile.shape(r, d);
    let mut prev_r = 1.0 / (SAMPLES as f64 + 1.0);
    let mut prev_g = g(prev_r);
    for i in 2..=SAMPLES {
        let r = i as f64 / (SAMPLES as f64 + 1.0);
        let cur = g(r);
        if cur > prev_g * (1.0 + 1e-12) + 1e-300 {
            return Monotonicity::Fail { r_lo: prev_r, r_hi: r };
        }
        prev_r = r;
        prev_g = cur;
    }
    Monotonicity::Pass
}

fn check_dim(d: usize) -> Result<()> {
    if (1..=3).contains(&d) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("dimension must be 1, 2 or 3, got {d}")))
    }
}

/// A radial profile rescaled to horizon delta in dimension d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledKernel {
    pub profile: RadialProfile,
    pub delta: f64,
    pub dim: usize,
}

impl ScaledKernel {
    pub fn new(profile: RadialProfile, delta: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        Ok(ScaledKernel { profile, delta, dim })
    }

    /// delta^-(d+2) w(r/delta) for diffusion, delta^-(d+1) w(r/delta) for
    /// gradient; exactly zero for r > delta. A singular fractional profile
    /// evaluated at r = 0 returns +inf.
    pub fn eval(&self, r: f64) -> f64 {
        if r > self.delta {
            return 0.0;
        }
        let exponent = self.profile.role.scaling_exponent(self.dim);
        self.delta.powi(-exponent) * self.profile.value(r / self.delta, self.dim)
    }
}
