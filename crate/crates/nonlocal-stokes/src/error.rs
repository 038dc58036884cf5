//! Error type shared across the crate.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone)]
pub enum Error {
    /// The requested kernel moment does not converge (e.g. fractional
    /// gradient profile with exponent >= 1).
    DivergentMoment { kind: String, beta: f64, role: String },
    /// Normalization of a profile whose moment is zero (zero amplitude).
    ZeroMoment,
    /// Composite quadrature did not converge within the panel budget.
    /// Carries the last two estimates for diagnosis.
    QuadratureNonConvergence { last: f64, previous: f64, target: f64 },
    /// The gradient symbol (nearly) vanishes on a retained mode, so the
    /// saddle-point system is singular there.
    IllPosedKernel { mode: [i64; 3], b: f64, xi: f64 },
    /// The gradient symbol vanishes on a retained mode of the pressure
    /// Poisson operator.
    IllPosedPressureOperator { mode: [i64; 3], b: f64 },
    /// Forcing with a nonzero mean is incompatible with the constraints.
    IncompatibleForcing { mean_magnitude: f64 },
    /// Operator applied to a field of the wrong shape.
    ShapeMismatch { expected: usize, got: usize },
    /// Fields that must share a lattice do not.
    MismatchedLattices,
    /// 1D stencil has no interior nodes (horizon below grid resolution).
    EmptyStencil { delta: f64, h: f64, layout: String },
    /// Real-space quadrature requires the lattice to resolve the horizon.
    LatticeTooCoarse { h: f64, delta: f64 },
    /// The interaction ball must fit inside the periodic cell.
    HorizonExceedsCell { delta: f64 },
    /// Invalid run configuration; every detected problem is listed.
    InvalidConfig(Vec<String>),
    /// Miscellaneous invalid argument.
    InvalidParameter(String),
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DivergentMoment { kind, beta, role } => {
                write!(f, "divergent moment: {kind} profile (beta={beta}) in {role} role")
            }
            Error::ZeroMoment => write!(f, "zero moment: profile cannot be normalized"),
            Error::QuadratureNonConvergence { last, previous, target } => write!(
                f,
                "quadrature non-convergence: last={last:e} previous={previous:e} target={target:e}"
            ),
            Error::IllPosedKernel { mode, b, xi } => write!(
                f,
                "ill-posed kernel at mode ({},{},{}): |b|={:e} at |xi|={:e}",
                mode[0], mode[1], mode[2], b.abs(), xi
            ),
            Error::IllPosedPressureOperator { mode, b } => write!(
                f,
                "ill-posed pressure operator at mode ({},{},{}): b={:e}",
                mode[0], mode[1], mode[2], b
            ),
            Error::IncompatibleForcing { mean_magnitude } => {
                write!(f, "incompatible forcing: nonzero mean (|mean|={mean_magnitude:e})")
            }
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected} components, got {got}")
            }
            Error::MismatchedLattices => write!(f, "mismatched lattices"),
            Error::EmptyStencil { delta, h, layout } => {
                write!(f, "empty stencil: delta={delta} below minimum for {layout} layout (h={h})")
            }
            Error::LatticeTooCoarse { h, delta } => {
                write!(f, "lattice too coarse: h={h} exceeds horizon delta={delta}")
            }
            Error::HorizonExceedsCell { delta } => {
                write!(f, "horizon delta={delta} must be smaller than pi for the periodic cell")
            }
            Error::InvalidConfig(problems) => {
                write!(f, "invalid config ({} problems): {}", problems.len(), problems.join("; "))
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
