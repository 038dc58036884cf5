//! Nonlocal Stokes systems on the periodic torus: radial interaction
//! kernels and their admissibility, Fourier symbols of the nonlocal
//! diffusion/gradient/divergence operators, spectral solves of the
//! nonlocal, modified and local Stokes systems, convergence studies, and
//! real-space cross-checks.

pub mod cli;
pub mod converge;
pub mod csv;
pub mod error;
pub mod forcing;
pub mod grid1d;
pub mod kernel;
pub mod quadrature;
pub mod realspace;
pub mod rng;
pub mod spectral;
pub mod symbol;

pub use error::{Error, Result};
pub use kernel::{KernelRole, ProfileKind, RadialProfile, ScaledKernel};
pub use spectral::{
    KernelPair, PeriodicGrid, SpectralField, StokesProblem, StokesSolution, StokesVariant,
};
pub use symbol::{SymbolCache, SymbolTable};
