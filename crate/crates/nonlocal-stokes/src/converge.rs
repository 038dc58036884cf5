//! Convergence studies: horizon refinement against the local solution,
//! spectral refinement against a finer reference, and joint
//! (horizon, resolution) paths demonstrating asymptotic compatibility.

use crate::error::{Error, Result};
use crate::forcing::{build_forcing, ForcingSpec};
use crate::kernel::{normalize_profile, RadialProfile, ScaledKernel};
use crate::spectral::{
    build_variant_cache, field_norm, solve_stokes_with_cache, FieldNorm, KernelPair, PeriodicGrid,
    SpectralField, StokesProblem, StokesSolution, StokesVariant,
};
use crate::symbol::SymbolCache;
use rayon::prelude::*;

/// Refinement ladder of a rate study.
#[derive(Debug, Clone, PartialEq)]
pub enum Ladder {
    /// Horizon ladder at fixed resolution; reference is the local solve.
    Delta { deltas: Vec<f64>, modes_per_axis: usize },
    /// Resolution ladder at fixed horizon; reference is the same nonlocal
    /// problem solved at `modes_ref`.
    Spectral { modes: Vec<usize>, delta: f64, modes_ref: usize },
    /// Joint (delta, N) path; reference is the local solve at `modes_ref`.
    Path { rungs: Vec<(f64, usize)>, modes_ref: usize },
}

/// A rate study: problem template plus refinement ladder.
#[derive(Debug, Clone)]
pub struct RateStudy {
    pub forcing: ForcingSpec,
    pub viscosity: f64,
    pub diffusion: RadialProfile,
    pub gradient: RadialProfile,
    pub dim: usize,
    pub variant: StokesVariant,
    pub ladder: Ladder,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRung {
    pub delta: f64,
    pub modes_per_axis: usize,
    pub err_u_l2: f64,
    pub err_p_l2: f64,
    /// Velocity error in the energy norm of the rung's horizon; recorded,
    /// never thresholded.
    pub err_u_energy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub rungs: Vec<RateRung>,
    /// Observed order between rung k and k+1 (one fewer entry than rungs);
    /// missing when an error is nonpositive or at the 1e-14 floor.
    pub orders_u: Vec<Option<f64>>,
    pub orders_p: Vec<Option<f64>>,
    pub reference: String,
}

/// order_k = log(e_k / e_{k+1}) / log(ratio) for a uniform refinement
/// factor. Nonpositive errors and errors at the floating-point floor give
/// a missing order; increasing errors give a negative one.
pub fn observed_order(errors: &[f64], ratio: f64) -> Result<Vec<Option<f64>>> {
    if errors.len() < 2 {
        return Err(Error::InvalidParameter("observed_order needs at least 2 errors".into()));
    }
    if !(ratio.is_finite() && ratio > 0.0 && ratio != 1.0) {
        return Err(Error::InvalidParameter(format!("invalid refinement ratio {ratio}")));
    }
    Ok(errors.windows(2).map(|w| order_between(w[0], w[1], ratio)).collect())
}

fn order_between(e0: f64, e1: f64, ratio: f64) -> Option<f64> {
    const FLOOR: f64 = 1e-14;
    if e0 <= FLOOR || e1 <= FLOOR {
        return None;
    }
    Some((e0 / e1).ln() / ratio.ln())
}

fn orders_from_scales(errors: &[f64], scales: &[f64]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .zip(scales.windows(2))
        .map(|(e, s)| order_between(e[0], e[1], s[0] / s[1]))
        .collect()
}

/// L2 distance between two spectral fields, the coarser one extended by
/// zero onto the finer lattice.
pub fn field_difference_l2(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    if a.grid.dim != b.grid.dim || a.components != b.components {
        return Err(Error::MismatchedLattices);
    }
    let (coarse, fine) =
        if a.grid.modes_per_axis <= b.grid.modes_per_axis { (a, b) } else { (b, a) };
    let mut acc = 0.0;
    for i in 0..fine.grid.mode_count() {
        let mode = fine.grid.mode_at(i);
        for c in 0..fine.components {
            acc += (fine.get(i, c) - coarse.coeff(mode, c)).norm_sqr();
        }
    }
    Ok(((2.0 * std::f64::consts::PI).powi(-(fine.grid.dim as i32)) * acc).sqrt())
}

struct Prepared {
    diffusion: RadialProfile,
    gradient: RadialProfile,
}

impl RateStudy {
    fn prepare(&self) -> Result<Prepared> {
        Ok(Prepared {
            diffusion: normalize_profile(&self.diffusion, self.dim)?,
            gradient: normalize_profile(&self.gradient, self.dim)?,
        })
    }

    fn problem(
        &self,
        prep: &Prepared,
        delta: f64,
        modes: usize,
        variant: StokesVariant,
    ) -> Result<StokesProblem> {
        let grid = PeriodicGrid::new(self.dim, modes)?;
        let forcing = build_forcing(&self.forcing, grid, self.viscosity)?;
        let kernels = KernelPair::new(
            ScaledKernel::new(prep.diffusion, delta, self.dim)?,
            ScaledKernel::new(prep.gradient, delta, self.dim)?,
        )?;
        Ok(StokesProblem { forcing, viscosity: self.viscosity, kernels, variant })
    }
}

fn check_strictly_decreasing(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::InvalidParameter("empty refinement ladder".into()));
    }
    for w in deltas.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::InvalidParameter("horizon ladder must strictly decrease".into()));
        }
    }
    Ok(())
}

fn check_strictly_increasing(modes: &[usize]) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::InvalidParameter("empty refinement ladder".into()));
    }
    for w in modes.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter("resolution ladder must strictly increase".into()));
        }
    }
    Ok(())
}

/// Horizon refinement against the exact (band-limited) local solution on
/// the same lattice. Errors are L2; observed orders use the per-pair
/// horizon ratio.
pub fn delta_refinement_study(study: &RateStudy) -> Result<RateReport> {
    let (deltas, modes) = match &study.ladder {
        Ladder::Delta { deltas, modes_per_axis } => (deltas.clone(), *modes_per_axis),
        _ => return Err(Error::InvalidParameter("delta_refinement_study needs a Delta ladder".into())),
    };
    check_strictly_decreasing(&deltas)?;
    let prep = study.prepare()?;

    let local = study.problem(&prep, deltas[0], modes, StokesVariant::Local)?;
    let reference = solve_stokes_with_cache(&local, None)?;

    // rungs are independent jobs; aggregation stays ordered by rung index
    let rungs: Vec<RateRung> = deltas
        .par_iter()
        .map(|&delta| {
            let problem = study.problem(&prep, delta, modes, study.variant)?;
            let cache = build_variant_cache(&problem)?;
            let sol = solve_stokes_with_cache(&problem, cache.as_ref())?;
            Ok(RateRung {
                delta,
                modes_per_axis: modes,
                err_u_l2: field_difference_l2(&sol.velocity, &reference.velocity)?,
                err_p_l2: field_difference_l2(&sol.pressure, &reference.pressure)?,
                err_u_energy: energy_error(&sol, &reference, cache.as_ref()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let errs_u: Vec<f64> = rungs.iter().map(|r| r.err_u_l2).collect();
    let errs_p: Vec<f64> = rungs.iter().map(|r| r.err_p_l2).collect();
    Ok(RateReport {
        orders_u: orders_from_scales(&errs_u, &deltas),
        orders_p: orders_from_scales(&errs_p, &deltas),
        rungs,
        reference: format!("local spectral solve at N={modes}"),
    })
}

fn energy_error(
    sol: &StokesSolution,
    reference: &StokesSolution,
    cache: Option<&SymbolCache>,
) -> Option<f64> {
    // the modified variant caches no diffusion symbol
    let cache = cache.filter(|c| c.holds_lambda())?;
    let grid = sol.velocity.grid;
    let mut diff = SpectralField::vector(grid);
    for i in 0..grid.mode_count() {
        for c in 0..grid.dim {
            diff.set(i, c, sol.velocity.get(i, c) - reference.velocity.get(i, c));
        }
    }
    Some(field_norm(&diff, FieldNorm::SDelta(cache)))
}

/// Resolution refinement at fixed horizon against a reference solved on a
/// lattice at least twice as wide. Orders are with respect to 1/N.
pub fn spectral_refinement_study(study: &RateStudy) -> Result<RateReport> {
    let (modes, delta, modes_ref) = match &study.ladder {
        Ladder::Spectral { modes, delta, modes_ref } => (modes.clone(), *delta, *modes_ref),
        _ => {
            return Err(Error::InvalidParameter(
                "spectral_refinement_study needs a Spectral ladder".into(),
            ))
        }
    };
    check_strictly_increasing(&modes)?;
    let n_max = *modes.last().unwrap();
    if modes_ref < 2 * n_max {
        return Err(Error::InvalidParameter(format!(
            "reference resolution {modes_ref} must be at least twice the finest rung {n_max}"
        )));
    }
    let prep = study.prepare()?;

    let ref_problem = study.problem(&prep, delta, modes_ref, study.variant)?;
    let ref_cache = build_variant_cache(&ref_problem)?;
    let reference = solve_stokes_with_cache(&ref_problem, ref_cache.as_ref())?;

    // the reference cache covers the coarser lattices' norms read-only
    let rungs: Vec<RateRung> = modes
        .par_iter()
        .map(|&n| {
            let problem = study.problem(&prep, delta, n, study.variant)?;
            let sol = solve_stokes_with_cache(&problem, ref_cache.as_ref())?;
            Ok(RateRung {
                delta,
                modes_per_axis: n,
                err_u_l2: field_difference_l2(&sol.velocity, &reference.velocity)?,
                err_p_l2: field_difference_l2(&sol.pressure, &reference.pressure)?,
                err_u_energy: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let errs_u: Vec<f64> = rungs.iter().map(|r| r.err_u_l2).collect();
    let errs_p: Vec<f64> = rungs.iter().map(|r| r.err_p_l2).collect();
    let scales: Vec<f64> = modes.iter().map(|&n| 1.0 / n as f64).collect();
    Ok(RateReport {
        orders_u: orders_from_scales(&errs_u, &scales),
        orders_p: orders_from_scales(&errs_p, &scales),
        rungs,
        reference: format!("{} solve at N={modes_ref}, delta={delta}", study.variant.name()),
    })
}

/// Joint (delta, N) path against the exact local solution. Orders are with
/// respect to the horizon.
pub fn asymptotic_compatibility_study(study: &RateStudy) -> Result<RateReport> {
    let (rungs_spec, modes_ref) = match &study.ladder {
        Ladder::Path { rungs, modes_ref } => (rungs.clone(), *modes_ref),
        _ => {
            return Err(Error::InvalidParameter(
                "asymptotic_compatibility_study needs a Path ladder".into(),
            ))
        }
    };
    if rungs_spec.is_empty() {
        return Err(Error::InvalidParameter("empty refinement ladder".into()));
    }
    let prep = study.prepare()?;
    let local = study.problem(&prep, rungs_spec[0].0, modes_ref, StokesVariant::Local)?;
    let reference = solve_stokes_with_cache(&local, None)?;

    let rungs: Vec<RateRung> = rungs_spec
        .par_iter()
        .map(|&(delta, n)| {
            let problem = study.problem(&prep, delta, n, study.variant)?;
            let cache = build_variant_cache(&problem)?;
            let sol = solve_stokes_with_cache(&problem, cache.as_ref())?;
            Ok(RateRung {
                delta,
                modes_per_axis: n,
                err_u_l2: field_difference_l2(&sol.velocity, &reference.velocity)?,
                err_p_l2: field_difference_l2(&sol.pressure, &reference.pressure)?,
                err_u_energy: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let errs_u: Vec<f64> = rungs.iter().map(|r| r.err_u_l2).collect();
    let errs_p: Vec<f64> = rungs.iter().map(|r| r.err_p_l2).collect();
    let deltas: Vec<f64> = rungs_spec.iter().map(|&(d, _)| d).collect();
    Ok(RateReport {
        orders_u: orders_from_scales(&errs_u, &deltas),
        orders_p: orders_from_scales(&errs_p, &deltas),
        rungs,
        reference: format!("local spectral solve at N={modes_ref}"),
    })
}

/// Least-squares slope of log(error) against log(scale); the fitted rate
/// over a whole ladder.
pub fn fitted_order(errors: &[f64], scales: &[f64]) -> Option<f64> {
    if errors.len() != scales.len() || errors.len() < 2 {
        return None;
    }
    if errors.iter().any(|&e| e <= 0.0) || scales.iter().any(|&s| s <= 0.0) {
        return None;
    }
    let n = errors.len() as f64;
    let xs: Vec<f64> = scales.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}
