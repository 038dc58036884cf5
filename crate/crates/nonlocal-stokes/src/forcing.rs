//! Forcing construction: manufactured cases, explicit mode lists, and
//! seeded random band-limited fields.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::spectral::{PeriodicGrid, SpectralField};
use num_complex::Complex64;
use std::f64::consts::PI;

/// One explicit forcing mode: a lattice wavenumber and a complex amplitude
/// per component.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeAmplitude {
    pub mode: [i64; 3],
    pub amplitude: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingSpec {
    /// Forcing manufactured from u = (sin x cos y, -cos x sin y),
    /// p = sin x sin y: f = 2 nu u + (cos x sin y, sin x cos y). d = 2.
    TaylorGreen,
    /// Explicit coefficients; with `symmetrize` each entry also adds the
    /// conjugate coefficient at -xi so the field stays real-valued.
    /// Entries beyond the retained lattice are truncated away, which is
    /// exactly the projection the spectral method solves with.
    Modes { entries: Vec<ModeAmplitude>, symmetrize: bool },
    /// Conjugate-symmetric coefficients with uniform[-1,1) entries on all
    /// modes 0 < |xi|_inf <= band, drawn from SplitMix64(seed). The draw
    /// order runs over the band box, not the grid, so the same (seed, band)
    /// gives the same function at every resolution; modes the lattice does
    /// not retain are truncated away.
    RandomBandLimited { band: usize, seed: u64 },
}

/// Assemble the forcing coefficients for a grid. `nu` only enters the
/// manufactured Taylor-Green case.
pub fn build_forcing(spec: &ForcingSpec, grid: PeriodicGrid, nu: f64) -> Result<SpectralField> {
    match spec {
        ForcingSpec::TaylorGreen => taylor_green_forcing(grid, nu),
        ForcingSpec::Modes { entries, symmetrize } => {
            let mut f = SpectralField::vector(grid);
            for entry in entries {
                if entry.amplitude.len() != grid.dim {
                    return Err(Error::ShapeMismatch {
                        expected: grid.dim,
                        got: entry.amplitude.len(),
                    });
                }
                if PeriodicGrid::norm_sq(entry.mode) == 0 {
                    return Err(Error::IncompatibleForcing {
                        mean_magnitude: entry.amplitude.iter().map(|z| z.norm()).sum(),
                    });
                }
                if grid.index_of(entry.mode).is_none() {
                    continue;
                }
                for (c, amp) in entry.amplitude.iter().enumerate() {
                    let cur = f.coeff(entry.mode, c);
                    f.set_coeff(entry.mode, c, cur + amp)?;
                    if *symmetrize {
                        let neg = [-entry.mode[0], -entry.mode[1], -entry.mode[2]];
                        let cur = f.coeff(neg, c);
                        f.set_coeff(neg, c, cur + amp.conj())?;
                    }
                }
            }
            Ok(f)
        }
        ForcingSpec::RandomBandLimited { band, seed } => {
            let mut rng = SplitMix64::new(*seed);
            let mut f = SpectralField::vector(grid);
            let b = *band as i64;
            let mut boxes: Vec<[i64; 3]> = Vec::new();
            match grid.dim {
                2 => {
                    for k1 in -b..=b {
                        for k2 in -b..=b {
                            boxes.push([k1, k2, 0]);
                        }
                    }
                }
                _ => {
                    for k1 in -b..=b {
                        for k2 in -b..=b {
                            for k3 in -b..=b {
                                boxes.push([k1, k2, k3]);
                            }
                        }
                    }
                }
            }
            for mode in boxes {
                if PeriodicGrid::norm_sq(mode) == 0 || !lexicographically_positive(mode) {
                    continue;
                }
                let neg = [-mode[0], -mode[1], -mode[2]];
                let retained = grid.index_of(mode).is_some();
                for c in 0..grid.dim {
                    let z = Complex64::new(rng.next_symmetric(), rng.next_symmetric());
                    if retained {
                        f.set_coeff(mode, c, z)?;
                        f.set_coeff(neg, c, z.conj())?;
                    }
                }
            }
            Ok(f)
        }
    }
}

fn lexicographically_positive(mode: [i64; 3]) -> bool {
    for c in mode {
        if c > 0 {
            return true;
        }
        if c < 0 {
            return false;
        }
    }
    false
}

/// The Taylor-Green forcing f = 2 nu (sin x cos y, -cos x sin y)
/// + (cos x sin y, sin x cos y), band-limited to |xi| = sqrt(2).
fn taylor_green_forcing(grid: PeriodicGrid, nu: f64) -> Result<SpectralField> {
    if grid.dim != 2 {
        return Err(Error::InvalidParameter("Taylor-Green forcing is two-dimensional".into()));
    }
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
    }
    let scale = (2.0 * PI).powi(2);
    let mut f = SpectralField::vector(grid);
    let i = Complex64::new(0.0, 1.0);
    // coefficients of e^(i xi . x) for the two trigonometric products:
    // sin x cos y -> -+ i/4, cos x sin y -> -+ i/4 with signs per quadrant
    let quadrants: [([i64; 3], f64, f64); 4] = [
        // (mode, sign of sin x cos y coeff / (-i/4), sign of cos x sin y coeff / (-i/4))
        ([1, 1, 0], 1.0, 1.0),
        ([1, -1, 0], 1.0, -1.0),
        ([-1, 1, 0], -1.0, 1.0),
        ([-1, -1, 0], -1.0, -1.0),
    ];
    for (mode, s_sc, s_cs) in quadrants {
        let sc = -i / 4.0 * s_sc; // sin x cos y
        let cs = -i / 4.0 * s_cs; // cos x sin y
        let f1 = (2.0 * nu * sc + cs) * scale;
        let f2 = (-2.0 * nu * cs + sc) * scale;
        f.set_coeff(mode, 0, f1)?;
        f.set_coeff(mode, 1, f2)?;
    }
    Ok(f)
}

/// Exact Taylor-Green velocity and pressure coefficients:
/// u = (sin x cos y, -cos x sin y), p = sin x sin y.
pub fn taylor_green_solution(grid: PeriodicGrid) -> (SpectralField, SpectralField) {
    assert_eq!(grid.dim, 2, "Taylor-Green solution is two-dimensional");
    let scale = (2.0 * PI).powi(2);
    let i = Complex64::new(0.0, 1.0);
    let mut u = SpectralField::vector(grid);
    let mut p = SpectralField::scalar(grid);
    let quadrants: [([i64; 3], f64, f64, f64); 4] = [
        // (mode, sin x cos y sign, cos x sin y sign, sin x sin y coeff * 4)
        ([1, 1, 0], 1.0, 1.0, -1.0),
        ([1, -1, 0], 1.0, -1.0, 1.0),
        ([-1, 1, 0], -1.0, 1.0, 1.0),
        ([-1, -1, 0], -1.0, -1.0, -1.0),
    ];
    for (mode, s_sc, s_cs, p4) in quadrants {
        let sc = -i / 4.0 * s_sc;
        let cs = -i / 4.0 * s_cs;
        u.set_coeff(mode, 0, sc * scale).unwrap();
        u.set_coeff(mode, 1, -cs * scale).unwrap();
        p.set_coeff(mode, 0, Complex64::new(p4 / 4.0 * scale, 0.0)).unwrap();
    }
    (u, p)
}
