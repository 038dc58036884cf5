//! Spectral representation and solves on the periodic cell (-pi, pi)^d.
//!
//! Fields are mean-zero Fourier series
//!
//! ```text
//! u(x) = (2 pi)^-d  sum_{xi != 0}  u_hat(xi) e^(i xi . x)
//! ```
//!
//! truncated to the lattice |xi_k| <= N/2 - 1 (Nyquist rows are dropped so
//! every retained mode has its conjugate partner). The saddle-point system
//!
//! ```text
//! nu L u_hat + i b p_hat = f_hat,    i b^T u_hat = 0
//! ```
//!
//! diagonalizes per mode; with b parallel to xi the velocity is the
//! transverse part of the forcing over the momentum symbol and the
//! pressure the longitudinal part over b.

use crate::error::{Error, Result};
use crate::kernel::{KernelRole, ScaledKernel};

use crate::symbol::SymbolCache;
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Truncated integer wavenumber lattice for an N^d collocation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid {
    pub dim: usize,
    pub modes_per_axis: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, modes_per_axis: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if modes_per_axis < 4 || modes_per_axis % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "modes per axis must be an even integer >= 4, got {modes_per_axis}"
            )));
        }
        Ok(PeriodicGrid { dim, modes_per_axis })
    }

    /// Largest retained wavenumber per axis (Nyquist excluded).
    pub fn half_width(&self) -> i64 {
        self.modes_per_axis as i64 / 2 - 1
    }

    fn axis_len(&self) -> usize {
        2 * self.half_width() as usize + 1
    }

    pub fn mode_count(&self) -> usize {
        self.axis_len().pow(self.dim as u32)
    }

    pub fn index_of(&self, mode: [i64; 3]) -> Option<usize> {
        let m = self.half_width();
        let l = self.axis_len();
        let mut idx = 0usize;
        for k in 0..self.dim {
            if mode[k].abs() > m {
                return None;
            }
            idx = idx * l + (mode[k] + m) as usize;
        }
        if mode[self.dim..3].iter().any(|&c| c != 0) {
            return None;
        }
        Some(idx)
    }

    pub fn mode_at(&self, index: usize) -> [i64; 3] {
        let m = self.half_width();
        let l = self.axis_len();
        let mut mode = [0i64; 3];
        let mut rest = index;
        for k in (0..self.dim).rev() {
            mode[k] = (rest % l) as i64 - m;
            rest /= l;
        }
        mode
    }

    pub fn norm_sq(mode: [i64; 3]) -> u64 {
        mode.iter().map(|&c| (c * c) as u64).sum()
    }

    /// Sorted distinct squared norms of the retained lattice.
    pub fn distinct_norms_sq(&self) -> Vec<u64> {
        let mut v: Vec<u64> = (0..self.mode_count())
            .map(|i| Self::norm_sq(self.mode_at(i)))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Collocation spacing 2 pi / N.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.modes_per_axis as f64
    }

    pub fn point_count(&self) -> usize {
        self.modes_per_axis.pow(self.dim as u32)
    }

    /// Coordinates of collocation point j (lexicographic), in (-pi, pi).
    pub fn point_at(&self, index: usize) -> [f64; 3] {
        let n = self.modes_per_axis;
        let h = self.spacing();
        let mut x = [0.0; 3];
        let mut rest = index;
        for k in (0..self.dim).rev() {
            x[k] = -PI + (rest % n) as f64 * h;
            rest /= n;
        }
        x
    }
}

/// Mean-zero periodic field stored as complex coefficients on the retained
/// lattice; scalar (1 component) or vector (d components).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: PeriodicGrid,
    pub components: usize,
    data: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: PeriodicGrid, components: usize) -> Self {
        SpectralField { grid, components, data: vec![Complex64::ZERO; grid.mode_count() * components] }
    }

    pub fn scalar(grid: PeriodicGrid) -> Self {
        Self::zeros(grid, 1)
    }

    pub fn vector(grid: PeriodicGrid) -> Self {
        Self::zeros(grid, grid.dim)
    }

    #[inline]
    pub fn get(&self, mode_index: usize, component: usize) -> Complex64 {
        self.data[mode_index * self.components + component]
    }

    #[inline]
    pub fn set(&mut self, mode_index: usize, component: usize, value: Complex64) {
        self.data[mode_index * self.components + component] = value;
    }

    pub fn coeff(&self, mode: [i64; 3], component: usize) -> Complex64 {
        match self.grid.index_of(mode) {
            Some(i) => self.get(i, component),
            None => Complex64::ZERO,
        }
    }

    pub fn set_coeff(&mut self, mode: [i64; 3], component: usize, value: Complex64) -> Result<()> {
        match self.grid.index_of(mode) {
            Some(i) => {
                self.set(i, component, value);
                Ok(())
            }
            None => Err(Error::InvalidParameter(format!(
                "mode ({},{},{}) not retained on the lattice",
                mode[0], mode[1], mode[2]
            ))),
        }
    }

    /// Coefficient at the zero mode, per component.
    pub fn mean_coeff(&self) -> Vec<Complex64> {
        let zero = self.grid.index_of([0, 0, 0]).expect("zero mode always retained");
        (0..self.components).map(|c| self.get(zero, c)).collect()
    }

    /// Largest violation of conjugate symmetry u_hat(-xi) = conj(u_hat(xi)).
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.grid.mode_count() {
            let mode = self.grid.mode_at(i);
            let neg = [-mode[0], -mode[1], -mode[2]];
            let j = self.grid.index_of(neg).expect("lattice is symmetric");
            for c in 0..self.components {
                let defect = (self.get(j, c) - self.get(i, c).conj()).norm();
                worst = worst.max(defect);
            }
        }
        worst
    }

    /// Scale every coefficient (exact for powers of two).
    pub fn scaled(&self, factor: f64) -> SpectralField {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= factor;
        }
        out
    }

    /// Real-space samples at the N^d collocation points, point-major.
    /// Evaluated axis-by-axis, so the cost is O(N^(d+1)) rather than
    /// O(N^2d).
    pub fn collocation_values(&self) -> Vec<f64> {
        let grid = self.grid;
        let n = grid.modes_per_axis;
        let m = grid.half_width();
        let l = grid.axis_len();
        let d = grid.dim;
        let comps = self.components;
        // phase[j][k+m] = e^(i k x_j)
        let phase: Vec<Vec<Complex64>> = (0..n)
            .map(|j| {
                let x = -PI + j as f64 * grid.spacing();
                (-m..=m).map(|k| Complex64::from_polar(1.0, k as f64 * x)).collect()
            })
            .collect();
        // Iteratively contract the last mode axis against a point axis.
        // state starts as coefficients indexed by [mode_1..mode_d][comp]
        // and ends indexed by [x_1..x_d][comp].
        let mut state = self.data.clone();
        let mut mode_axes = d;
        let mut point_block = 1usize; // number of leading point indices
        for _ in 0..d {
            // state layout: [points(point_block)] x [modes(l^mode_axes)] x comps
            let modes_block = l.pow(mode_axes as u32 - 1);
            let mut next =
                vec![Complex64::ZERO; point_block * n * modes_block * comps];
            for p in 0..point_block {
                for j in 0..n {
                    for rest in 0..modes_block {
                        for c in 0..comps {
                            let mut acc = Complex64::ZERO;
                            for k in 0..l {
                                let src = ((p * l + k) * modes_block + rest) * comps + c;
                                acc += state[src] * phase[j][k];
                            }
                            let dst = ((p * n + j) * modes_block + rest) * comps + c;
                            next[dst] = acc;
                        }
                    }
                }
            }
            state = next;
            mode_axes -= 1;
            point_block *= n;
        }
        let scale = (2.0 * PI).powi(-(d as i32));
        state.iter().map(|z| z.re * scale).collect()
    }
}

/// Norm selector for spectral fields. The series convention makes the L2
/// norm ((2 pi)^-d sum |u_hat|^2)^(1/2), matching the L2(Omega) norm of
/// the represented field.
pub enum FieldNorm<'a> {
    L2,
    /// Homogeneous Sobolev weight |xi|^(2s) on mean-zero fields.
    Hs(f64),
    /// Energy weight lambda_delta(|xi|).
    SDelta(&'a SymbolCache),
}

pub fn field_norm(field: &SpectralField, norm: FieldNorm<'_>) -> f64 {
    let mut acc = 0.0;
    for i in 0..field.grid.mode_count() {
        let nsq = PeriodicGrid::norm_sq(field.grid.mode_at(i));
        if nsq == 0 {
            continue;
        }
        let w = match &norm {
            FieldNorm::L2 => 1.0,
            FieldNorm::Hs(s) => (nsq as f64).powf(*s),
            FieldNorm::SDelta(cache) => cache.lambda(nsq),
        };
        for c in 0..field.components {
            acc += w * field.get(i, c).norm_sqr();
        }
    }
    ((2.0 * PI).powi(-(field.grid.dim as i32)) * acc).sqrt()
}

/// Diffusion and gradient kernels sharing a horizon and dimension.
#[derive(Debug, Clone, Copy)]
pub struct KernelPair {
    pub diffusion: ScaledKernel,
    pub gradient: ScaledKernel,
}

impl KernelPair {
    pub fn new(diffusion: ScaledKernel, gradient: ScaledKernel) -> Result<Self> {
        if diffusion.profile.role != KernelRole::Diffusion
            || gradient.profile.role != KernelRole::Gradient
        {
            return Err(Error::InvalidParameter("kernel pair roles are swapped".into()));
        }
        if diffusion.dim != gradient.dim || diffusion.delta != gradient.delta {
            return Err(Error::InvalidParameter(
                "kernel pair must share dimension and horizon".into(),
            ));
        }
        Ok(KernelPair { diffusion, gradient })
    }

    pub fn delta(&self) -> f64 {
        self.diffusion.delta
    }

    pub fn dim(&self) -> usize {
        self.diffusion.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StokesVariant {
    /// Momentum symbol nu lambda_delta(|xi|).
    Nonlocal,
    /// Diffusion replaced by the gradient-divergence composition:
    /// momentum symbol nu b_delta(|xi|)^2.
    Modified,
    /// Classical symbols nu |xi|^2 and b = xi.
    Local,
}

impl StokesVariant {
    pub fn name(&self) -> &'static str {
        match self {
            StokesVariant::Nonlocal => "nonlocal",
            StokesVariant::Modified => "modified",
            StokesVariant::Local => "local",
        }
    }
}

/// A steady Stokes problem on the periodic cell.
#[derive(Debug, Clone)]
pub struct StokesProblem {
    pub forcing: SpectralField,
    pub viscosity: f64,
    pub kernels: KernelPair,
    pub variant: StokesVariant,
}

#[derive(Debug, Clone, Copy)]
pub struct StokesDiagnostics {
    /// max over modes of |nu lambda u_hat + i b p_hat - f_hat|.
    pub max_momentum_residual: f64,
    /// max over modes of |xi . u_hat|.
    pub max_divergence_local: f64,
    /// max over modes of |b(|xi|) (xi/|xi|) . u_hat|.
    pub max_divergence_nonlocal: f64,
    pub forcing_l2: f64,
    pub velocity_l2: f64,
    pub pressure_l2: f64,
}

#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub velocity: SpectralField,
    pub pressure: SpectralField,
    pub diagnostics: StokesDiagnostics,
}

/// Relative threshold below which the gradient symbol counts as vanishing
/// on a retained mode.
const ILL_POSED_REL: f64 = 1e-12;

/// Solve the Stokes system of the requested variant. Per retained mode
/// xi != 0, with e = xi/|xi| and the variant's momentum symbol nu s:
///
/// ```text
/// u_hat = (f_hat - e (e . f_hat)) / (nu s)
/// p_hat = -i (e . f_hat) / b
/// ```
pub fn solve_stokes(problem: &StokesProblem) -> Result<StokesSolution> {
    let cache = build_variant_cache(problem)?;
    solve_stokes_with_cache(problem, cache.as_ref())
}

/// Warm a symbol cache holding exactly what `problem.variant` needs on the
/// problem's lattice. Local solves need none.
pub fn build_variant_cache(problem: &StokesProblem) -> Result<Option<SymbolCache>> {
    let grid = problem.forcing.grid;
    let norms = grid.distinct_norms_sq();
    let d = grid.dim;
    match problem.variant {
        StokesVariant::Nonlocal => Ok(Some(SymbolCache::build(
            Some(&problem.kernels.diffusion),
            Some(&problem.kernels.gradient),
            d,
            problem.kernels.delta(),
            &norms,
        )?)),
        StokesVariant::Modified => Ok(Some(SymbolCache::build(
            None,
            Some(&problem.kernels.gradient),
            d,
            problem.kernels.delta(),
            &norms,
        )?)),
        StokesVariant::Local => Ok(None),
    }
}

/// Solve with a previously warmed cache; the cache must cover every
/// distinct |xi|^2 of the forcing lattice (a cache built on a finer
/// lattice of the same kernels works too).
pub fn solve_stokes_with_cache(
    problem: &StokesProblem,
    cache: Option<&SymbolCache>,
) -> Result<StokesSolution> {
    let f = &problem.forcing;
    let grid = f.grid;
    let d = grid.dim;
    if f.components != d {
        return Err(Error::ShapeMismatch { expected: d, got: f.components });
    }
    if !(problem.viscosity.is_finite() && problem.viscosity > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "viscosity must be positive, got {}",
            problem.viscosity
        )));
    }
    if problem.kernels.dim() != d {
        return Err(Error::InvalidParameter("kernel dimension does not match grid".into()));
    }
    if problem.variant != StokesVariant::Local && cache.is_none() {
        return Err(Error::InvalidParameter("nonlocal variants need a symbol cache".into()));
    }

    let forcing_l2 = field_norm(f, FieldNorm::L2);
    let mean: f64 = f.mean_coeff().iter().map(|z| z.norm()).sum();
    if mean > 1e-12 * forcing_l2.max(1e-300) {
        return Err(Error::IncompatibleForcing { mean_magnitude: mean });
    }

    // Well-posedness audit up front: the gradient symbol must stay away
    // from zero on every retained norm.
    if let Some(cache) = cache {
        for &nsq in &grid.distinct_norms_sq() {
            if nsq == 0 {
                continue;
            }
            let xi = (nsq as f64).sqrt();
            let b = cache.b(nsq);
            if b.abs() < ILL_POSED_REL * xi {
                let mode = (0..grid.mode_count())
                    .map(|i| grid.mode_at(i))
                    .find(|&m| PeriodicGrid::norm_sq(m) == nsq)
                    .unwrap_or([0, 0, 0]);
                return Err(Error::IllPosedKernel { mode, b, xi });
            }
        }
    }

    let symbols = |nsq: u64| -> (f64, f64) {
        let xi = (nsq as f64).sqrt();
        match problem.variant {
            StokesVariant::Nonlocal => {
                let c = cache.unwrap();
                (c.lambda(nsq), c.b(nsq))
            }
            StokesVariant::Modified => {
                let b = cache.unwrap().b(nsq);
                (b * b, b)
            }
            StokesVariant::Local => (nsq as f64, xi),
        }
    };

    solve_with_symbols(f, problem.viscosity, forcing_l2, &symbols)
}

/// Mode-wise solve shared by every variant; `symbols` maps |xi|^2 to the
/// pair (momentum symbol without viscosity, gradient symbol).
pub(crate) fn solve_with_symbols(
    f: &SpectralField,
    nu: f64,
    forcing_l2: f64,
    symbols: &(dyn Fn(u64) -> (f64, f64) + Sync),
) -> Result<StokesSolution> {
    let grid = f.grid;
    let d = grid.dim;
    let rows: Vec<(Vec<Complex64>, Complex64, f64, f64, f64)> = (0..grid.mode_count())
        .into_par_iter()
        .map(|i| {
            let mode = grid.mode_at(i);
            let nsq = PeriodicGrid::norm_sq(mode);
            if nsq == 0 {
                return (vec![Complex64::ZERO; d], Complex64::ZERO, 0.0, 0.0, 0.0);
            }
            let (s, b) = symbols(nsq);
            let xi_norm = (nsq as f64).sqrt();
            let e: Vec<f64> = (0..d).map(|c| mode[c] as f64 / xi_norm).collect();
            let fh: Vec<Complex64> = (0..d).map(|c| f.get(i, c)).collect();
            let ef: Complex64 = e.iter().zip(&fh).map(|(&ec, &fc)| ec * fc).sum();
            let denom = nu * s;
            let u: Vec<Complex64> = (0..d).map(|c| (fh[c] - e[c] * ef) / denom).collect();
            let p = Complex64::new(0.0, -1.0) * ef / b;
            // residual of nu s u + i b e p - f, maximum component magnitude
            let mut res = 0.0f64;
            for c in 0..d {
                let r = denom * u[c] + Complex64::new(0.0, 1.0) * b * e[c] * p - fh[c];
                res = res.max(r.norm());
            }
            let eu: Complex64 = e.iter().zip(&u).map(|(&ec, &uc)| ec * uc).sum();
            let div_local = (xi_norm * eu).norm();
            let div_nonlocal = (b * eu).norm();
            (u, p, res, div_local, div_nonlocal)
        })
        .collect();

    let mut velocity = SpectralField::vector(grid);
    let mut pressure = SpectralField::scalar(grid);
    let mut max_res = 0.0f64;
    let mut max_div_local = 0.0f64;
    let mut max_div_nonlocal = 0.0f64;
    for (i, (u, p, res, dl, dn)) in rows.into_iter().enumerate() {
        for (c, uc) in u.into_iter().enumerate() {
            velocity.set(i, c, uc);
        }
        pressure.set(i, 0, p);
        max_res = max_res.max(res);
        max_div_local = max_div_local.max(dl);
        max_div_nonlocal = max_div_nonlocal.max(dn);
    }
    let velocity_l2 = field_norm(&velocity, FieldNorm::L2);
    let pressure_l2 = field_norm(&pressure, FieldNorm::L2);
    Ok(StokesSolution {
        velocity,
        pressure,
        diagnostics: StokesDiagnostics {
            max_momentum_residual: max_res,
            max_divergence_local: max_div_local,
            max_divergence_nonlocal: max_div_nonlocal,
            forcing_l2,
            velocity_l2,
            pressure_l2,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlocalOp {
    Diffusion,
    Gradient,
    Divergence,
}

/// Apply a nonlocal operator through its Fourier symbol:
/// diffusion multiplies by -lambda, gradient by i b xi/|xi| (scalar to
/// vector), divergence by i b (xi/|xi|)^T (vector to scalar).
pub fn apply_operator(
    op: NonlocalOp,
    field: &SpectralField,
    cache: &SymbolCache,
) -> Result<SpectralField> {
    let grid = field.grid;
    let d = grid.dim;
    match op {
        NonlocalOp::Diffusion => {
            let mut out = field.clone();
            for i in 0..grid.mode_count() {
                let nsq = PeriodicGrid::norm_sq(grid.mode_at(i));
                let lam = if nsq == 0 { 0.0 } else { cache.lambda(nsq) };
                for c in 0..field.components {
                    out.set(i, c, -lam * field.get(i, c));
                }
            }
            Ok(out)
        }
        NonlocalOp::Gradient => {
            if field.components != 1 {
                return Err(Error::ShapeMismatch { expected: 1, got: field.components });
            }
            let mut out = SpectralField::vector(grid);
            for i in 0..grid.mode_count() {
                let mode = grid.mode_at(i);
                let nsq = PeriodicGrid::norm_sq(mode);
                if nsq == 0 {
                    continue;
                }
                let xi_norm = (nsq as f64).sqrt();
                let ib = Complex64::new(0.0, cache.b(nsq));
                for c in 0..d {
                    out.set(i, c, ib * (mode[c] as f64 / xi_norm) * field.get(i, 0));
                }
            }
            Ok(out)
        }
        NonlocalOp::Divergence => {
            if field.components != d {
                return Err(Error::ShapeMismatch { expected: d, got: field.components });
            }
            let mut out = SpectralField::scalar(grid);
            for i in 0..grid.mode_count() {
                let mode = grid.mode_at(i);
                let nsq = PeriodicGrid::norm_sq(mode);
                if nsq == 0 {
                    continue;
                }
                let xi_norm = (nsq as f64).sqrt();
                let mut acc = Complex64::ZERO;
                for c in 0..d {
                    acc += (mode[c] as f64 / xi_norm) * field.get(i, c);
                }
                out.set(i, 0, Complex64::new(0.0, cache.b(nsq)) * acc);
            }
            Ok(out)
        }
    }
}

/// Invert the composed gradient-divergence Laplacian: p_hat = g_hat / b^2.
pub fn solve_pressure_poisson(
    rhs: &SpectralField,
    gradient: &ScaledKernel,
) -> Result<SpectralField> {
    if rhs.components != 1 {
        return Err(Error::ShapeMismatch { expected: 1, got: rhs.components });
    }
    let grid = rhs.grid;
    let mean = rhs.mean_coeff()[0].norm();
    let scale = field_norm(rhs, FieldNorm::L2).max(1e-300);
    if mean > 1e-12 * scale {
        return Err(Error::IncompatibleForcing { mean_magnitude: mean });
    }
    let cache = SymbolCache::build(
        None,
        Some(gradient),
        grid.dim,
        gradient.delta,
        &grid.distinct_norms_sq(),
    )?;
    let mut out = SpectralField::scalar(grid);
    for i in 0..grid.mode_count() {
        let mode = grid.mode_at(i);
        let nsq = PeriodicGrid::norm_sq(mode);
        if nsq == 0 {
            continue;
        }
        let b = cache.b(nsq);
        if b.abs() < ILL_POSED_REL * (nsq as f64).sqrt() {
            return Err(Error::IllPosedPressureOperator { mode, b });
        }
        out.set(i, 0, rhs.get(i, 0) / (b * b));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct DivergenceAudit {
    pub max_local: f64,
    pub max_nonlocal: f64,
}

/// Largest local (|xi . u_hat|) and nonlocal (|b (xi/|xi|) . u_hat|)
/// divergence coefficients of a vector field.
pub fn divergence_audit(u: &SpectralField, gradient: &ScaledKernel) -> Result<DivergenceAudit> {
    let cache = SymbolCache::build(
        None,
        Some(gradient),
        u.grid.dim,
        gradient.delta,
        &u.grid.distinct_norms_sq(),
    )?;
    let pairs = mode_divergences(u, &cache)?;
    let mut audit = DivergenceAudit { max_local: 0.0, max_nonlocal: 0.0 };
    for (_, dl, dn) in pairs {
        audit.max_local = audit.max_local.max(dl);
        audit.max_nonlocal = audit.max_nonlocal.max(dn);
    }
    Ok(audit)
}

/// Per-mode local and nonlocal divergence magnitudes.
pub fn mode_divergences(
    u: &SpectralField,
    cache: &SymbolCache,
) -> Result<Vec<(usize, f64, f64)>> {
    let grid = u.grid;
    let d = grid.dim;
    if u.components != d {
        return Err(Error::ShapeMismatch { expected: d, got: u.components });
    }
    let mut out = Vec::with_capacity(grid.mode_count());
    for i in 0..grid.mode_count() {
        let mode = grid.mode_at(i);
        let nsq = PeriodicGrid::norm_sq(mode);
        if nsq == 0 {
            out.push((i, 0.0, 0.0));
            continue;
        }
        let xi_norm = (nsq as f64).sqrt();
        let mut eu = Complex64::ZERO;
        for c in 0..d {
            eu += (mode[c] as f64 / xi_norm) * u.get(i, c);
        }
        out.push((i, (xi_norm * eu).norm(), (cache.b(nsq) * eu).norm()));
    }
    Ok(out)
}

/// Remove the longitudinal part of every mode, leaving a field that is
/// divergence-free in both the local and nonlocal sense.
pub fn leray_projection(u: &SpectralField) -> Result<SpectralField> {
    let grid = u.grid;
    let d = grid.dim;
    if u.components != d {
        return Err(Error::ShapeMismatch { expected: d, got: u.components });
    }
    let mut out = u.clone();
    for i in 0..grid.mode_count() {
        let mode = grid.mode_at(i);
        let nsq = PeriodicGrid::norm_sq(mode);
        if nsq == 0 {
            continue;
        }
        let xi_norm = (nsq as f64).sqrt();
        let e: Vec<f64> = (0..d).map(|c| mode[c] as f64 / xi_norm).collect();
        let mut eu = Complex64::ZERO;
        for c in 0..d {
            eu += e[c] * u.get(i, c);
        }
        for c in 0..d {
            out.set(i, c, u.get(i, c) - e[c] * eu);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{build_forcing, taylor_green_solution, ForcingSpec};
    use crate::kernel::{normalize_profile, ProfileKind, RadialProfile};
    use crate::rng::SplitMix64;

    fn admissible_pair(d: usize, delta: f64) -> KernelPair {
        let diff = RadialProfile::new(ProfileKind::Constant, 1.0, KernelRole::Diffusion).unwrap();
        let diff = normalize_profile(&diff, d).unwrap();
        let grad =
            RadialProfile::new(ProfileKind::Fractional { beta: 0.5 }, 1.0, KernelRole::Gradient)
                .unwrap();
        let grad = normalize_profile(&grad, d).unwrap();
        KernelPair::new(
            ScaledKernel::new(diff, delta, d).unwrap(),
            ScaledKernel::new(grad, delta, d).unwrap(),
        )
        .unwrap()
    }

    fn single_mode_forcing(grid: PeriodicGrid, mode: [i64; 3], amp: [f64; 2]) -> SpectralField {
        let mut f = SpectralField::vector(grid);
        f.set_coeff(mode, 0, Complex64::new(amp[0], 0.0)).unwrap();
        f.set_coeff(mode, 1, Complex64::new(amp[1], 0.0)).unwrap();
        f
    }

    #[test]
    fn grid_indexing_roundtrip() {
        let grid = PeriodicGrid::new(3, 8).unwrap();
        assert_eq!(grid.half_width(), 3);
        assert_eq!(grid.mode_count(), 343);
        for i in 0..grid.mode_count() {
            let m = grid.mode_at(i);
            assert_eq!(grid.index_of(m), Some(i));
        }
        assert_eq!(grid.index_of([4, 0, 0]), None);
        let grid2 = PeriodicGrid::new(2, 6).unwrap();
        assert_eq!(grid2.index_of([0, 0, 1]), None);
        assert!(PeriodicGrid::new(2, 7).is_err());
        assert!(PeriodicGrid::new(2, 2).is_err());
    }

    #[test]
    fn transverse_single_mode() {
        // f perpendicular to xi: projector leaves it intact, pressure zero.
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let kernels = admissible_pair(2, 0.5);
        let f = single_mode_forcing(grid, [1, 0, 0], [0.0, 1.0]);
        let sol = solve_stokes(&StokesProblem {
            forcing: f,
            viscosity: 1.0,
            kernels,
            variant: StokesVariant::Nonlocal,
        })
        .unwrap();
        let lam = crate::symbol::diffusion_symbol(&kernels.diffusion, 1.0).unwrap();
        let u1 = sol.velocity.coeff([1, 0, 0], 1);
        assert!((u1.re - 1.0 / lam).abs() < 1e-12 && u1.im.abs() < 1e-15);
        assert_eq!(sol.velocity.coeff([1, 0, 0], 0), Complex64::ZERO);
        assert_eq!(sol.pressure.coeff([1, 0, 0], 0), Complex64::ZERO);
    }

    #[test]
    fn longitudinal_single_mode() {
        // f parallel to xi: velocity vanishes, pressure picks up -i/b.
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let kernels = admissible_pair(2, 0.5);
        let f = single_mode_forcing(grid, [1, 0, 0], [1.0, 0.0]);
        let sol = solve_stokes(&StokesProblem {
            forcing: f,
            viscosity: 1.0,
            kernels,
            variant: StokesVariant::Nonlocal,
        })
        .unwrap();
        let b = crate::symbol::gradient_symbol(&kernels.gradient, 1.0).unwrap();
        assert!(sol.velocity.coeff([1, 0, 0], 0).norm() < 1e-15);
        assert!(sol.velocity.coeff([1, 0, 0], 1).norm() < 1e-15);
        let p = sol.pressure.coeff([1, 0, 0], 0);
        assert!((p - Complex64::new(0.0, -1.0 / b)).norm() < 1e-12, "{p}");
    }

    #[test]
    fn taylor_green_local_solve_is_exact() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let nu = 1.7;
        let f = build_forcing(&ForcingSpec::TaylorGreen, grid, nu).unwrap();
        let kernels = admissible_pair(2, 0.3);
        let sol = solve_stokes(&StokesProblem {
            forcing: f,
            viscosity: nu,
            kernels,
            variant: StokesVariant::Local,
        })
        .unwrap();
        let (u_exact, p_exact) = taylor_green_solution(grid);
        for i in 0..grid.mode_count() {
            for c in 0..2 {
                assert!((sol.velocity.get(i, c) - u_exact.get(i, c)).norm() < 1e-12);
            }
            assert!((sol.pressure.get(i, 0) - p_exact.get(i, 0)).norm() < 1e-12);
        }
    }

    #[test]
    fn residuals_and_divergence_within_contract() {
        let grid = PeriodicGrid::new(2, 16).unwrap();
        let kernels = admissible_pair(2, 0.4);
        let f = build_forcing(
            &ForcingSpec::RandomBandLimited { band: 6, seed: 99 },
            grid,
            1.0,
        )
        .unwrap();
        for variant in [StokesVariant::Nonlocal, StokesVariant::Modified, StokesVariant::Local] {
            let sol = solve_stokes(&StokesProblem {
                forcing: f.clone(),
                viscosity: 0.7,
                kernels,
                variant,
            })
            .unwrap();
            let d = sol.diagnostics;
            assert!(d.max_momentum_residual <= 1e-11 * d.forcing_l2, "{variant:?}");
            assert!(d.max_divergence_local <= 1e-11 * d.velocity_l2, "{variant:?}");
            assert!(d.max_divergence_nonlocal <= 1e-11 * d.velocity_l2, "{variant:?}");
        }
    }

    #[test]
    fn real_forcing_gives_real_solution() {
        let grid = PeriodicGrid::new(2, 12).unwrap();
        let kernels = admissible_pair(2, 0.4);
        let f = build_forcing(
            &ForcingSpec::RandomBandLimited { band: 4, seed: 3 },
            grid,
            1.0,
        )
        .unwrap();
        assert!(f.conjugate_symmetry_defect() == 0.0);
        let sol = solve_stokes(&StokesProblem {
            forcing: f,
            viscosity: 1.0,
            kernels,
            variant: StokesVariant::Nonlocal,
        })
        .unwrap();
        assert!(sol.velocity.conjugate_symmetry_defect() < 1e-14);
        assert!(sol.pressure.conjugate_symmetry_defect() < 1e-14);
    }

    #[test]
    fn local_variant_equals_injected_classical_symbols() {
        let grid = PeriodicGrid::new(2, 10).unwrap();
        let kernels = admissible_pair(2, 0.4);
        let f = build_forcing(
            &ForcingSpec::RandomBandLimited { band: 4, seed: 11 },
            grid,
            1.0,
        )
        .unwrap();
        let local = solve_stokes(&StokesProblem {
            forcing: f.clone(),
            viscosity: 2.0,
            kernels,
            variant: StokesVariant::Local,
        })
        .unwrap();
        let forcing_l2 = field_norm(&f, FieldNorm::L2);
        let injected = solve_with_symbols(&f, 2.0, forcing_l2, &|nsq| {
            (nsq as f64, (nsq as f64).sqrt())
        })
        .unwrap();
        for i in 0..grid.mode_count() {
            for c in 0..2 {
                assert_eq!(
                    local.velocity.get(i, c).re.to_bits(),
                    injected.velocity.get(i, c).re.to_bits()
                );
                assert_eq!(
                    local.velocity.get(i, c).im.to_bits(),
                    injected.velocity.get(i, c).im.to_bits()
                );
            }
            assert_eq!(
                local.pressure.get(i, 0).re.to_bits(),
                injected.pressure.get(i, 0).re.to_bits()
            );
        }
    }

    #[test]
    fn ill_posed_kernel_detected_on_a_retained_mode() {
        // beta = -2 in d = 2 is the constant shape, whose gradient symbol
        // crosses zero near 5.884; pick the horizon so the crossing lands
        // exactly on the retained norm |xi| = 5.
        let profile =
            RadialProfile::new(ProfileKind::Fractional { beta: -2.0 }, 1.0, KernelRole::Gradient)
                .unwrap();
        let profile = normalize_profile(&profile, 2).unwrap();
        let unit = ScaledKernel::new(profile, 1.0, 2).unwrap();
        let mut lo = 5.88;
        let mut hi = 5.89;
        assert!(crate::symbol::gradient_symbol(&unit, lo).unwrap() > 0.0);
        assert!(crate::symbol::gradient_symbol(&unit, hi).unwrap() < 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if crate::symbol::gradient_symbol(&unit, mid).unwrap() > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let zero = 0.5 * (lo + hi);
        let delta = zero / 5.0;
        let diff = RadialProfile::new(ProfileKind::Constant, 1.0, KernelRole::Diffusion).unwrap();
        let diff = normalize_profile(&diff, 2).unwrap();
        let kernels = KernelPair::new(
            ScaledKernel::new(diff, delta, 2).unwrap(),
            ScaledKernel::new(profile, delta, 2).unwrap(),
        )
        .unwrap();
        let grid = PeriodicGrid::new(2, 16).unwrap();
        let f = single_mode_forcing(grid, [1, 0, 0], [0.0, 1.0]);
        let err = solve_stokes(&StokesProblem {
            forcing: f,
            viscosity: 1.0,
            kernels,
            variant: StokesVariant::Nonlocal,
        })
        .unwrap_err();
        match err {
            Error::IllPosedKernel { xi, b, .. } => {
                assert!((xi - 5.0).abs() < 1e-12);
                assert!(b.abs() < 1e-12 * 5.0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn incompatible_forcing_rejected() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let kernels = admissible_pair(2, 0.4);
        let mut f = SpectralField::vector(grid);
        f.set_coeff([0, 0, 0], 0, Complex64::new(1.0, 0.0)).unwrap();
        let err = solve_stokes(&StokesProblem {
            forcing: f,
            viscosity: 1.0,
            kernels,
            variant: StokesVariant::Local,
        })
        .unwrap_err();
        assert!(matches!(err, Error::IncompatibleForcing { .. }));
    }

    #[test]
    fn solution_scales_exactly_with_forcing() {
        let grid = PeriodicGrid::new(2, 12).unwrap();
        let kernels = admissible_pair(2, 0.3);
        let f = build_forcing(
            &ForcingSpec::RandomBandLimited { band: 5, seed: 8 },
            grid,
            1.0,
        )
        .unwrap();
        let s1 = solve_stokes(&StokesProblem {
            forcing: f.clone(),
            viscosity: 1.0,
            kernels,
            variant: StokesVariant::Nonlocal,
        })
        .unwrap();
        let s2 = solve_stokes(&StokesProblem {
            forcing: f.scaled(2.0),
            viscosity: 1.0,
            kernels,
            variant: StokesVariant::Nonlocal,
        })
        .unwrap();
        for i in 0..grid.mode_count() {
            for c in 0..2 {
                let a = s1.velocity.get(i, c) * 2.0;
                let b = s2.velocity.get(i, c);
                assert_eq!(a.re.to_bits(), b.re.to_bits());
                assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }

    #[test]
    fn adjoint_pairing_vanishes_modewise() {
        // <u_hat, i b p_hat> + <i b^T u_hat, p_hat> = 0 per mode.
        let grid = PeriodicGrid::new(2, 12).unwrap();
        let kernels = admissible_pair(2, 0.4);
        let cache = SymbolCache::build(
            None,
            Some(&kernels.gradient),
            2,
            0.4,
            &grid.distinct_norms_sq(),
        )
        .unwrap();
        let mut rng = SplitMix64::new(17);
        let mut u = SpectralField::vector(grid);
        let mut p = SpectralField::scalar(grid);
        for i in 0..grid.mode_count() {
            if PeriodicGrid::norm_sq(grid.mode_at(i)) == 0 {
                continue;
            }
            for c in 0..2 {
                u.set(i, c, Complex64::new(rng.next_symmetric(), rng.next_symmetric()));
            }
            p.set(i, 0, Complex64::new(rng.next_symmetric(), rng.next_symmetric()));
        }
        for i in 0..grid.mode_count() {
            let mode = grid.mode_at(i);
            let nsq = PeriodicGrid::norm_sq(mode);
            if nsq == 0 {
                continue;
            }
            let xi_norm = (nsq as f64).sqrt();
            let b = cache.b(nsq);
            let bvec = [b * mode[0] as f64 / xi_norm, b * mode[1] as f64 / xi_norm];
            let ph = p.get(i, 0);
            let mut lhs = Complex64::ZERO;
            let mut bu = Complex64::ZERO;
            for c in 0..2 {
                let gp = Complex64::new(0.0, 1.0) * bvec[c] * ph;
                lhs += u.get(i, c) * gp.conj();
                bu += bvec[c] * u.get(i, c);
            }
            let rhs = (Complex64::new(0.0, 1.0) * bu) * ph.conj();
            let scale = ph.norm().max(1.0);
            assert!((lhs + rhs).norm() <= 1e-14 * scale, "mode {mode:?}");
        }
    }

    #[test]
    fn operator_symbol_actions() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let kernels = admissible_pair(2, 0.5);
        let cache = SymbolCache::build(
            Some(&kernels.diffusion),
            Some(&kernels.gradient),
            2,
            0.5,
            &grid.distinct_norms_sq(),
        )
        .unwrap();
        // gradient of a plane wave
        let mut p = SpectralField::scalar(grid);
        p.set_coeff([2, 1, 0], 0, Complex64::new(1.0, 0.0)).unwrap();
        let g = apply_operator(NonlocalOp::Gradient, &p, &cache).unwrap();
        let nsq = 5u64;
        let b = cache.b(nsq);
        let e = [2.0 / (5.0f64).sqrt(), 1.0 / (5.0f64).sqrt()];
        for c in 0..2 {
            let expect = Complex64::new(0.0, b * e[c]);
            assert!((g.coeff([2, 1, 0], c) - expect).norm() < 1e-15);
        }
        // divergence of a transverse mode vanishes
        let mut u = SpectralField::vector(grid);
        u.set_coeff([1, 0, 0], 1, Complex64::new(3.0, -2.0)).unwrap();
        let div = apply_operator(NonlocalOp::Divergence, &u, &cache).unwrap();
        assert_eq!(div.coeff([1, 0, 0], 0), Complex64::ZERO);
        // diffusion of the zero field is zero
        let z = SpectralField::vector(grid);
        let lz = apply_operator(NonlocalOp::Diffusion, &z, &cache).unwrap();
        assert!(lz.data.iter().all(|v| *v == Complex64::ZERO));
        // shape mismatches rejected
        assert!(apply_operator(NonlocalOp::Gradient, &u, &cache).is_err());
        assert!(apply_operator(NonlocalOp::Divergence, &p, &cache).is_err());
    }

    #[test]
    fn pressure_poisson_inverts_composition() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let kernels = admissible_pair(2, 0.5);
        let mut g = SpectralField::scalar(grid);
        g.set_coeff([2, -1, 0], 0, Complex64::new(0.3, 0.7)).unwrap();
        g.set_coeff([-2, 1, 0], 0, Complex64::new(0.3, -0.7)).unwrap();
        let p = solve_pressure_poisson(&g, &kernels.gradient).unwrap();
        let cache = SymbolCache::build(
            None,
            Some(&kernels.gradient),
            2,
            0.5,
            &grid.distinct_norms_sq(),
        )
        .unwrap();
        let b = cache.b(5);
        assert!((p.coeff([2, -1, 0], 0) - Complex64::new(0.3, 0.7) / (b * b)).norm() < 1e-14);
        // minus divergence of gradient returns the data
        let grad = apply_operator(NonlocalOp::Gradient, &p, &cache).unwrap();
        let div = apply_operator(NonlocalOp::Divergence, &grad, &cache).unwrap();
        let recovered = div.scaled(-1.0);
        assert!((recovered.coeff([2, -1, 0], 0) - g.coeff([2, -1, 0], 0)).norm() < 1e-13);

        // nonzero-mean data rejected
        let mut bad = SpectralField::scalar(grid);
        bad.set_coeff([0, 0, 0], 0, Complex64::new(1.0, 0.0)).unwrap();
        assert!(solve_pressure_poisson(&bad, &kernels.gradient).is_err());
    }

    #[test]
    fn pressure_poisson_local_consistency_at_small_delta() {
        // |1/b(1)^2 - 1| = O(delta^2) at delta = 1e-2.
        let kernels = admissible_pair(2, 1e-2);
        let b = crate::symbol::gradient_symbol(&kernels.gradient, 1.0).unwrap();
        assert!((1.0 / (b * b) - 1.0).abs() <= 2e-3, "{}", 1.0 / (b * b) - 1.0);
    }

    #[test]
    fn norm_conventions() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let mut u = SpectralField::scalar(grid);
        u.set_coeff([3, 1, 0], 0, Complex64::new(1.0, 0.0)).unwrap();
        u.set_coeff([-3, -1, 0], 0, Complex64::new(1.0, 0.0)).unwrap();
        let l2 = field_norm(&u, FieldNorm::L2);
        let expect = (2.0 * (2.0 * PI).powi(-2)).sqrt();
        assert!((l2 - expect).abs() < 1e-15);
        // H^0 equals L2
        let h0 = field_norm(&u, FieldNorm::Hs(0.0));
        assert_eq!(l2.to_bits(), h0.to_bits());
        // S_delta norm of a single-|xi| field is sqrt(lambda) times L2
        let kernels = admissible_pair(2, 0.5);
        let cache = SymbolCache::build(
            Some(&kernels.diffusion),
            None,
            2,
            0.5,
            &grid.distinct_norms_sq(),
        )
        .unwrap();
        let sd = field_norm(&u, FieldNorm::SDelta(&cache));
        assert!((sd - cache.lambda(10).sqrt() * l2).abs() < 1e-14);
    }

    #[test]
    fn divergence_zero_sets_coincide() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let kernels = admissible_pair(2, 0.4);
        let cache = SymbolCache::build(
            None,
            Some(&kernels.gradient),
            2,
            0.4,
            &grid.distinct_norms_sq(),
        )
        .unwrap();
        let mut rng = SplitMix64::new(5);
        let mut u = SpectralField::vector(grid);
        for i in 0..grid.mode_count() {
            if PeriodicGrid::norm_sq(grid.mode_at(i)) == 0 {
                continue;
            }
            for c in 0..2 {
                u.set(i, c, Complex64::new(rng.next_symmetric(), rng.next_symmetric()));
            }
        }
        let norm = field_norm(&u, FieldNorm::L2);
        let tol = 1e-12 * norm;
        let raw = mode_divergences(&u, &cache).unwrap();
        for (_, dl, dn) in &raw {
            assert_eq!(*dl <= tol, *dn <= tol);
        }
        let projected = leray_projection(&u).unwrap();
        let proj = mode_divergences(&projected, &cache).unwrap();
        for (_, dl, dn) in &proj {
            assert!(*dl <= tol && *dn <= tol);
        }
        // a pure gradient field has strictly positive divergence both ways
        let mut p = SpectralField::scalar(grid);
        p.set_coeff([1, 2, 0], 0, Complex64::new(1.0, 0.0)).unwrap();
        let g = apply_operator(NonlocalOp::Gradient, &p, &cache).unwrap();
        let gd = mode_divergences(&g, &cache).unwrap();
        let idx = grid.index_of([1, 2, 0]).unwrap();
        assert!(gd[idx].1 > 0.0 && gd[idx].2 > 0.0);
    }

    #[test]
    fn collocation_sampling_matches_closed_form() {
        let grid = PeriodicGrid::new(2, 8).unwrap();
        let (u, _) = taylor_green_solution(grid);
        let vals = u.collocation_values();
        for j in 0..grid.point_count() {
            let x = grid.point_at(j);
            let expect = [x[0].sin() * x[1].cos(), -x[0].cos() * x[1].sin()];
            for c in 0..2 {
                assert!(
                    (vals[j * 2 + c] - expect[c]).abs() < 1e-13,
                    "point {x:?} comp {c}: {} vs {}",
                    vals[j * 2 + c],
                    expect[c]
                );
            }
        }
    }
}
