//! Command-line front end: a flat `key = value` config document, one
//! subcommand per run, deterministic CSV artifacts.
//!
//! Subcommands: kernels, symbols, scan, solve, converge, grid1d, validate.
//! Flags `--config`, `--out`, `--threads`, `--seed` override the config
//! keys of the same name one-to-one. Every artifact is a pure function of
//! (config, seed); randomness only flows through SplitMix64.

use crate::converge::{
    asymptotic_compatibility_study, delta_refinement_study, spectral_refinement_study, Ladder,
    RateReport, RateStudy,
};
use crate::csv::{write_csv, CsvValue};
use crate::error::{Error, Result};
use crate::forcing::{ForcingSpec, ModeAmplitude};
use crate::grid1d::{discretization_for_grid, nyquist_audit, Layout1D};
use crate::kernel::{
    check_gradient_monotonicity, kernel_moment, normalize_profile, KernelRole, Monotonicity,
    ProfileKind, RadialProfile, ScaledKernel,
};
use crate::realspace::{
    adjointness_residual, apply_divergence_realspace, planewave_symbol_check, DivergenceForm,
    LatticeField,
};
use crate::spectral::{
    solve_stokes, KernelPair, NonlocalOp, PeriodicGrid, StokesProblem, StokesVariant,
};
use crate::symbol::{scan_gradient_symbol_zeros, symbol_table};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Kernels,
    Symbols,
    Scan,
    Solve,
    Converge,
    Grid1d,
    Validate,
}

impl Subcommand {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "kernels" => Subcommand::Kernels,
            "symbols" => Subcommand::Symbols,
            "scan" => Subcommand::Scan,
            "solve" => Subcommand::Solve,
            "converge" => Subcommand::Converge,
            "grid1d" => Subcommand::Grid1d,
            "validate" => Subcommand::Validate,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Kernels => "kernels",
            Subcommand::Symbols => "symbols",
            Subcommand::Scan => "scan",
            Subcommand::Solve => "solve",
            Subcommand::Converge => "converge",
            Subcommand::Grid1d => "grid1d",
            Subcommand::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Delta,
    Spectral,
    Path,
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    pub dim: usize,
    pub delta: f64,
    pub delta_ladder: Vec<f64>,
    pub modes_per_axis: usize,
    pub n_ladder: Vec<usize>,
    pub n_ref: Option<usize>,
    pub study: StudyKind,
    pub viscosity: f64,
    pub diffusion: RadialProfile,
    pub gradient: RadialProfile,
    pub normalize: bool,
    pub variant: StokesVariant,
    pub forcing: ForcingSpec,
    pub xi_max: f64,
    pub samples: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub threads: usize,
    pub realspace_out: bool,
}

const KNOWN_KEYS: &[&str] = &[
    "subcommand",
    "dim",
    "delta",
    "delta_ladder",
    "n",
    "n_ladder",
    "n_ref",
    "study",
    "nu",
    "kind",
    "beta",
    "sigma",
    "epsilon",
    "role",
    "diffusion_kind",
    "diffusion_beta",
    "diffusion_sigma",
    "diffusion_epsilon",
    "gradient_kind",
    "gradient_beta",
    "gradient_sigma",
    "gradient_epsilon",
    "normalize",
    "variant",
    "forcing",
    "band",
    "modes",
    "symmetrize",
    "xi_max",
    "samples",
    "seed",
    "out",
    "threads",
    "realspace_out",
];

struct KeyMap {
    map: BTreeMap<String, String>,
    problems: Vec<String>,
}

impl KeyMap {
    fn parse(text: &str, overrides: &[(String, String)]) -> Self {
        let mut map = BTreeMap::new();
        let mut problems = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`, got `{raw}`", lineno + 1));
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                problems.push(format!("line {}: unknown key `{key}`", lineno + 1));
                continue;
            }
            if map.insert(key.clone(), value).is_some() {
                problems.push(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }
        for (key, value) in overrides {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                problems.push(format!("override: unknown key `{key}`"));
                continue;
            }
            map.insert(key.clone(), value.clone());
        }
        KeyMap { map, problems }
    }

    fn take(&self, key: &str) -> Option<String> {
        self.map.get(key).cloned()
    }

    fn parse_f64(&mut self, key: &str, default: f64) -> f64 {
        match self.take(key) {
            None => default,
            Some(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    self.problems.push(format!("key `{key}`: not a finite number: `{s}`"));
                    default
                }
            },
        }
    }

    fn parse_usize(&mut self, key: &str, default: usize) -> usize {
        match self.take(key) {
            None => default,
            Some(s) => match s.parse::<usize>() {
                Ok(v) => v,
                _ => {
                    self.problems.push(format!("key `{key}`: not a nonnegative integer: `{s}`"));
                    default
                }
            },
        }
    }

    fn parse_u64(&mut self, key: &str, default: u64) -> u64 {
        match self.take(key) {
            None => default,
            Some(s) => match s.parse::<u64>() {
                Ok(v) => v,
                _ => {
                    self.problems.push(format!("key `{key}`: not a 64-bit seed: `{s}`"));
                    default
                }
            },
        }
    }

    fn parse_bool(&mut self, key: &str, default: bool) -> bool {
        match self.take(key).as_deref() {
            None => default,
            Some("true") | Some("1") => true,
            Some("false") | Some("0") => false,
            Some(s) => {
                self.problems.push(format!("key `{key}`: expected true/false, got `{s}`"));
                default
            }
        }
    }

    fn parse_f64_list(&mut self, key: &str) -> Vec<f64> {
        match self.take(key) {
            None => Vec::new(),
            Some(s) => {
                let mut out = Vec::new();
                for item in s.split(',') {
                    match item.trim().parse::<f64>() {
                        Ok(v) if v.is_finite() => out.push(v),
                        _ => self
                            .problems
                            .push(format!("key `{key}`: not a finite number: `{item}`")),
                    }
                }
                out
            }
        }
    }

    fn parse_usize_list(&mut self, key: &str) -> Vec<usize> {
        match self.take(key) {
            None => Vec::new(),
            Some(s) => {
                let mut out = Vec::new();
                for item in s.split(',') {
                    match item.trim().parse::<usize>() {
                        Ok(v) => out.push(v),
                        _ => self
                            .problems
                            .push(format!("key `{key}`: not an integer: `{item}`")),
                    }
                }
                out
            }
        }
    }
}

fn parse_profile_kind(
    name: &str,
    beta: f64,
    sigma: f64,
    epsilon: f64,
    problems: &mut Vec<String>,
    key: &str,
) -> ProfileKind {
    match name {
        "fractional" => ProfileKind::Fractional { beta },
        "constant" => ProfileKind::Constant,
        "cubic_spline" => ProfileKind::CubicSpline,
        "truncated_gaussian" => ProfileKind::TruncatedGaussian { sigma },
        "piecewise_fractional" => ProfileKind::PiecewiseFractional { beta, cutover: epsilon },
        other => {
            problems.push(format!("key `{key}`: unknown kernel kind `{other}`"));
            ProfileKind::Constant
        }
    }
}

fn parse_modes_forcing(text: &str, dim: usize, problems: &mut Vec<String>) -> Vec<ModeAmplitude> {
    // entries separated by ';', each `k1 k2 [k3] re im [re im ...]`:
    // dim integers then 2*dim floats
    let mut entries = Vec::new();
    for (i, chunk) in text.split(';').enumerate() {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let parts: Vec<&str> = chunk.split_whitespace().collect();
        if parts.len() != dim + 2 * dim {
            problems.push(format!(
                "key `modes` entry {}: expected {} numbers ({} wavenumbers then re/im per \
                 component), got {}",
                i + 1,
                3 * dim,
                dim,
                parts.len()
            ));
            continue;
        }
        let mut mode = [0i64; 3];
        let mut ok = true;
        for (k, p) in parts[..dim].iter().enumerate() {
            match p.parse::<i64>() {
                Ok(v) => mode[k] = v,
                Err(_) => {
                    problems.push(format!("key `modes` entry {}: bad wavenumber `{p}`", i + 1));
                    ok = false;
                }
            }
        }
        let mut amplitude = Vec::with_capacity(dim);
        for c in 0..dim {
            let re = parts[dim + 2 * c].parse::<f64>();
            let im = parts[dim + 2 * c + 1].parse::<f64>();
            match (re, im) {
                (Ok(re), Ok(im)) => amplitude.push(Complex64::new(re, im)),
                _ => {
                    problems.push(format!("key `modes` entry {}: bad amplitude", i + 1));
                    ok = false;
                }
            }
        }
        if ok {
            entries.push(ModeAmplitude { mode, amplitude });
        }
    }
    entries
}

/// Parse and validate a config document plus overrides. Returns either a
/// fully validated configuration or every problem found.
pub fn parse_config(
    text: &str,
    overrides: &[(String, String)],
) -> std::result::Result<ExperimentConfig, Vec<String>> {
    let mut keys = KeyMap::parse(text, overrides);

    let subcommand = match keys.take("subcommand") {
        Some(s) => match Subcommand::parse(&s) {
            Some(sc) => Some(sc),
            None => {
                keys.problems.push(format!("key `subcommand`: unknown subcommand `{s}`"));
                None
            }
        },
        None => {
            keys.problems.push("missing subcommand".to_string());
            None
        }
    };

    let default_dim = match subcommand {
        Some(Subcommand::Grid1d) => 1,
        _ => 2,
    };
    let dim = keys.parse_usize("dim", default_dim);
    let delta = keys.parse_f64("delta", 0.5);
    let delta_ladder = keys.parse_f64_list("delta_ladder");
    let modes_per_axis = keys.parse_usize("n", 32);
    let n_ladder = keys.parse_usize_list("n_ladder");
    let n_ref = match keys.take("n_ref") {
        None => None,
        Some(s) => match s.parse::<usize>() {
            Ok(v) => Some(v),
            Err(_) => {
                keys.problems.push(format!("key `n_ref`: not an integer: `{s}`"));
                None
            }
        },
    };
    let study = match keys.take("study").as_deref() {
        None => StudyKind::Delta,
        Some("delta") => StudyKind::Delta,
        Some("spectral") => StudyKind::Spectral,
        Some("path") => StudyKind::Path,
        Some(s) => {
            keys.problems.push(format!("key `study`: expected delta|spectral|path, got `{s}`"));
            StudyKind::Delta
        }
    };
    let viscosity = keys.parse_f64("nu", 1.0);
    let normalize = keys.parse_bool("normalize", true);

    let variant = match keys.take("variant").as_deref() {
        None => StokesVariant::Nonlocal,
        Some("nonlocal") => StokesVariant::Nonlocal,
        Some("modified") => StokesVariant::Modified,
        Some("local") => StokesVariant::Local,
        Some(s) => {
            keys.problems
                .push(format!("key `variant`: expected nonlocal|modified|local, got `{s}`"));
            StokesVariant::Nonlocal
        }
    };

    // kernel specs: role-prefixed keys, then unprefixed keys steered by
    // `role` (default gradient)
    let mut diff_kind_name = keys.take("diffusion_kind").unwrap_or_else(|| "constant".to_string());
    let mut diff_beta = keys.parse_f64("diffusion_beta", 0.5);
    let mut diff_sigma = keys.parse_f64("diffusion_sigma", 0.3);
    let mut diff_eps = keys.parse_f64("diffusion_epsilon", 1.0);
    let mut grad_kind_name = keys.take("gradient_kind").unwrap_or_else(|| "fractional".to_string());
    let mut grad_beta = keys.parse_f64("gradient_beta", 0.5);
    let mut grad_sigma = keys.parse_f64("gradient_sigma", 0.3);
    let mut grad_eps = keys.parse_f64("gradient_epsilon", 1.0);

    let role_is_diffusion = match keys.take("role").as_deref() {
        None | Some("gradient") => false,
        Some("diffusion") => true,
        Some(s) => {
            keys.problems.push(format!("key `role`: expected diffusion|gradient, got `{s}`"));
            false
        }
    };
    let unprefixed_kind = keys.take("kind");
    let has_unprefixed = unprefixed_kind.is_some()
        || keys.take("beta").is_some()
        || keys.take("sigma").is_some()
        || keys.take("epsilon").is_some();
    if has_unprefixed {
        let (kind_name, beta, sigma, eps) = if role_is_diffusion {
            (&mut diff_kind_name, &mut diff_beta, &mut diff_sigma, &mut diff_eps)
        } else {
            (&mut grad_kind_name, &mut grad_beta, &mut grad_sigma, &mut grad_eps)
        };
        if let Some(k) = unprefixed_kind {
            *kind_name = k;
        } else if !role_is_diffusion {
            // unprefixed beta/sigma/epsilon keep the fractional default
            *kind_name = "fractional".to_string();
        }
        *beta = keys.parse_f64("beta", *beta);
        *sigma = keys.parse_f64("sigma", *sigma);
        *eps = keys.parse_f64("epsilon", *eps);
    }

    let diff_kind = parse_profile_kind(
        &diff_kind_name,
        diff_beta,
        diff_sigma,
        diff_eps,
        &mut keys.problems,
        "diffusion_kind",
    );
    let grad_kind = parse_profile_kind(
        &grad_kind_name,
        grad_beta,
        grad_sigma,
        grad_eps,
        &mut keys.problems,
        "gradient_kind",
    );

    let forcing = match keys.take("forcing").as_deref() {
        None | Some("taylor_green") => ForcingSpec::TaylorGreen,
        Some("random") => ForcingSpec::RandomBandLimited {
            band: keys.parse_usize("band", 8),
            seed: keys.parse_u64("seed", 0),
        },
        Some("modes") => {
            let text = keys.take("modes").unwrap_or_default();
            let entries = parse_modes_forcing(&text, dim.clamp(2, 3), &mut keys.problems);
            ForcingSpec::Modes { entries, symmetrize: keys.parse_bool("symmetrize", true) }
        }
        Some(s) => {
            keys.problems
                .push(format!("key `forcing`: expected taylor_green|random|modes, got `{s}`"));
            ForcingSpec::TaylorGreen
        }
    };

    let xi_max = keys.parse_f64("xi_max", 60.0);
    let samples = keys.parse_usize("samples", 512);
    let seed = keys.parse_u64("seed", 0);
    let out_dir = PathBuf::from(keys.take("out").unwrap_or_else(|| ".".to_string()));
    let threads = keys.parse_usize("threads", 0);
    let realspace_out = keys.parse_bool("realspace_out", false);

    let mut problems = keys.problems;

    // cross-field validation against module preconditions
    let diffusion = RadialProfile::new(diff_kind, 1.0, KernelRole::Diffusion)
        .map_err(|e| problems.push(format!("diffusion kernel: {e}")))
        .ok();
    let gradient = RadialProfile::new(grad_kind, 1.0, KernelRole::Gradient)
        .map_err(|e| problems.push(format!("gradient kernel: {e}")))
        .ok();
    if let ProfileKind::Fractional { beta } | ProfileKind::PiecewiseFractional { beta, .. } =
        grad_kind
    {
        if beta >= 1.0 {
            problems.push(format!("gradient kernel: divergent moment (beta = {beta} >= 1)"));
        }
    }
    if let ProfileKind::Fractional { beta } | ProfileKind::PiecewiseFractional { beta, .. } =
        diff_kind
    {
        if beta >= 2.0 {
            problems.push(format!("diffusion kernel: divergent moment (beta = {beta} >= 2)"));
        }
    }
    if !(delta > 0.0) {
        problems.push(format!("key `delta`: must be positive, got {delta}"));
    }
    if !(viscosity > 0.0) {
        problems.push(format!("key `nu`: must be positive, got {viscosity}"));
    }
    if !(xi_max > 0.0) {
        problems.push(format!("key `xi_max`: must be positive, got {xi_max}"));
    }

    if let Some(sc) = subcommand {
        match sc {
            Subcommand::Kernels | Subcommand::Symbols | Subcommand::Scan => {
                if !(1..=3).contains(&dim) {
                    problems.push(format!("key `dim`: must be 1, 2 or 3, got {dim}"));
                }
                if sc == Subcommand::Scan && samples < 64 {
                    problems.push(format!("key `samples`: scan needs at least 64, got {samples}"));
                }
            }
            Subcommand::Solve | Subcommand::Converge | Subcommand::Validate => {
                if !(2..=3).contains(&dim) {
                    problems.push(format!("key `dim`: must be 2 or 3 for {}, got {dim}", sc.name()));
                }
                if modes_per_axis < 4 || modes_per_axis % 2 != 0 {
                    problems.push(format!(
                        "key `n`: must be an even integer >= 4, got {modes_per_axis}"
                    ));
                }
                if matches!(forcing, ForcingSpec::TaylorGreen) && dim != 2 {
                    problems.push("forcing `taylor_green` is two-dimensional".to_string());
                }
            }
            Subcommand::Grid1d => {
                if dim != 1 {
                    problems.push(format!("key `dim`: grid1d is one-dimensional, got {dim}"));
                }
                if modes_per_axis < 4 || modes_per_axis % 2 != 0 {
                    problems.push(format!(
                        "key `n`: must be an even integer >= 4, got {modes_per_axis}"
                    ));
                }
            }
        }
        if sc == Subcommand::Validate && delta >= std::f64::consts::PI {
            problems.push(format!(
                "key `delta`: validate needs delta < pi for the periodic cell, got {delta}"
            ));
        }
        if sc == Subcommand::Converge {
            match study {
                StudyKind::Delta => {
                    if delta_ladder.len() < 3 {
                        problems.push(
                            "key `delta_ladder`: a delta study needs at least 3 rungs".to_string(),
                        );
                    }
                    if delta_ladder.windows(2).any(|w| w[1] >= w[0]) {
                        problems.push("key `delta_ladder`: must strictly decrease".to_string());
                    }
                    if delta_ladder.iter().any(|&d| d <= 0.0) {
                        problems.push("key `delta_ladder`: entries must be positive".to_string());
                    }
                }
                StudyKind::Spectral => {
                    if n_ladder.len() < 3 {
                        problems.push(
                            "key `n_ladder`: a spectral study needs at least 3 rungs".to_string(),
                        );
                    }
                    if n_ladder.windows(2).any(|w| w[1] <= w[0]) {
                        problems.push("key `n_ladder`: must strictly increase".to_string());
                    }
                    if n_ladder.iter().any(|&n| n < 4 || n % 2 != 0) {
                        problems
                            .push("key `n_ladder`: entries must be even integers >= 4".to_string());
                    }
                }
                StudyKind::Path => {
                    if delta_ladder.len() < 3 || delta_ladder.len() != n_ladder.len() {
                        problems.push(
                            "path study needs delta_ladder and n_ladder of equal length >= 3"
                                .to_string(),
                        );
                    }
                    if delta_ladder.windows(2).any(|w| w[1] >= w[0]) {
                        problems.push("key `delta_ladder`: must strictly decrease".to_string());
                    }
                    if n_ladder.windows(2).any(|w| w[1] <= w[0]) {
                        problems.push("key `n_ladder`: must strictly increase".to_string());
                    }
                }
            }
        }
    }

    match (problems.is_empty(), subcommand, diffusion, gradient) {
        (true, Some(subcommand), Some(diffusion), Some(gradient)) => Ok(ExperimentConfig {
            subcommand,
            dim,
            delta,
            delta_ladder,
            modes_per_axis,
            n_ladder,
            n_ref,
            study,
            viscosity,
            diffusion,
            gradient,
            normalize,
            variant,
            forcing,
            xi_max,
            samples,
            seed,
            out_dir,
            threads,
            realspace_out,
        }),
        _ => Err(problems),
    }
}

/// Files written by a run, plus whether any artifact serialized a NaN.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub has_nan: bool,
}

fn prepared_profiles(config: &ExperimentConfig, d: usize) -> Result<(RadialProfile, RadialProfile)> {
    if config.normalize {
        Ok((normalize_profile(&config.diffusion, d)?, normalize_profile(&config.gradient, d)?))
    } else {
        Ok((config.diffusion, config.gradient))
    }
}

/// Execute a validated configuration, writing CSV artifacts into the
/// output directory.
pub fn run_command(config: &ExperimentConfig) -> Result<RunSummary> {
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| run_inner(config))
    } else {
        run_inner(config)
    }
}

fn run_inner(config: &ExperimentConfig) -> Result<RunSummary> {
    std::fs::create_dir_all(&config.out_dir)?;
    let mut summary = RunSummary { files: Vec::new(), has_nan: false };
    match config.subcommand {
        Subcommand::Kernels => run_kernels(config, &mut summary)?,
        Subcommand::Symbols => run_symbols(config, &mut summary)?,
        Subcommand::Scan => run_scan(config, &mut summary)?,
        Subcommand::Solve => run_solve(config, &mut summary)?,
        Subcommand::Converge => run_converge(config, &mut summary)?,
        Subcommand::Grid1d => run_grid1d(config, &mut summary)?,
        Subcommand::Validate => run_validate(config, &mut summary)?,
    }
    Ok(summary)
}

fn emit(
    summary: &mut RunSummary,
    path: PathBuf,
    header: &[&str],
    rows: &[Vec<CsvValue>],
) -> Result<()> {
    let has_nan = write_csv(&path, header, rows)?;
    summary.files.push(path);
    summary.has_nan |= has_nan;
    Ok(())
}

fn profile_params(profile: &RadialProfile) -> (Option<f64>, Option<f64>, Option<f64>) {
    match profile.kind {
        ProfileKind::Fractional { beta } => (Some(beta), None, None),
        ProfileKind::Constant | ProfileKind::CubicSpline => (None, None, None),
        ProfileKind::TruncatedGaussian { sigma } => (None, Some(sigma), None),
        ProfileKind::PiecewiseFractional { beta, cutover } => (Some(beta), None, Some(cutover)),
    }
}

fn opt_value(v: Option<f64>) -> CsvValue {
    v.map(CsvValue::from).unwrap_or(CsvValue::Missing)
}

fn run_kernels(config: &ExperimentConfig, summary: &mut RunSummary) -> Result<()> {
    let d = config.dim;
    let mut rows = Vec::new();
    for profile in [&config.diffusion, &config.gradient] {
        let moment = kernel_moment(profile, d)?;
        let normalized = normalize_profile(profile, d)?;
        let (beta, sigma, epsilon) = profile_params(profile);
        let (mono, violation) = match check_gradient_monotonicity(profile, d) {
            Monotonicity::Pass => ("pass", None),
            Monotonicity::Fail { r_lo, .. } => ("fail", Some(r_lo)),
        };
        rows.push(vec![
            CsvValue::from(profile.role.name()),
            CsvValue::from(profile.kind.name()),
            opt_value(beta),
            opt_value(sigma),
            opt_value(epsilon),
            CsvValue::from(moment),
            CsvValue::from(normalized.amplitude),
            CsvValue::from(mono),
            opt_value(violation),
            CsvValue::from(if profile.admissible(d) { "true" } else { "false" }),
        ]);
    }
    emit(
        summary,
        config.out_dir.join("kernels.csv"),
        &[
            "role",
            "kind",
            "beta",
            "sigma",
            "epsilon",
            "moment",
            "normalized_amplitude",
            "monotonicity",
            "first_violation_r",
            "admissible",
        ],
        &rows,
    )
}

fn run_symbols(config: &ExperimentConfig, summary: &mut RunSummary) -> Result<()> {
    let d = config.dim;
    let (diffusion, gradient) = prepared_profiles(config, d)?;
    let diff = ScaledKernel::new(diffusion, config.delta, d)?;
    let grad = ScaledKernel::new(gradient, config.delta, d)?;
    let grid: Vec<f64> =
        (1..=config.samples).map(|i| config.xi_max * i as f64 / config.samples as f64).collect();
    let table = symbol_table(&diff, &grad, &grid)?;
    let rows: Vec<Vec<CsvValue>> = table
        .rows
        .iter()
        .map(|r| vec![CsvValue::from(r.xi), CsvValue::from(r.lambda), CsvValue::from(r.b)])
        .collect();
    emit(summary, config.out_dir.join("symbols.csv"), &["xi", "lambda", "b"], &rows)
}

fn run_scan(config: &ExperimentConfig, summary: &mut RunSummary) -> Result<()> {
    let d = config.dim;
    let (_, gradient) = prepared_profiles(config, d)?;
    let grad = ScaledKernel::new(gradient, config.delta, d)?;
    let scan = scan_gradient_symbol_zeros(&grad, config.xi_max, config.samples)?;
    let mut rows: Vec<Vec<CsvValue>> = scan
        .brackets
        .iter()
        .map(|&(lo, hi)| {
            vec![CsvValue::from(lo), CsvValue::from(hi), CsvValue::from("sign_change")]
        })
        .collect();
    for &xi in &scan.near_zero_minima {
        rows.push(vec![CsvValue::from(xi), CsvValue::from(xi), CsvValue::from("near_zero_min")]);
    }
    emit(summary, config.out_dir.join("scan.csv"), &["xi_lo", "xi_hi", "type"], &rows)?;
    println!(
        "scan: {} sign changes, {} near-zero minima, min b = {:e} at xi = {:e}",
        scan.brackets.len(),
        scan.near_zero_minima.len(),
        scan.min_value,
        scan.min_at
    );
    Ok(())
}

fn run_solve(config: &ExperimentConfig, summary: &mut RunSummary) -> Result<()> {
    let d = config.dim;
    let (diffusion, gradient) = prepared_profiles(config, d)?;
    let grid = PeriodicGrid::new(d, config.modes_per_axis)?;
    let forcing = crate::forcing::build_forcing(&config.forcing, grid, config.viscosity)?;
    let kernels = KernelPair::new(
        ScaledKernel::new(diffusion, config.delta, d)?,
        ScaledKernel::new(gradient, config.delta, d)?,
    )?;
    let problem =
        StokesProblem { forcing, viscosity: config.viscosity, kernels, variant: config.variant };
    let solution = solve_stokes(&problem)?;

    let mut header: Vec<String> = (1..=d).map(|k| format!("xi{k}")).collect();
    for c in 1..=d {
        header.push(format!("re_u{c}"));
        header.push(format!("im_u{c}"));
    }
    header.push("re_p".to_string());
    header.push("im_p".to_string());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();

    let mut rows = Vec::with_capacity(grid.mode_count());
    for i in 0..grid.mode_count() {
        let mode = grid.mode_at(i);
        let mut row: Vec<CsvValue> = (0..d).map(|k| CsvValue::from(mode[k] as i64)).collect();
        for c in 0..d {
            let u = solution.velocity.get(i, c);
            row.push(CsvValue::from(u.re));
            row.push(CsvValue::from(u.im));
        }
        let p = solution.pressure.get(i, 0);
        row.push(CsvValue::from(p.re));
        row.push(CsvValue::from(p.im));
        rows.push(row);
    }
    emit(summary, config.out_dir.join("solution.csv"), &header_refs, &rows)?;

    let diag = solution.diagnostics;
    let diag_rows = vec![
        vec![CsvValue::from("max_momentum_residual"), CsvValue::from(diag.max_momentum_residual)],
        vec![CsvValue::from("max_divergence_local"), CsvValue::from(diag.max_divergence_local)],
        vec![
            CsvValue::from("max_divergence_nonlocal"),
            CsvValue::from(diag.max_divergence_nonlocal),
        ],
        vec![CsvValue::from("forcing_l2"), CsvValue::from(diag.forcing_l2)],
        vec![CsvValue::from("velocity_l2"), CsvValue::from(diag.velocity_l2)],
        vec![CsvValue::from("pressure_l2"), CsvValue::from(diag.pressure_l2)],
    ];
    emit(summary, config.out_dir.join("solve_diagnostics.csv"), &["metric", "value"], &diag_rows)?;

    if config.realspace_out {
        let u_vals = solution.velocity.collocation_values();
        let p_vals = solution.pressure.collocation_values();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        for c in 1..=d {
            header.push(format!("u{c}"));
        }
        header.push("p".to_string());
        let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let mut rows = Vec::with_capacity(grid.point_count());
        for j in 0..grid.point_count() {
            let x = grid.point_at(j);
            let mut row: Vec<CsvValue> = (0..d).map(|k| CsvValue::from(x[k])).collect();
            for c in 0..d {
                row.push(CsvValue::from(u_vals[j * d + c]));
            }
            row.push(CsvValue::from(p_vals[j]));
            rows.push(row);
        }
        emit(summary, config.out_dir.join("solution_realspace.csv"), &header_refs, &rows)?;
    }
    Ok(())
}

fn report_rows(report: &RateReport) -> Vec<Vec<CsvValue>> {
    let mut rows = Vec::with_capacity(report.rungs.len());
    for (k, rung) in report.rungs.iter().enumerate() {
        // the order column on rung k compares rung k-1 to rung k
        let order_u = if k == 0 { None } else { report.orders_u[k - 1] };
        let order_p = if k == 0 { None } else { report.orders_p[k - 1] };
        rows.push(vec![
            CsvValue::from(k),
            CsvValue::from(rung.delta),
            CsvValue::from(rung.modes_per_axis),
            CsvValue::from(rung.err_u_l2),
            CsvValue::from(rung.err_p_l2),
            order_u.map(CsvValue::from).unwrap_or(CsvValue::Missing),
            order_p.map(CsvValue::from).unwrap_or(CsvValue::Missing),
        ]);
    }
    rows
}

fn run_converge(config: &ExperimentConfig, summary: &mut RunSummary) -> Result<()> {
    let ladder = match config.study {
        StudyKind::Delta => Ladder::Delta {
            deltas: config.delta_ladder.clone(),
            modes_per_axis: config.modes_per_axis,
        },
        StudyKind::Spectral => Ladder::Spectral {
            modes: config.n_ladder.clone(),
            delta: config.delta,
            modes_ref: config.n_ref.unwrap_or(2 * config.n_ladder.last().copied().unwrap_or(4)),
        },
        StudyKind::Path => Ladder::Path {
            rungs: config
                .delta_ladder
                .iter()
                .copied()
                .zip(config.n_ladder.iter().copied())
                .collect(),
            modes_ref: config
                .n_ref
                .unwrap_or(config.n_ladder.last().copied().unwrap_or(4)),
        },
    };
    let study = RateStudy {
        forcing: config.forcing.clone(),
        viscosity: config.viscosity,
        diffusion: config.diffusion,
        gradient: config.gradient,
        dim: config.dim,
        variant: config.variant,
        ladder,
    };
    let report = match config.study {
        StudyKind::Delta => delta_refinement_study(&study)?,
        StudyKind::Spectral => spectral_refinement_study(&study)?,
        StudyKind::Path => asymptotic_compatibility_study(&study)?,
    };
    emit(
        summary,
        config.out_dir.join("converge.csv"),
        &["rung", "delta", "N", "err_u_L2", "err_p_L2", "order_u", "order_p"],
        &report_rows(&report),
    )?;
    println!("converge: reference = {}", report.reference);
    Ok(())
}

fn run_grid1d(config: &ExperimentConfig, summary: &mut RunSummary) -> Result<()> {
    let (_, gradient) = prepared_profiles(config, 1)?;
    let kernel = ScaledKernel::new(gradient, config.delta, 1)?;
    let n = config.modes_per_axis;
    let regular = discretization_for_grid(&kernel, n, Layout1D::Regular)?;
    let staggered = discretization_for_grid(&kernel, n, Layout1D::Staggered)?;
    let mut rows = Vec::with_capacity(n / 2 + 1);
    for k in 0..=n / 2 {
        rows.push(vec![
            CsvValue::from(k),
            CsvValue::from(crate::grid1d::discrete_gradient_symbol(&regular, k as i64)),
            CsvValue::from(crate::grid1d::discrete_gradient_symbol(&staggered, k as i64)),
        ]);
    }
    emit(summary, config.out_dir.join("grid1d.csv"), &["n", "b_regular", "b_staggered"], &rows)?;

    let mut audit_rows = Vec::new();
    for (layout, disc) in [("regular", &regular), ("staggered", &staggered)] {
        let audit = nyquist_audit(disc)?;
        audit_rows.push(vec![
            CsvValue::from(layout),
            CsvValue::from(audit.min_abs),
            CsvValue::from(audit.min_at),
            CsvValue::from(audit.max_abs),
            CsvValue::from(audit.max_at),
            CsvValue::from(audit.nyquist_value),
            CsvValue::from(audit.verdict.name()),
        ]);
    }
    emit(
        summary,
        config.out_dir.join("grid1d_audit.csv"),
        &["layout", "min_abs", "min_at", "max_abs", "max_at", "nyquist_value", "verdict"],
        &audit_rows,
    )
}

fn run_validate(config: &ExperimentConfig, summary: &mut RunSummary) -> Result<()> {
    let d = config.dim;
    let (diffusion, gradient) = prepared_profiles(config, d)?;
    let diff = ScaledKernel::new(diffusion, config.delta, d)?;
    let grad = ScaledKernel::new(gradient, config.delta, d)?;
    let grid = PeriodicGrid::new(d, config.modes_per_axis)?;
    let mut rows: Vec<Vec<CsvValue>> = Vec::new();

    for k in 0..20u64 {
        let seed = config.seed.wrapping_add(k);
        let u = LatticeField::random(grid, d, seed);
        let p = LatticeField::random(grid, 1, seed.wrapping_add(0x9e37_79b9));
        let r = adjointness_residual(&u, &p, &grad)?;
        rows.push(vec![
            CsvValue::from("adjointness_residual"),
            CsvValue::from(seed as i64),
            CsvValue::from(r),
        ]);
    }

    let mode = [1, 0, 0];
    for n in [config.modes_per_axis, 2 * config.modes_per_axis] {
        let fine = PeriodicGrid::new(d, n)?;
        let dev_l = planewave_symbol_check(NonlocalOp::Diffusion, &diff, mode, fine)?;
        let dev_g = planewave_symbol_check(NonlocalOp::Gradient, &grad, mode, fine)?;
        let dev_d = planewave_symbol_check(NonlocalOp::Divergence, &grad, mode, fine)?;
        rows.push(vec![
            CsvValue::from("planewave_deviation_L"),
            CsvValue::from(n),
            CsvValue::from(dev_l),
        ]);
        rows.push(vec![
            CsvValue::from("planewave_deviation_G"),
            CsvValue::from(n),
            CsvValue::from(dev_g),
        ]);
        rows.push(vec![
            CsvValue::from("planewave_deviation_D"),
            CsvValue::from(n),
            CsvValue::from(dev_d),
        ]);
    }

    let u = LatticeField::random(grid, d, config.seed.wrapping_add(777));
    let (plus, _) = apply_divergence_realspace(&u, &grad, DivergenceForm::Plus)?;
    let (minus, _) = apply_divergence_realspace(&u, &grad, DivergenceForm::Minus)?;
    let mut gap = 0.0f64;
    for j in 0..grid.point_count() {
        gap = gap.max((plus.get(j, 0) - minus.get(j, 0)).abs());
    }
    rows.push(vec![
        CsvValue::from("divergence_form_gap"),
        CsvValue::from(config.seed as i64),
        CsvValue::from(gap),
    ]);

    emit(summary, config.out_dir.join("validate.csv"), &["check", "parameter", "value"], &rows)
}

/// Parse argv (without the program name), run, and map the outcome to an
/// exit status: 0 success, 1 runtime failure, 2 invalid configuration or
/// usage, 3 success with NaN in an artifact.
pub fn main(args: Vec<String>) -> i32 {
    let mut subcommand: Option<String> = None;
    let mut config_path: Option<PathBuf> = None;
    let mut overrides: Vec<(String, String)> = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => match it.next() {
                Some(p) => config_path = Some(PathBuf::from(p)),
                None => {
                    eprintln!("error: --config needs a path");
                    return 2;
                }
            },
            "--out" | "--threads" | "--seed" => {
                let key = arg.trim_start_matches("--").to_string();
                match it.next() {
                    Some(v) => overrides.push((key, v)),
                    None => {
                        eprintln!("error: {arg} needs a value");
                        return 2;
                    }
                }
            }
            "--help" | "-h" => {
                print_usage();
                return 0;
            }
            flag if flag.starts_with("--") => {
                eprintln!("error: unknown flag {flag}");
                print_usage();
                return 2;
            }
            positional => {
                if subcommand.is_some() {
                    eprintln!("error: more than one subcommand given");
                    return 2;
                }
                subcommand = Some(positional.to_string());
            }
        }
    }
    if let Some(sc) = subcommand {
        overrides.insert(0, ("subcommand".to_string(), sc));
    }

    let text = match &config_path {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read config {}: {e}", path.display());
                return 2;
            }
        },
        None => String::new(),
    };

    let config = match parse_config(&text, &overrides) {
        Ok(c) => c,
        Err(problems) => {
            for p in &problems {
                eprintln!("config error: {p}");
            }
            return 2;
        }
    };

    match run_command(&config) {
        Ok(summary) => {
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            if summary.has_nan {
                eprintln!("warning: artifacts contain nan values");
                3
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn print_usage() {
    println!(
        "usage: nlstokes <subcommand> [--config <path>] [--out <dir>] [--threads <k>] [--seed <u64>]\n\
         subcommands: kernels | symbols | scan | solve | converge | grid1d | validate"
    );
}
