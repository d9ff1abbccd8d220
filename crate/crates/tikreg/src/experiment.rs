//! Excess-risk decay experiments.
//!
//! A sweep fixes a problem family (prior, noise case, forward operator),
//! then for every grid size `N`, training-set size `m` and repetition:
//! draws `m` sample pairs, learns the regularizer both ways, and records
//! the exact excess risk of each learned reconstructor over the minimal
//! risk. Excesses are computed from the closed-form expected risk, so no
//! test set is involved and the only randomness is the training draw.
//!
//! Every cell's RNG is seeded by hashing (master seed, N, m-index, rep),
//! which makes results independent of scheduling; with the `parallel`
//! feature the cells are distributed over threads and the output is
//! bitwise identical to the sequential path.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::learn::{pair_from_moments, supervised_fit_from_moments, MomentAccumulator, BLOCK_COLS};
use crate::mix_seed;
use crate::model::{
    bump_prior_cov_sqrt, laplacian_cov_sqrt, triangle_mean, ComponentDist, ForwardOp, Grid,
    NoiseBasis, NoiseModel, PriorModel,
};
use crate::tikhonov::{minimal_risk, pair_risk, ProblemInstance};
use crate::{Error, Result};

/// Training-set sizes of the full study: seven log-spaced points between
/// 3e3 and 3e5.
pub const FULL_SAMPLE_SIZES: [usize; 7] = [3000, 6463, 13925, 30000, 64633, 139248, 300000];

/// Reduced sample sizes for the quick preset.
pub const QUICK_SAMPLE_SIZES: [usize; 5] = [1000, 3162, 10000, 31623, 100000];

/// Acceptance window for fitted decay slopes.
pub const SLOPE_WINDOW: (f64, f64) = (-0.65, -0.35);

/// Default master seed when none is supplied.
pub const DEFAULT_SEED: u64 = 1;

/// Which distributions drive the data: the three studied noise cases.
/// The prior components are Gaussian throughout; the cases vary the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseCase {
    /// (a) Gaussian noise, independent per pixel.
    GaussGauss,
    /// (b) uniform noise, independent per pixel.
    GaussUniform,
    /// (c) uniform noise, independent per Haar coefficient.
    GaussHaarUniform,
}

impl NoiseCase {
    pub fn label(&self) -> &'static str {
        match self {
            NoiseCase::GaussGauss => "a",
            NoiseCase::GaussUniform => "b",
            NoiseCase::GaussHaarUniform => "c",
        }
    }

    pub fn from_label(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(NoiseCase::GaussGauss),
            "b" => Ok(NoiseCase::GaussUniform),
            "c" => Ok(NoiseCase::GaussHaarUniform),
            other => Err(Error::Config(format!(
                "unknown case '{other}', expected one of a, b, c"
            ))),
        }
    }

    /// Component distribution and basis of this case's noise.
    pub fn noise_parts(&self) -> (ComponentDist, NoiseBasis) {
        match self {
            NoiseCase::GaussGauss => (ComponentDist::Gaussian, NoiseBasis::Pixel),
            NoiseCase::GaussUniform => (ComponentDist::Uniform, NoiseBasis::Pixel),
            NoiseCase::GaussHaarUniform => (ComponentDist::Uniform, NoiseBasis::Haar),
        }
    }
}

/// Prior covariance families available to sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorKind {
    /// Covariance square root is the circulant convolution with the
    /// compact bump kernel; rough, slowly decaying spectrum.
    BumpConvolution,
    /// Laplacian power spectrum `(1 + 4 pi k^2)^{-s/2}`.
    Laplacian { s: f64 },
}

/// Forward operators available to sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardChoice {
    Identity,
    Blur { width: f64 },
}

/// Full description of a decay experiment.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub case: NoiseCase,
    pub grid_sizes: Vec<usize>,
    pub sample_sizes: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub sigma: f64,
    pub kernel_c: f64,
    pub prior: PriorKind,
    pub forward: ForwardChoice,
    /// Distribute cells over threads (needs the `parallel` feature to
    /// have any effect). Results do not depend on this flag.
    pub parallel: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            case: NoiseCase::GaussGauss,
            grid_sizes: vec![64, 256],
            sample_sizes: FULL_SAMPLE_SIZES.to_vec(),
            reps: 30,
            master_seed: DEFAULT_SEED,
            sigma: 0.05,
            kernel_c: 0.2,
            prior: PriorKind::BumpConvolution,
            forward: ForwardChoice::Identity,
            parallel: true,
        }
    }
}

impl SweepConfig {
    /// The reduced configuration: one small grid, smaller sample sizes,
    /// ten repetitions. Finishes in minutes on one core.
    pub fn quick() -> Self {
        SweepConfig {
            grid_sizes: vec![32],
            sample_sizes: QUICK_SAMPLE_SIZES.to_vec(),
            reps: 10,
            ..SweepConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_sizes.is_empty() {
            return Err(Error::Config("no grid sizes given".into()));
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::Config("no sample sizes given".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "sample sizes must be strictly increasing".into(),
            ));
        }
        if self.sample_sizes[0] < 2 {
            return Err(Error::Config("sample sizes must be at least 2".into()));
        }
        if self.reps == 0 {
            return Err(Error::Config("need at least one repetition".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "noise level must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.kernel_c > 0.0 && self.kernel_c <= 0.5) {
            return Err(Error::Config(format!(
                "kernel radius must lie in (0, 1/2], got {}",
                self.kernel_c
            )));
        }
        for &n in &self.grid_sizes {
            if n < 2 {
                return Err(Error::Config(format!("grid size {n} is too small")));
            }
            if self.case == NoiseCase::GaussHaarUniform && !n.is_power_of_two() {
                return Err(Error::Config(format!(
                    "case c draws noise in the Haar basis; grid size {n} is not a power of two"
                )));
            }
        }
        Ok(())
    }

    /// Builds the models and coefficient-space instance for one grid size.
    pub fn build_models(&self, n: usize) -> Result<(ProblemInstance, PriorModel, NoiseModel)> {
        let grid = Grid::new(n)?;
        let cov_sqrt = match self.prior {
            PriorKind::BumpConvolution => bump_prior_cov_sqrt(grid, self.kernel_c)?,
            PriorKind::Laplacian { s } => laplacian_cov_sqrt(grid, s)?,
        };
        let prior = PriorModel::new(triangle_mean(grid), cov_sqrt, ComponentDist::Gaussian)?;
        let (dist, basis) = self.case.noise_parts();
        let noise = NoiseModel::new(self.sigma, dist, basis)?;
        let forward = match self.forward {
            ForwardChoice::Identity => ForwardOp::identity(grid),
            ForwardChoice::Blur { width } => ForwardOp::circulant_blur(grid, width)?,
        };
        let inst = ProblemInstance::from_models(&forward, &prior, &noise)?;
        Ok((inst, prior, noise))
    }
}

/// One successful sweep cell. `excess_*` are clamped at zero for
/// reporting; the raw differences are kept alongside for debugging.
#[derive(Debug, Clone, Copy)]
pub struct CellResult {
    pub n: usize,
    pub m: usize,
    pub rep: usize,
    pub excess_sup: f64,
    pub excess_unsup: f64,
    pub raw_excess_sup: f64,
    pub raw_excess_unsup: f64,
    pub clamp_warnings: usize,
}

/// One failed sweep cell.
#[derive(Debug, Clone)]
pub struct CellFailure {
    pub n: usize,
    pub m: usize,
    pub rep: usize,
    pub message: String,
}

/// Mean/stddev of both excesses over the repetitions of one (N, m) cell.
#[derive(Debug, Clone, Copy)]
pub struct CellSummary {
    pub n: usize,
    pub m: usize,
    pub mean_sup: f64,
    pub std_sup: f64,
    pub mean_unsup: f64,
    pub std_unsup: f64,
    pub reps: usize,
}

/// Fitted decay slopes for one grid size; `None` when the log-log fit is
/// undefined (fewer than three sample sizes, or a mean excess of zero).
#[derive(Debug, Clone, Copy)]
pub struct GridSlopes {
    pub n: usize,
    pub sup: Option<SlopeFit>,
    pub unsup: Option<SlopeFit>,
}

/// Everything a sweep produces.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub summaries: Vec<CellSummary>,
    pub slopes: Vec<GridSlopes>,
    /// Minimal risk per grid size, the baseline the excesses refer to.
    pub minimal_risks: Vec<(usize, f64)>,
}

impl SweepResult {
    /// Summary rows belonging to one grid size, ordered by sample size.
    pub fn summaries_for(&self, n: usize) -> Vec<&CellSummary> {
        self.summaries.iter().filter(|s| s.n == n).collect()
    }
}

/// The freshly finished cells of one (grid size, sample size) group,
/// handed to a sweep observer right after the group completes.
#[derive(Debug, Clone, Copy)]
pub struct GroupResult<'a> {
    pub n: usize,
    pub m: usize,
    pub cells: &'a [CellResult],
    pub failures: &'a [CellFailure],
}

/// Runs every (grid, sample size, repetition) cell of the configuration.
///
/// Individual cell failures are recorded and tolerated up to 10% of all
/// cells; beyond that the sweep aborts with the first failure message.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    run_sweep_with(config, |_| Ok(()))
}

/// [`run_sweep`] with an observer invoked after each (N, m) group, in
/// configuration order. Lets callers stream results out as they complete;
/// an observer error aborts the sweep.
pub fn run_sweep_with(
    config: &SweepConfig,
    mut observer: impl FnMut(GroupResult<'_>) -> Result<()>,
) -> Result<SweepResult> {
    config.validate()?;

    let mut setups = Vec::new();
    for &n in &config.grid_sizes {
        let (inst, prior, noise) = config.build_models(n)?;
        let lstar = minimal_risk(&inst)?;
        setups.push(CellSetup {
            n,
            inst,
            prior,
            noise,
            lstar,
        });
    }

    let total = setups.len() * config.sample_sizes.len() * config.reps;
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (setup_idx, setup) in setups.iter().enumerate() {
        for (m_index, &m) in config.sample_sizes.iter().enumerate() {
            let jobs: Vec<CellJob> = (0..config.reps)
                .map(|rep| CellJob {
                    setup_idx,
                    m,
                    rep,
                    seed: mix_seed(&[
                        config.master_seed,
                        setup.n as u64,
                        m_index as u64,
                        rep as u64,
                    ]),
                })
                .collect();
            let outcomes = run_jobs(config, &setups, &jobs);

            let cell_start = cells.len();
            let failure_start = failures.len();
            for (job, outcome) in jobs.iter().zip(outcomes) {
                match outcome {
                    Ok(cell) => cells.push(cell),
                    Err(e) => failures.push(CellFailure {
                        n: setup.n,
                        m: job.m,
                        rep: job.rep,
                        message: e.to_string(),
                    }),
                }
            }
            observer(GroupResult {
                n: setup.n,
                m,
                cells: &cells[cell_start..],
                failures: &failures[failure_start..],
            })?;

            if failures.len() * 10 > total {
                return Err(Error::SweepFailed {
                    failed: failures.len(),
                    total,
                    first: failures[0].message.clone(),
                });
            }
        }
    }

    let summaries = summarize(config, &cells);
    let slopes = config
        .grid_sizes
        .iter()
        .map(|&n| {
            let rows: Vec<&CellSummary> = summaries.iter().filter(|s| s.n == n).collect();
            let ms: Vec<usize> = rows.iter().map(|s| s.m).collect();
            let sup: Vec<f64> = rows.iter().map(|s| s.mean_sup).collect();
            let unsup: Vec<f64> = rows.iter().map(|s| s.mean_unsup).collect();
            GridSlopes {
                n,
                sup: fit_slope(&ms, &sup).ok(),
                unsup: fit_slope(&ms, &unsup).ok(),
            }
        })
        .collect();
    Ok(SweepResult {
        config: config.clone(),
        cells,
        failures,
        summaries,
        slopes,
        minimal_risks: setups.iter().map(|s| (s.n, s.lstar)).collect(),
    })
}

struct CellSetup {
    n: usize,
    inst: ProblemInstance,
    prior: PriorModel,
    noise: NoiseModel,
    lstar: f64,
}

struct CellJob {
    setup_idx: usize,
    m: usize,
    rep: usize,
    seed: u64,
}

type CellOutcome = Result<CellResult>;

#[cfg(feature = "parallel")]
fn run_jobs(config: &SweepConfig, setups: &[CellSetup], jobs: &[CellJob]) -> Vec<CellOutcome> {
    if config.parallel {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|job| run_cell(&setups[job.setup_idx], job))
            .collect()
    } else {
        jobs.iter()
            .map(|job| run_cell(&setups[job.setup_idx], job))
            .collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn run_jobs(_config: &SweepConfig, setups: &[CellSetup], jobs: &[CellJob]) -> Vec<CellOutcome> {
    jobs.iter()
        .map(|job| run_cell(&setups[job.setup_idx], job))
        .collect()
}

/// Draws the training set for one cell and learns the regularizer both
/// ways. A learned risk below the minimal risk beyond roundoff (1e-12)
/// would contradict optimality and is reported as a cell failure.
fn run_cell(setup: &CellSetup, job: &CellJob) -> CellOutcome {
    let grid = setup.prior.grid();
    let n = grid.len();

    let mut rng_x = ChaCha8Rng::seed_from_u64(job.seed);
    rng_x.set_stream(0);
    let mut rng_eps = ChaCha8Rng::seed_from_u64(job.seed);
    rng_eps.set_stream(1);

    let identity_forward = setup.inst.a == DMatrix::identity(n, n);
    let mut acc = MomentAccumulator::with_cross(n);
    let mut left = job.m;
    while left > 0 {
        let cols = BLOCK_COLS.min(left);
        let x = setup.prior.sample_block(cols, &mut rng_x);
        let eps = setup.noise.sample_block(grid, cols, &mut rng_eps)?;
        let y = if identity_forward {
            &x + eps
        } else {
            &setup.inst.a * &x + eps
        };
        acc.push_block(&x, &y)?;
        left -= cols;
    }
    let mom = acc.finalize()?;

    let pair = pair_from_moments(mom.mean_x.clone(), &mom.cov_x)?;
    let risk_unsup = pair_risk(&pair, &setup.inst)?;

    let fit = supervised_fit_from_moments(&mom, &setup.inst)?;

    let to_excess = |risk: f64| -> Result<f64> {
        let excess = risk - setup.lstar;
        if excess < -1e-12 {
            return Err(Error::InvalidModel(format!(
                "learned risk {risk:.6e} fell below the minimal risk {:.6e}",
                setup.lstar
            )));
        }
        Ok(excess)
    };

    let raw_excess_sup = to_excess(fit.risk)?;
    let raw_excess_unsup = to_excess(risk_unsup)?;
    Ok(CellResult {
        n: setup.n,
        m: job.m,
        rep: job.rep,
        excess_sup: raw_excess_sup.max(0.0),
        excess_unsup: raw_excess_unsup.max(0.0),
        raw_excess_sup,
        raw_excess_unsup,
        clamp_warnings: fit.clamp_warnings,
    })
}

fn summarize(config: &SweepConfig, cells: &[CellResult]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for &n in &config.grid_sizes {
        for &m in &config.sample_sizes {
            let sup: Vec<f64> = cells
                .iter()
                .filter(|c| c.n == n && c.m == m)
                .map(|c| c.excess_sup)
                .collect();
            let unsup: Vec<f64> = cells
                .iter()
                .filter(|c| c.n == n && c.m == m)
                .map(|c| c.excess_unsup)
                .collect();
            if sup.is_empty() {
                continue;
            }
            let (mean_sup, std_sup) = mean_std(&sup);
            let (mean_unsup, std_unsup) = mean_std(&unsup);
            out.push(CellSummary {
                n,
                m,
                mean_sup,
                std_sup,
                mean_unsup,
                std_unsup,
                reps: sup.len(),
            });
        }
    }
    out
}

/// Sample mean and standard deviation (with the `1/(k-1)` normalization).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, var.sqrt())
}

/// Ordinary least squares of `log(value)` against `log(m)`.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_slope(ms: &[usize], values: &[f64]) -> Result<SlopeFit> {
    if ms.len() != values.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", ms.len()),
            got: format!("{}", values.len()),
        });
    }
    if ms.len() < 3 {
        return Err(Error::Config("slope fit needs at least three points".into()));
    }
    for (&m, &v) in ms.iter().zip(values) {
        if !(v > 0.0) {
            return Err(Error::NonPositiveValue { m, value: v });
        }
    }
    let xs: Vec<f64> = ms.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Decay slope of the mean excess for one grid size and one learner.
pub fn sweep_slope(result: &SweepResult, n: usize, supervised: bool) -> Result<SlopeFit> {
    let rows = result.summaries_for(n);
    let ms: Vec<usize> = rows.iter().map(|s| s.m).collect();
    let vals: Vec<f64> = rows
        .iter()
        .map(|s| if supervised { s.mean_sup } else { s.mean_unsup })
        .collect();
    fit_slope(&ms, &vals)
}

/// How two grid sizes of one sweep compare.
#[derive(Debug, Clone)]
pub struct DiscretizationReport {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// Per sample size: (m, coarse mean, fine mean, max directional ratio)
    /// for the unsupervised learner.
    pub unsup_rows: Vec<(usize, f64, f64, f64)>,
    pub max_unsup_ratio: f64,
    pub slope_diff_unsup: f64,
    pub slope_diff_sup: f64,
    /// Set when some unsupervised ratio exceeds 2.
    pub ratio_flag: bool,
    /// Set when a learner's slopes differ by more than 0.15.
    pub slope_flag_unsup: bool,
    pub slope_flag_sup: bool,
}

/// Compares the first two grid sizes of a sweep: excesses should be
/// resolution-independent, so mismatched levels or decay rates are flagged.
pub fn compare_discretizations(result: &SweepResult) -> Result<DiscretizationReport> {
    if result.config.grid_sizes.len() < 2 {
        return Err(Error::Config(
            "discretization comparison needs two grid sizes".into(),
        ));
    }
    let n_coarse = result.config.grid_sizes[0];
    let n_fine = result.config.grid_sizes[1];
    let coarse = result.summaries_for(n_coarse);
    let fine = result.summaries_for(n_fine);
    if coarse.len() != fine.len() {
        return Err(Error::Config(
            "grid sizes completed different sample-size sets".into(),
        ));
    }

    let mut unsup_rows = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for (c, f) in coarse.iter().zip(&fine) {
        let ratio = if c.mean_unsup > 0.0 && f.mean_unsup > 0.0 {
            (c.mean_unsup / f.mean_unsup).max(f.mean_unsup / c.mean_unsup)
        } else {
            f64::INFINITY
        };
        max_ratio = max_ratio.max(ratio);
        unsup_rows.push((c.m, c.mean_unsup, f.mean_unsup, ratio));
    }

    let slope_diff_unsup = (sweep_slope(result, n_coarse, false)?.slope
        - sweep_slope(result, n_fine, false)?.slope)
        .abs();
    let slope_diff_sup = (sweep_slope(result, n_coarse, true)?.slope
        - sweep_slope(result, n_fine, true)?.slope)
        .abs();

    Ok(DiscretizationReport {
        n_coarse,
        n_fine,
        unsup_rows,
        max_unsup_ratio: max_ratio,
        slope_diff_unsup,
        slope_diff_sup,
        ratio_flag: max_ratio > 2.0,
        slope_flag_unsup: slope_diff_unsup > 0.15,
        slope_flag_sup: slope_diff_sup > 0.15,
    })
}
