//! The five subcommands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tikreg::experiment::{fit_slope, run_sweep_with, NoiseCase, SlopeFit, SweepConfig};
use tikreg::learn::{
    concentration_curve, pair_from_moments, supervised_fit_from_moments, MomentAccumulator,
    BLOCK_COLS,
};
use tikreg::linalg::SymMatrix;
use tikreg::model::{
    bump_prior_cov_sqrt, haar_forward, haar_inverse, laplacian_cov_sqrt, triangle_mean,
    ComponentDist, ForwardOp, Grid, GridSignal, NoiseModel, PriorModel,
};
use tikreg::tikhonov::{
    build_reconstructor, minimal_risk, optimal_pair, pair_risk, AffineReconstructor,
    ProblemInstance,
};
use tikreg::{Error, Result};

use crate::config::{self, ForwardFlag, LearnerFlag, PriorFlag};
use crate::output::{fmt, io_err, read_csv_column, read_pair_file, write_provenance};
use crate::plot;

#[derive(clap::Args, Debug)]
pub struct RiskArgs {
    /// Discretization size; 1 is allowed with the unit prior.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// White-noise level.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Prior covariance: unit, bump[:c] or laplacian[:s].
    #[arg(long, default_value = "bump")]
    pub prior: String,
    /// Forward operator: identity or blur[:width].
    #[arg(long, default_value = "identity")]
    pub forward: String,
    /// Evaluate the pair in this file: first data line is h (comma
    /// separated), then the n rows of B.
    #[arg(long, value_name = "PATH")]
    pub pair_file: Option<PathBuf>,
}

/// Builds the prior over a grid from the flag value.
fn grid_prior(grid: Grid, flag: PriorFlag) -> Result<PriorModel> {
    match flag {
        PriorFlag::Unit => PriorModel::new(
            GridSignal::zeros(grid),
            SymMatrix::identity(grid.len()),
            ComponentDist::Gaussian,
        ),
        PriorFlag::Bump { c } => PriorModel::new(
            triangle_mean(grid),
            bump_prior_cov_sqrt(grid, c)?,
            ComponentDist::Gaussian,
        ),
        PriorFlag::Laplacian { s } => PriorModel::new(
            triangle_mean(grid),
            laplacian_cov_sqrt(grid, s)?,
            ComponentDist::Gaussian,
        ),
    }
}

fn build_forward(grid: Grid, flag: ForwardFlag) -> Result<ForwardOp> {
    match flag {
        ForwardFlag::Identity => Ok(ForwardOp::identity(grid)),
        ForwardFlag::Blur { width } => ForwardOp::circulant_blur(grid, width),
    }
}

/// One instance from the single-instance flags. Grid-based priors need
/// n >= 2; the unit prior with identity forward works for any n >= 1.
fn single_instance(
    n: usize,
    sigma: f64,
    prior: PriorFlag,
    forward: ForwardFlag,
) -> Result<ProblemInstance> {
    if !(sigma > 0.0) {
        return Err(Error::Config(format!(
            "noise level must be positive, got {sigma}"
        )));
    }
    if n == 1 {
        if prior != PriorFlag::Unit || forward != ForwardFlag::Identity {
            return Err(Error::Config(
                "n = 1 supports only the unit prior with the identity forward".into(),
            ));
        }
        return ProblemInstance::from_operator_units(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            SymMatrix::identity(1),
            SymMatrix::identity(1).scale(sigma * sigma),
        );
    }
    let grid = Grid::new(n)?;
    let prior = grid_prior(grid, prior)?;
    let noise = NoiseModel::new(sigma, ComponentDist::Gaussian, tikreg::model::NoiseBasis::Pixel)?;
    let fwd = build_forward(grid, forward)?;
    ProblemInstance::from_models(&fwd, &prior, &noise)
}

pub fn cmd_risk(args: &RiskArgs) -> Result<()> {
    let prior = config::parse_prior(&args.prior)?;
    let forward = config::parse_forward(&args.forward)?;
    let inst = single_instance(args.n, args.sigma, prior, forward)?;
    let lstar = minimal_risk(&inst)?;
    println!("n = {}", args.n);
    println!("L* = {}", fmt(lstar));
    if let Some(path) = &args.pair_file {
        let pair = read_pair_file(path, args.n)?;
        let risk = pair_risk(&pair, &inst)?;
        println!("L(pair) = {}", fmt(risk));
        println!("excess = {}", fmt(risk - lstar));
    }
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct SweepArgs {
    /// Experiment settings file (sectioned key = value text; see below).
    #[arg(long, value_name = "PATH", conflicts_with_all = ["quick", "paper_default"])]
    pub config: Option<PathBuf>,
    /// Reduced preset: N = 32, m up to 1e5, 10 repetitions.
    #[arg(long, conflicts_with = "paper_default")]
    pub quick: bool,
    /// Full preset: N in {64, 256}, m up to 3e5, 30 repetitions.
    #[arg(long)]
    pub paper_default: bool,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid sizes, comma separated.
    #[arg(long, value_delimiter = ',', value_name = "N[,N...]")]
    pub n: Option<Vec<usize>>,
    /// White-noise level.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Noise case: a (Gaussian), b (uniform), c (uniform in the Haar basis).
    #[arg(long)]
    pub case: Option<String>,
    /// Directory for sweep.csv, summary.csv and decay.svg.
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub out: PathBuf,
}

fn create_csv(path: &Path, master_seed: u64, settings: &str) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    write_provenance(&mut w, master_seed, settings).map_err(|e| io_err(path, e))?;
    Ok(w)
}

fn show_slope(fit: Option<SlopeFit>) -> String {
    match fit {
        Some(f) => format!("{:.3}", f.slope),
        None => "n/a".to_string(),
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = if let Some(path) = &args.config {
        config::load_config(path)?
    } else if args.quick {
        SweepConfig::quick()
    } else if args.paper_default {
        SweepConfig::default()
    } else {
        return Err(Error::Config(
            "choose a configuration: --config FILE, --quick or --paper-default".into(),
        ));
    };
    config::apply_overrides(
        &mut cfg,
        &config::Overrides {
            seed: args.seed,
            grid_sizes: args.n.as_deref(),
            sigma: args.sigma,
            case: args.case.as_deref(),
        },
    )?;
    cfg.validate()?;
    let settings = format!("{cfg:?}");

    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let sweep_path = args.out.join("sweep.csv");
    let mut w = create_csv(&sweep_path, cfg.master_seed, &settings)?;
    writeln!(w, "case,N,m,rep,excess_sup,excess_unsup").map_err(|e| io_err(&sweep_path, e))?;

    let label = cfg.case.label();
    // Rows are written and flushed group by group, so an interrupted sweep
    // still leaves every finished (N, m) group on disk.
    let result = run_sweep_with(&cfg, |group| {
        for c in group.cells {
            writeln!(
                w,
                "{label},{},{},{},{},{}",
                c.n,
                c.m,
                c.rep,
                fmt(c.excess_sup),
                fmt(c.excess_unsup)
            )
            .map_err(|e| io_err(&sweep_path, e))?;
        }
        w.flush().map_err(|e| io_err(&sweep_path, e))?;
        eprintln!("N={} m={}: {} cells done", group.n, group.m, group.cells.len());
        Ok(())
    })?;
    drop(w);

    let summary_path = args.out.join("summary.csv");
    let mut w = create_csv(&summary_path, cfg.master_seed, &settings)?;
    writeln!(w, "case,N,m,mean_sup,std_sup,mean_unsup,std_unsup")
        .map_err(|e| io_err(&summary_path, e))?;
    for s in &result.summaries {
        writeln!(
            w,
            "{label},{},{},{},{},{},{}",
            s.n,
            s.m,
            fmt(s.mean_sup),
            fmt(s.std_sup),
            fmt(s.mean_unsup),
            fmt(s.std_unsup)
        )
        .map_err(|e| io_err(&summary_path, e))?;
    }
    w.flush().map_err(|e| io_err(&summary_path, e))?;
    drop(w);

    // The plot is rendered from the summary file text, never from live
    // state, so regenerating it from the CSV gives identical bytes.
    let summary_text =
        std::fs::read_to_string(&summary_path).map_err(|e| io_err(&summary_path, e))?;
    let svg_path = args.out.join("decay.svg");
    std::fs::write(&svg_path, plot::render_decay_svg(&summary_text)?)
        .map_err(|e| io_err(&svg_path, e))?;

    for f in &result.failures {
        eprintln!(
            "warning: cell N={} m={} rep {} failed: {}",
            f.n, f.m, f.rep, f.message
        );
    }
    println!(
        "case {label}: {} cells, {} failures",
        result.cells.len(),
        result.failures.len()
    );
    for (n, lstar) in &result.minimal_risks {
        println!("N={n}: minimal risk {}", fmt(*lstar));
    }
    for gs in &result.slopes {
        println!(
            "N={}: slope sup {}, slope unsup {}",
            gs.n,
            show_slope(gs.sup),
            show_slope(gs.unsup)
        );
    }
    println!(
        "wrote {}, {}, {}",
        sweep_path.display(),
        summary_path.display(),
        svg_path.display()
    );
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct ReconstructArgs {
    /// Discretization size.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// White-noise level.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Noise case: a (Gaussian), b (uniform), c (uniform in the Haar basis).
    #[arg(long, default_value = "a")]
    pub case: String,
    /// Prior covariance: unit, bump[:c] or laplacian[:s].
    #[arg(long, default_value = "bump")]
    pub prior: String,
    /// Forward operator: identity or blur[:width].
    #[arg(long, default_value = "identity")]
    pub forward: String,
    /// Seed for the displayed draw and the training set.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Reconstructor: optimal, supervised:m or unsupervised:m.
    #[arg(long, default_value = "optimal")]
    pub learner: String,
    /// Directory for signals.csv.
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub out: PathBuf,
}

/// Learns the requested reconstructor. Training draws use RNG streams 2
/// and 3, leaving streams 0 and 1 for the displayed sample.
fn learn_reconstructor(
    learner: LearnerFlag,
    inst: &ProblemInstance,
    prior: &PriorModel,
    noise: &NoiseModel,
    seed: u64,
) -> Result<AffineReconstructor> {
    let grid = prior.grid();
    let n = grid.len();
    match learner {
        LearnerFlag::Optimal => build_reconstructor(&optimal_pair(inst)?, inst),
        LearnerFlag::Unsupervised { m } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2);
            let mut acc = MomentAccumulator::new(n);
            let mut left = m;
            while left > 0 {
                let cols = BLOCK_COLS.min(left);
                acc.push_x_block(&prior.sample_block(cols, &mut rng))?;
                left -= cols;
            }
            let (mean, cov) = acc.finalize_marginal()?;
            build_reconstructor(&pair_from_moments(mean, &cov)?, inst)
        }
        LearnerFlag::Supervised { m } => {
            let mut rng_x = ChaCha8Rng::seed_from_u64(seed);
            rng_x.set_stream(2);
            let mut rng_eps = ChaCha8Rng::seed_from_u64(seed);
            rng_eps.set_stream(3);
            let mut acc = MomentAccumulator::with_cross(n);
            let mut left = m;
            while left > 0 {
                let cols = BLOCK_COLS.min(left);
                let x = prior.sample_block(cols, &mut rng_x);
                let y = &inst.a * &x + noise.sample_block(grid, cols, &mut rng_eps)?;
                acc.push_block(&x, &y)?;
                left -= cols;
            }
            Ok(supervised_fit_from_moments(&acc.finalize()?, inst)?.projected)
        }
    }
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    let case = NoiseCase::from_label(&args.case)?;
    let learner = config::parse_learner(&args.learner)?;
    let grid = Grid::new(args.n)?;
    let prior = grid_prior(grid, config::parse_prior(&args.prior)?)?;
    let (dist, basis) = case.noise_parts();
    let noise = NoiseModel::new(args.sigma, dist, basis)?;
    let fwd = build_forward(grid, config::parse_forward(&args.forward)?)?;
    let inst = ProblemInstance::from_models(&fwd, &prior, &noise)?;

    let rec = learn_reconstructor(learner, &inst, &prior, &noise, args.seed)?;

    let mut rng_x = ChaCha8Rng::seed_from_u64(args.seed);
    rng_x.set_stream(0);
    let mut rng_eps = ChaCha8Rng::seed_from_u64(args.seed);
    rng_eps.set_stream(1);
    let x = prior.sample_block(1, &mut rng_x).column(0).clone_owned();
    let eps = noise.sample_block(grid, 1, &mut rng_eps)?.column(0).clone_owned();
    let y = &inst.a * &x + eps;
    let xhat = rec.apply(&y)?;

    let settings = format!(
        "reconstruct n={} sigma={} case={} prior={} forward={} seed={} learner={}",
        args.n, args.sigma, args.case, args.prior, args.forward, args.seed, args.learner
    );
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let path = args.out.join("signals.csv");
    let mut w = create_csv(&path, args.seed, &settings)?;
    writeln!(w, "t,x,y,xhat").map_err(|e| io_err(&path, e))?;
    for i in 0..args.n {
        writeln!(
            w,
            "{},{},{},{}",
            fmt(grid.midpoint(i)),
            fmt(x[i]),
            fmt(y[i]),
            fmt(xhat[i])
        )
        .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let err_y = (&y - &x).norm_squared() / args.n as f64;
    let err_hat = (&xhat - &x).norm_squared() / args.n as f64;
    println!("||y - x||^2 = {}", fmt(err_y));
    println!("||xhat - x||^2 = {}", fmt(err_hat));
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct ConcentrationArgs {
    /// Discretization size.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Prior covariance: unit, bump[:c] or laplacian[:s].
    #[arg(long, default_value = "bump")]
    pub prior: String,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Repetitions averaged per sample size (default 10, quick 5).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Fewer sample sizes and repetitions.
    #[arg(long)]
    pub quick: bool,
    /// Directory for concentration.csv.
    #[arg(long, default_value = ".", value_name = "DIR")]
    pub out: PathBuf,
}

pub fn cmd_concentration(args: &ConcentrationArgs) -> Result<()> {
    let ms: &[usize] = if args.quick {
        &[100, 316, 1000, 3162, 10000]
    } else {
        &[100, 316, 1000, 3162, 10000, 31623, 100000]
    };
    let reps = args.reps.unwrap_or(if args.quick { 5 } else { 10 });
    let grid = Grid::new(args.n)?;
    let prior = grid_prior(grid, config::parse_prior(&args.prior)?)?;
    let rows = concentration_curve(&prior, ms, reps, args.seed)?;

    let settings = format!(
        "concentration n={} prior={} seed={} reps={reps} ms={ms:?}",
        args.n, args.prior, args.seed
    );
    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let path = args.out.join("concentration.csv");
    let mut w = create_csv(&path, args.seed, &settings)?;
    writeln!(w, "m,mean_dev_mu,mean_dev_sigma").map_err(|e| io_err(&path, e))?;
    for r in &rows {
        writeln!(w, "{},{},{}", r.m, fmt(r.dev_mu), fmt(r.dev_sigma))
            .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let sizes: Vec<usize> = rows.iter().map(|r| r.m).collect();
    let mu: Vec<f64> = rows.iter().map(|r| r.dev_mu).collect();
    let sigma: Vec<f64> = rows.iter().map(|r| r.dev_sigma).collect();
    println!(
        "slope of ||mu_hat - mu||: {}",
        show_slope(fit_slope(&sizes, &mu).ok())
    );
    println!(
        "slope of ||cov_hat - cov||: {}",
        show_slope(fit_slope(&sizes, &sigma).ok())
    );
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct TransformArgs {
    /// Input CSV file.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Zero-based column index to transform.
    #[arg(long, default_value_t = 0)]
    pub column: usize,
    /// Apply the synthesis (inverse) transform.
    #[arg(long)]
    pub inverse: bool,
}

pub fn cmd_transform(args: &TransformArgs) -> Result<()> {
    let values = read_csv_column(&args.input, args.column)?;
    let grid = Grid::new(values.len())?;
    let signal = GridSignal::new(grid, DVector::from_vec(values))?;
    let out = if args.inverse {
        haar_inverse(&signal)?
    } else {
        haar_forward(&signal)?
    };
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for v in out.coeffs.iter() {
        writeln!(w, "{}", fmt(*v)).map_err(|e| io_err(&args.input, e))?;
    }
    Ok(())
}
