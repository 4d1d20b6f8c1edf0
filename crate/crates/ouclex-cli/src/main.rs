//! Batch command-line front end for the `ouclex` toolkit: bound
//! reports, optimizer-table and figure data, simulations, decorrelation
//! studies, cluster verification, and inequality suites.
//!
//! Every command is deterministic given its full flag set, including
//! `--seed` (fixed default 7, never time-based, so batch runs are
//! reproducible). A JSON file of defaults may be supplied through
//! `--config`; explicit flags override the file, the file overrides the
//! built-in defaults.
//!
//! Machine-readable JSON documents carry a `schema_version` field; CSV
//! outputs use fixed headers and 17-significant-digit floats.
//!
//! Exit codes: 0 success, 2 input or domain error, 3 verification
//! failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ouclex::bounds::{bound_report, b1_of_delta, b_eps, BoundReport, HypothesisConstants};
use ouclex::cluster::{cluster_sum, z_direct, ClusterConfig};
use ouclex::drift::{DriftKind, DriftSpec};
use ouclex::inequalities::{inequality_suite, ViolationReport};
use ouclex::optimize::{conjecture_check, reproduce_table, ConjectureReport, OptimumRecord};
use ouclex::ou::m_delta;
use ouclex::rng::stream_rng;
use ouclex::sim::{simulate_delay, simulate_reference, InitialHistory, SimConfig};
use ouclex::stats::{
    clt_check, estimate_covariance, fit_exponential, green_kubo_variance, CovarianceCurve, ExpFit,
    GreenKubo,
};
use ouclex::{MCEstimate, OUParams};

const SCHEMA_VERSION: u32 = 1;
const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Fixed default seed: acceptance runs are statistical, so the default
/// must be a documented constant rather than entropy.
const DEFAULT_SEED: u64 = 7;
const DEFAULT_LAMBDAS: [f64; 8] = [0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0];

#[derive(Parser)]
#[command(
    name = "ouclex",
    version,
    about = "Ergodicity toolkit for delay-perturbed Ornstein-Uhlenbeck diffusions",
    long_about = "Bound reports, optimizer tables, figure data, simulations, decorrelation \
                  studies, cluster-expansion verification, and inequality suites.\n\n\
                  Every command is deterministic given its full flag set including --seed \
                  (default 7). Exit codes: 0 success, 2 input/domain error, 3 verification \
                  failure."
)]
struct Cli {
    /// JSON file of parameter defaults; explicit flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the bound chain at one (lambda, sigma, delta, epsilon); emits JSON.
    Bounds(BoundsArgs),
    /// Emit curve data as CSV `x,y` for the mdelta, beps, or b1 figures.
    Figures(FiguresArgs),
    /// Reproduce the (lambda, delta_star, b1_star) optimizer table.
    Table(TableArgs),
    /// Simulate the reference or delay-perturbed diffusion; CSV `t,x`.
    Simulate(SimulateArgs),
    /// Covariance decay, exponential fit, and CLT diagnostics of a simulation.
    Decorrelate(DecorrelateArgs),
    /// Verify the cluster-expansion identity for the normalization constant.
    ClusterVerify(ClusterVerifyArgs),
    /// Run the randomized suites for the elementary inequalities.
    IneqCheck(IneqCheckArgs),
}

/// Flags shared by every subcommand; each command reads the subset it
/// documents and ignores the rest.
#[derive(Args, Clone, Default)]
struct Common {
    /// Relaxation rate of the reference process (default 1).
    #[arg(long)]
    lambda: Option<f64>,
    /// Diffusion coefficient of the reference process (default sqrt(2)).
    #[arg(long)]
    sigma: Option<f64>,
    /// Hypercontractivity onset time; must exceed ln(7)/lambda (default 2/lambda).
    #[arg(long)]
    delta: Option<f64>,
    /// Target epsilon of the bound chain (default 1).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Block length of the cluster decomposition (default 6).
    #[arg(long)]
    a: Option<f64>,
    /// Delay horizon of the drift (default 1).
    #[arg(long)]
    t0: Option<f64>,
    /// Sup-norm bound of the drift; 0 selects the unperturbed reference (default 0).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Time step (default depends on the command).
    #[arg(long)]
    dt: Option<f64>,
    /// Monte Carlo sample count (default depends on the command).
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
    /// 64-bit RNG seed (fixed default 7, never time-based).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output format where the command supports both.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Clone)]
struct BoundsArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct FiguresArgs {
    #[command(flatten)]
    common: Common,
    /// Which curve to tabulate.
    #[arg(long, value_enum)]
    which: Option<FigureKind>,
    /// Abscissa range, inclusive, as LO:HI.
    #[arg(long, value_parser = parse_range)]
    range: Option<RangeArg>,
    /// Number of rows (default 100, minimum 2).
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Clone)]
struct TableArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Final retained time measured from 0 (default 100).
    #[arg(long)]
    horizon: Option<f64>,
    /// Discarded initial stretch (default 50/lambda).
    #[arg(long = "burn-in")]
    burn_in: Option<f64>,
    /// Drift functional used when amplitude > 0 (default occupation).
    #[arg(long, value_enum)]
    drift: Option<DriftChoice>,
    /// Lower edge of the set for occupation/indicator drifts (default -1).
    #[arg(long = "set-lo")]
    set_lo: Option<f64>,
    /// Upper edge of the set for occupation/indicator drifts (default 1).
    #[arg(long = "set-hi")]
    set_hi: Option<f64>,
    /// Pre-history: "stationary" or a constant level (default stationary).
    #[arg(long, value_parser = parse_initial)]
    initial: Option<InitialHistory>,
}

#[derive(Args, Clone)]
struct DecorrelateArgs {
    #[command(flatten)]
    common: Common,
    /// Final retained time measured from 0 (default 10000).
    #[arg(long)]
    horizon: Option<f64>,
    /// Discarded initial stretch (default 50/lambda).
    #[arg(long = "burn-in")]
    burn_in: Option<f64>,
    /// Drift functional used when amplitude > 0 (default occupation).
    #[arg(long, value_enum)]
    drift: Option<DriftChoice>,
    /// Lower edge of the set for occupation/indicator drifts (default -1).
    #[arg(long = "set-lo")]
    set_lo: Option<f64>,
    /// Upper edge of the set for occupation/indicator drifts (default 1).
    #[arg(long = "set-hi")]
    set_hi: Option<f64>,
    /// Pre-history: "stationary" or a constant level (default stationary).
    #[arg(long, value_parser = parse_initial)]
    initial: Option<InitialHistory>,
    /// Largest covariance lag in time units (default 5).
    #[arg(long = "max-lag")]
    max_lag: Option<f64>,
    /// Run the replica CLT check instead of a single-path covariance
    /// study; the value is the replica count (JSON only).
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Args, Clone)]
struct ClusterVerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Number of block pairs 2N in the window [-Na, Na) (default 1).
    #[arg(long = "n-blocks")]
    n_blocks: Option<u32>,
    /// Drift functional used when amplitude > 0 (default occupation).
    #[arg(long, value_enum)]
    drift: Option<DriftChoice>,
    /// Lower edge of the set for occupation/indicator drifts (default -1).
    #[arg(long = "set-lo")]
    set_lo: Option<f64>,
    /// Upper edge of the set for occupation/indicator drifts (default 1).
    #[arg(long = "set-hi")]
    set_hi: Option<f64>,
}

#[derive(Args, Clone)]
struct IneqCheckArgs {
    #[command(flatten)]
    common: Common,
    /// Random trials per suite (default 10000).
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FigureKind {
    /// Hypercontractivity constant as a function of delta.
    Mdelta,
    /// Admissible drift amplitude as a function of epsilon.
    Beps,
    /// Convergence-rate objective as a function of delta.
    B1,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum DriftChoice {
    Zero,
    IntegralSign,
    Occupation,
    LaggedSign,
    Indicator,
}

#[derive(Copy, Clone, Debug)]
struct RangeArg {
    lo: f64,
    hi: f64,
}

fn parse_range(s: &str) -> Result<RangeArg, String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("range must be finite with LO < HI, got {lo}:{hi}"));
    }
    Ok(RangeArg { lo, hi })
}

fn parse_initial(s: &str) -> Result<InitialHistory, String> {
    if s.eq_ignore_ascii_case("stationary") {
        return Ok(InitialHistory::StationaryDraw);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(InitialHistory::Constant(v)),
        _ => Err(format!("expected 'stationary' or a finite number, got '{s}'")),
    }
}

/// Defaults file accepted through `--config`. Keys mirror the flags;
/// keys irrelevant to the invoked command are ignored, unknown keys are
/// rejected.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    lambda: Option<f64>,
    sigma: Option<f64>,
    delta: Option<f64>,
    epsilon: Option<f64>,
    a: Option<f64>,
    t0: Option<f64>,
    amplitude: Option<f64>,
    dt: Option<f64>,
    n_samples: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    format: Option<Format>,
    which: Option<FigureKind>,
    range: Option<String>,
    points: Option<usize>,
    horizon: Option<f64>,
    burn_in: Option<f64>,
    drift: Option<DriftChoice>,
    set_lo: Option<f64>,
    set_hi: Option<f64>,
    initial: Option<String>,
    max_lag: Option<f64>,
    replicas: Option<usize>,
    n_blocks: Option<u32>,
    trials: Option<u64>,
}

struct CliError {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> CliError {
    CliError { code, message: message.into() }
}

impl From<ouclex::Error> for CliError {
    fn from(e: ouclex::Error) -> Self {
        fail(2, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        fail(2, format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        fail(2, format!("serialization error: {e}"))
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn out_path(c: &Common, f: &FileConfig) -> Option<PathBuf> {
    c.output.clone().or_else(|| f.output.clone())
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(out: &Option<PathBuf>, doc: &T) -> Result<(), CliError> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn build_drift(
    choice: DriftChoice,
    t0: f64,
    amplitude: f64,
    set_lo: f64,
    set_hi: f64,
) -> Result<DriftSpec, CliError> {
    let kind = match choice {
        DriftChoice::Zero => DriftKind::Zero,
        DriftChoice::IntegralSign => DriftKind::WindowIntegralSign,
        DriftChoice::Occupation => DriftKind::OccupationTime { lo: set_lo, hi: set_hi },
        DriftChoice::LaggedSign => DriftKind::LaggedSign,
        DriftChoice::Indicator => DriftKind::WindowIndicator { lo: set_lo, hi: set_hi },
    };
    Ok(DriftSpec::new(kind, t0, amplitude)?)
}

fn main() {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    };
    std::process::exit(code);
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file: FileConfig = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| fail(2, format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| fail(2, format!("invalid config {}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    match &cli.command {
        Cmd::Bounds(a) => cmd_bounds(&a.common, &file),
        Cmd::Figures(a) => cmd_figures(a, &file),
        Cmd::Table(a) => cmd_table(&a.common, &file),
        Cmd::Simulate(a) => cmd_simulate(a, &file),
        Cmd::Decorrelate(a) => cmd_decorrelate(a, &file),
        Cmd::ClusterVerify(a) => cmd_cluster_verify(a, &file),
        Cmd::IneqCheck(a) => cmd_ineq_check(a, &file),
    }
}

// ---------------------------------------------------------------- bounds

#[derive(Serialize)]
struct BoundsDoc {
    schema_version: u32,
    version: &'static str,
    lambda: f64,
    sigma: f64,
    delta: f64,
    c_p: f64,
    m_delta: f64,
    #[serde(flatten)]
    report: BoundReport,
}

fn cmd_bounds(c: &Common, f: &FileConfig) -> Result<(), CliError> {
    if pick(c.format, f.format, Format::Json) != Format::Json {
        return Err(fail(2, "bounds emits JSON only; drop --format csv"));
    }
    let lambda = pick(c.lambda, f.lambda, 1.0);
    let sigma = pick(c.sigma, f.sigma, std::f64::consts::SQRT_2);
    let p = OUParams::new(lambda, sigma)?;
    let delta = pick(c.delta, f.delta, 2.0 / lambda);
    let epsilon = pick(c.epsilon, f.epsilon, 1.0);
    let h = HypothesisConstants::from_ou(delta, &p)?;
    let report = bound_report(epsilon, &h)?;
    let doc = BoundsDoc {
        schema_version: SCHEMA_VERSION,
        version: VERSION,
        lambda,
        sigma,
        delta,
        c_p: h.c_p,
        m_delta: h.m_delta,
        report,
    };
    emit_json(&out_path(c, f), &doc)
}

// --------------------------------------------------------------- figures

fn cmd_figures(args: &FiguresArgs, f: &FileConfig) -> Result<(), CliError> {
    let c = &args.common;
    if pick(c.format, f.format, Format::Csv) != Format::Csv {
        return Err(fail(2, "figures emits CSV only; drop --format json"));
    }
    let which = args
        .which
        .or(f.which)
        .ok_or_else(|| fail(2, "figures requires --which (mdelta, beps, or b1)"))?;
    let range = match (args.range, &f.range) {
        (Some(r), _) => r,
        (None, Some(s)) => parse_range(s).map_err(|e| fail(2, format!("config range: {e}")))?,
        (None, None) => return Err(fail(2, "figures requires --range LO:HI")),
    };
    let points = pick(args.points, f.points, 100);
    if points < 2 {
        return Err(fail(2, format!("--points must be at least 2, got {points}")));
    }
    let lambda = pick(c.lambda, f.lambda, 1.0);
    let sigma = pick(c.sigma, f.sigma, std::f64::consts::SQRT_2);
    let p = OUParams::new(lambda, sigma)?;

    let curve: Box<dyn Fn(f64) -> f64> = match which {
        FigureKind::Mdelta | FigureKind::B1 => {
            let threshold = 7f64.ln() / lambda;
            if range.lo <= threshold {
                return Err(fail(
                    2,
                    format!(
                        "the curve is undefined for delta <= ln(7)/lambda = {threshold:.12}; \
                         choose a range above this threshold"
                    ),
                ));
            }
            if which == FigureKind::Mdelta {
                Box::new(move |x| m_delta(x, &p))
            } else {
                Box::new(move |x| b1_of_delta(x, &p))
            }
        }
        FigureKind::Beps => {
            if range.lo <= 0.0 {
                return Err(fail(2, "beps needs epsilon > 0; choose a positive range"));
            }
            let delta = pick(c.delta, f.delta, 2.0 / lambda);
            let h = HypothesisConstants::from_ou(delta, &p)?;
            Box::new(move |x| b_eps(x, &h))
        }
    };

    let mut w = sink(&out_path(c, f))?;
    writeln!(w, "x,y")?;
    for i in 0..points {
        let x = range.lo + (range.hi - range.lo) * i as f64 / (points - 1) as f64;
        writeln!(w, "{x:.16e},{:.16e}", curve(x))?;
    }
    w.flush()?;
    Ok(())
}

// ----------------------------------------------------------------- table

#[derive(Serialize)]
struct TableDoc {
    schema_version: u32,
    version: &'static str,
    rows: Vec<OptimumRecord>,
    /// Scale-invariance diagnostics; absent for a single-row table.
    conjecture: Option<ConjectureReport>,
}

fn cmd_table(c: &Common, f: &FileConfig) -> Result<(), CliError> {
    let lambdas: Vec<f64> = match c.lambda.or(f.lambda) {
        Some(l) => vec![l],
        None => DEFAULT_LAMBDAS.to_vec(),
    };
    let rows = reproduce_table(&lambdas)?;
    match pick(c.format, f.format, Format::Csv) {
        Format::Csv => {
            let mut w = sink(&out_path(c, f))?;
            writeln!(w, "lambda,delta_star,b1_star")?;
            for r in &rows {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", r.lambda, r.delta_star, r.b1_star)?;
            }
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let conjecture = if rows.len() >= 2 { Some(conjecture_check(&rows)?) } else { None };
            let doc = TableDoc {
                schema_version: SCHEMA_VERSION,
                version: VERSION,
                rows,
                conjecture,
            };
            emit_json(&out_path(c, f), &doc)
        }
    }
}

// -------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimulateDoc {
    schema_version: u32,
    version: &'static str,
    lambda: f64,
    sigma: f64,
    dt: f64,
    horizon: f64,
    burn_in: f64,
    seed: u64,
    drift: DriftSpec,
    start_time: f64,
    values: Vec<f64>,
}

struct SimSetup {
    p: OUParams,
    cfg: SimConfig,
    spec: DriftSpec,
}

/// Shared flag resolution for `simulate` and `decorrelate`.
#[allow(clippy::too_many_arguments)]
fn resolve_sim(
    c: &Common,
    f: &FileConfig,
    horizon: Option<f64>,
    burn_in: Option<f64>,
    drift: Option<DriftChoice>,
    set_lo: Option<f64>,
    set_hi: Option<f64>,
    initial: Option<InitialHistory>,
    default_horizon: f64,
) -> Result<SimSetup, CliError> {
    let lambda = pick(c.lambda, f.lambda, 1.0);
    let sigma = pick(c.sigma, f.sigma, std::f64::consts::SQRT_2);
    let p = OUParams::new(lambda, sigma)?;
    let initial = match initial {
        Some(v) => v,
        None => match &f.initial {
            Some(s) => parse_initial(s).map_err(|e| fail(2, format!("config initial: {e}")))?,
            None => InitialHistory::StationaryDraw,
        },
    };
    let cfg = SimConfig {
        dt: pick(c.dt, f.dt, 0.01),
        horizon: pick(horizon, f.horizon, default_horizon),
        burn_in: pick(burn_in, f.burn_in, SimConfig::default_burn_in(&p)),
        seed: pick(c.seed, f.seed, DEFAULT_SEED),
        initial_history: initial,
    };
    let amplitude = pick(c.amplitude, f.amplitude, 0.0);
    let t0 = pick(c.t0, f.t0, 1.0);
    let spec = if amplitude == 0.0 {
        DriftSpec::zero(t0)
    } else {
        build_drift(
            pick(drift, f.drift, DriftChoice::Occupation),
            t0,
            amplitude,
            pick(set_lo, f.set_lo, -1.0),
            pick(set_hi, f.set_hi, 1.0),
        )?
    };
    Ok(SimSetup { p, cfg, spec })
}

fn run_path(s: &SimSetup) -> Result<ouclex::SamplePath, CliError> {
    Ok(if s.spec.amplitude == 0.0 {
        simulate_reference(&s.p, &s.cfg)?
    } else {
        simulate_delay(&s.p, &s.spec, &s.cfg)?
    })
}

fn cmd_simulate(args: &SimulateArgs, f: &FileConfig) -> Result<(), CliError> {
    let c = &args.common;
    let s = resolve_sim(
        c,
        f,
        args.horizon,
        args.burn_in,
        args.drift,
        args.set_lo,
        args.set_hi,
        args.initial,
        100.0,
    )?;
    let path = run_path(&s)?;
    match pick(c.format, f.format, Format::Csv) {
        Format::Csv => {
            let mut w = sink(&out_path(c, f))?;
            path.write_csv(&mut w)?;
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let doc = SimulateDoc {
                schema_version: SCHEMA_VERSION,
                version: VERSION,
                lambda: s.p.lambda,
                sigma: s.p.sigma,
                dt: s.cfg.dt,
                horizon: s.cfg.horizon,
                burn_in: s.cfg.burn_in,
                seed: s.cfg.seed,
                drift: s.spec,
                start_time: path.start_time,
                values: path.values,
            };
            emit_json(&out_path(c, f), &doc)
        }
    }
}

// ----------------------------------------------------------- decorrelate

#[derive(Serialize)]
struct DecorrelateDoc {
    schema_version: u32,
    version: &'static str,
    lambda: f64,
    sigma: f64,
    dt: f64,
    horizon: f64,
    burn_in: f64,
    seed: u64,
    drift: DriftSpec,
    max_lag: f64,
    curve: CovarianceCurve,
    /// Weighted exponential fit; absent when too few lags are usable.
    fit: Option<ExpFit>,
    green_kubo: GreenKubo,
}

#[derive(Serialize)]
struct CltDoc {
    schema_version: u32,
    version: &'static str,
    lambda: f64,
    sigma: f64,
    dt: f64,
    horizon: f64,
    burn_in: f64,
    seed: u64,
    drift: DriftSpec,
    replicas: usize,
    empirical_variance: f64,
    green_kubo: GreenKubo,
    p_value: f64,
    mean_statistic: f64,
}

fn cmd_decorrelate(args: &DecorrelateArgs, f: &FileConfig) -> Result<(), CliError> {
    let c = &args.common;
    let s = resolve_sim(
        c,
        f,
        args.horizon,
        args.burn_in,
        args.drift,
        args.set_lo,
        args.set_hi,
        args.initial,
        10_000.0,
    )?;

    if let Some(replicas) = args.replicas.or(f.replicas) {
        if pick(c.format, f.format, Format::Json) != Format::Json {
            return Err(fail(2, "the replica CLT report emits JSON only"));
        }
        let report = clt_check(&s.p, &s.spec, &s.cfg, |x| x, replicas)?;
        let doc = CltDoc {
            schema_version: SCHEMA_VERSION,
            version: VERSION,
            lambda: s.p.lambda,
            sigma: s.p.sigma,
            dt: s.cfg.dt,
            horizon: s.cfg.horizon,
            burn_in: s.cfg.burn_in,
            seed: s.cfg.seed,
            drift: s.spec,
            replicas: report.replicas,
            empirical_variance: report.empirical_variance,
            green_kubo: report.green_kubo,
            p_value: report.p_value,
            mean_statistic: report.mean_statistic,
        };
        return emit_json(&out_path(c, f), &doc);
    }

    let max_lag = pick(args.max_lag, f.max_lag, 5.0);
    let path = run_path(&s)?;
    let curve = estimate_covariance(&path, |x| x, max_lag)?;
    match pick(c.format, f.format, Format::Csv) {
        Format::Csv => {
            let mut w = sink(&out_path(c, f))?;
            writeln!(w, "lag,cov,se")?;
            for i in 0..curve.lags.len() {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", curve.lags[i], curve.cov[i], curve.se[i])?;
            }
            w.flush()?;
            Ok(())
        }
        Format::Json => {
            let fit = fit_exponential(&curve).ok();
            let green_kubo = green_kubo_variance(&curve);
            let doc = DecorrelateDoc {
                schema_version: SCHEMA_VERSION,
                version: VERSION,
                lambda: s.p.lambda,
                sigma: s.p.sigma,
                dt: s.cfg.dt,
                horizon: s.cfg.horizon,
                burn_in: s.cfg.burn_in,
                seed: s.cfg.seed,
                drift: s.spec,
                max_lag,
                curve,
                fit,
                green_kubo,
            };
            emit_json(&out_path(c, f), &doc)
        }
    }
}

// -------------------------------------------------------- cluster-verify

#[derive(Serialize)]
struct ClusterRow {
    tau_lo: i64,
    tau_hi: i64,
    gamma_mean: f64,
    gamma_se: f64,
}

#[derive(Serialize)]
struct ClusterVerifyDoc {
    schema_version: u32,
    version: &'static str,
    lambda: f64,
    sigma: f64,
    n_blocks: u32,
    a: f64,
    t0: f64,
    dt: f64,
    drift: DriftSpec,
    n_samples: usize,
    seed: u64,
    /// Direct Girsanov estimate of the normalization; absent in the
    /// deterministic zero-drift branch where it is exactly 1.
    z_direct: Option<MCEstimate>,
    /// `1 + sum over families of the cluster-weight products`.
    cluster_total: MCEstimate,
    clusters: Vec<ClusterRow>,
    /// `|z_direct - cluster_total|`, or `|cluster_total - 1|` when the
    /// drift vanishes.
    discrepancy: f64,
    /// Largest discrepancy considered consistent: 3 combined standard
    /// errors, or 1e-6 in the deterministic branch.
    allowance: f64,
    pass: bool,
}

fn cmd_cluster_verify(args: &ClusterVerifyArgs, f: &FileConfig) -> Result<(), CliError> {
    let c = &args.common;
    let lambda = pick(c.lambda, f.lambda, 1.0);
    let sigma = pick(c.sigma, f.sigma, std::f64::consts::SQRT_2);
    let p = OUParams::new(lambda, sigma)?;
    let n_blocks = pick(args.n_blocks, f.n_blocks, 1);
    let a = pick(c.a, f.a, 6.0);
    let t0 = pick(c.t0, f.t0, 1.0);
    let dt = pick(c.dt, f.dt, ClusterConfig::default_dt(a));
    let amplitude = pick(c.amplitude, f.amplitude, 0.0);
    let n_samples = pick(c.n_samples, f.n_samples, 2000);
    let seed = pick(c.seed, f.seed, DEFAULT_SEED);
    let cfg = ClusterConfig::new(n_blocks, a, t0, dt)?;
    let spec = if amplitude == 0.0 {
        DriftSpec::zero(t0)
    } else {
        build_drift(
            pick(args.drift, f.drift, DriftChoice::Occupation),
            t0,
            amplitude,
            pick(args.set_lo, f.set_lo, -1.0),
            pick(args.set_hi, f.set_hi, 1.0),
        )?
    };

    let sum = cluster_sum(&cfg, &spec, &p, n_samples, seed)?;
    let (z, discrepancy, allowance) = if amplitude == 0.0 {
        (None, (sum.total.mean - 1.0).abs(), 1e-6)
    } else {
        let z = z_direct(&cfg, &spec, &p, n_samples, seed)?;
        let combined = z.std_error.hypot(sum.total.std_error);
        (Some(z), (z.mean - sum.total.mean).abs(), 3.0 * combined)
    };
    let pass = discrepancy <= allowance;

    let clusters: Vec<ClusterRow> = sum
        .table
        .iter()
        .map(|(tau, g)| ClusterRow {
            tau_lo: tau.lo,
            tau_hi: tau.hi,
            gamma_mean: g.mean,
            gamma_se: g.std_error,
        })
        .collect();

    match pick(c.format, f.format, Format::Json) {
        Format::Json => {
            let doc = ClusterVerifyDoc {
                schema_version: SCHEMA_VERSION,
                version: VERSION,
                lambda,
                sigma,
                n_blocks,
                a,
                t0,
                dt,
                drift: spec,
                n_samples,
                seed,
                z_direct: z,
                cluster_total: sum.total,
                clusters,
                discrepancy,
                allowance,
                pass,
            };
            emit_json(&out_path(c, f), &doc)?;
        }
        Format::Csv => {
            let mut w = sink(&out_path(c, f))?;
            writeln!(w, "tau_lo,tau_hi,gamma_mean,gamma_se")?;
            for row in &clusters {
                writeln!(
                    w,
                    "{},{},{:.16e},{:.16e}",
                    row.tau_lo, row.tau_hi, row.gamma_mean, row.gamma_se
                )?;
            }
            w.flush()?;
        }
    }

    if pass {
        Ok(())
    } else {
        Err(fail(
            3,
            format!(
                "cluster identity violated: discrepancy {discrepancy:.6e} \
                 exceeds allowance {allowance:.6e}"
            ),
        ))
    }
}

// ------------------------------------------------------------ ineq-check

#[derive(Serialize)]
struct SuiteRow {
    name: &'static str,
    #[serde(flatten)]
    report: ViolationReport,
}

#[derive(Serialize)]
struct IneqDoc {
    schema_version: u32,
    version: &'static str,
    trials: u64,
    seed: u64,
    suites: Vec<SuiteRow>,
    pass: bool,
}

fn cmd_ineq_check(args: &IneqCheckArgs, f: &FileConfig) -> Result<(), CliError> {
    let c = &args.common;
    let trials = pick(args.trials, f.trials, 10_000);
    let seed = pick(c.seed, f.seed, DEFAULT_SEED);
    let mut rng = stream_rng(seed, 0);
    let suites = inequality_suite(trials as usize, &mut rng);
    let pass = suites.iter().all(|(_, r)| r.violations == 0);

    match pick(c.format, f.format, Format::Json) {
        Format::Json => {
            let doc = IneqDoc {
                schema_version: SCHEMA_VERSION,
                version: VERSION,
                trials,
                seed,
                suites: suites
                    .into_iter()
                    .map(|(name, report)| SuiteRow { name, report })
                    .collect(),
                pass,
            };
            emit_json(&out_path(c, f), &doc)?;
        }
        Format::Csv => {
            let mut w = sink(&out_path(c, f))?;
            writeln!(w, "suite,trials,violations,worst_margin")?;
            for (name, r) in &suites {
                writeln!(w, "{},{},{},{:.16e}", name, r.trials, r.violations, r.worst_margin)?;
            }
            w.flush()?;
        }
    }

    if pass {
        Ok(())
    } else {
        Err(fail(3, "inequality suite reported violations"))
    }
}
