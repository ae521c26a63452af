use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use wavespec::estimator::{scale_spectrum, BoundaryPolicy, Estimator, EstimatorConfig};
use wavespec::harness::{run_coverage, run_experiment, simulate_path, ExperimentConfig, Simulator};
use wavespec::hrv::{analyze_recording, HeartbeatConfig};
use wavespec::inference::{default_scales, geometric_grid, loglog_fit, Axis};
use wavespec::io::{
    load_zones, read_json, write_estimate_csv, write_grid_csv, write_json, write_loglog_csv, write_path_csv,
    write_scale_spectrum_csv, SeriesFile, SeriesFormat, SummaryTable,
};
use wavespec::processes::{add_polynomial_trend, SpectralModel};
use wavespec::rng::stream;
use wavespec::sampling::{build_grid, build_shifts, DurationLaw};
use wavespec::wavelet::{MotherWavelet, WaveletConfig};

#[derive(Parser)]
#[command(name = "wavespec", version, about = "Wavelet spectral density estimation for irregularly sampled series")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file with the subcommand's configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cache file for the tabulated wavelet.
    #[arg(long, global = true)]
    wavelet_cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a process on a random grid and write (t, x) CSV.
    Simulate(SimulateArgs),
    /// Estimate the spectral density of a series.
    Estimate(EstimateArgs),
    /// Hurst index by log-log regression of the wavelet variance on scale.
    Hurst(HurstArgs),
    /// Zone-by-zone analysis of an RR-interval recording.
    Heartbeat(HeartbeatArgs),
    /// Monte Carlo accuracy study.
    Experiment(ExperimentArgs),
    /// Monte Carlo coverage of the confidence intervals.
    Coverage(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Ou,
    Fbm,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Unit {
    Hz,
    Rad,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// OU rate.
    #[arg(long)]
    alpha: Option<f64>,
    /// fBm Hurst index.
    #[arg(long)]
    hurst: Option<f64>,
    /// Sampling law T1..T4.
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Mesh exponent, delta_n = n^-d.
    #[arg(long)]
    d: Option<f64>,
    /// Also write the grid as (index, t, L).
    #[arg(long)]
    grid_out: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SimulateConfig {
    model: SpectralModel,
    law: DurationLaw,
    n: usize,
    d: f64,
    simulator: Simulator,
    lambda: f64,
    trend: Vec<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: SpectralModel::OrnsteinUhlenbeck { alpha: 1.0 },
            law: DurationLaw::T1,
            n: 1000,
            d: 0.6,
            simulator: Simulator::Auto,
            lambda: wavespec::sampling::DEFAULT_LAMBDA,
            trend: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct SimulateSidecar<'a> {
    seed: u64,
    delta: f64,
    span: f64,
    n: usize,
    config: &'a SimulateConfig,
}

#[derive(Args, Clone)]
struct InputArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Input is one column of RR intervals in milliseconds.
    #[arg(long)]
    rr: bool,
    /// Input has no header row.
    #[arg(long)]
    no_header: bool,
}

impl InputArgs {
    fn load(&self) -> Result<SeriesFile, CliError> {
        let format = if self.rr { SeriesFormat::Rr } else { SeriesFormat::TimeValue };
        SeriesFile::load(&self.input, format, !self.no_header)
            .map_err(|e| CliError::Config(format!("cannot read input {}: {e}", self.input.display())))
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Lowest frequency.
    #[arg(long, default_value_t = 0.05)]
    from: f64,
    /// Highest frequency.
    #[arg(long, default_value_t = 1.0)]
    to: f64,
    #[arg(long, default_value_t = 32)]
    count: usize,
    #[arg(long, value_enum, default_value_t = Unit::Hz)]
    unit: Unit,
    /// Linear instead of logarithmic frequency spacing.
    #[arg(long)]
    linear: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
    /// Number of shift intervals (default one per observation interval).
    #[arg(long)]
    shifts: Option<usize>,
    /// Fail frequencies whose windows leave the record instead of truncating.
    #[arg(long)]
    strict: bool,
    /// Output prefix: writes PREFIX.csv, PREFIX_loglog.csv and PREFIX.json.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct HurstArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    a_min: Option<f64>,
    #[arg(long)]
    a_max: Option<f64>,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    shifts: Option<usize>,
    /// Output prefix: writes PREFIX.csv (a, J, var) and PREFIX.json.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct HeartbeatArgs {
    /// RR file, one interval in milliseconds per row.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long)]
    no_header: bool,
    /// Zones CSV with columns start, end, label (seconds).
    #[arg(long)]
    zones: Option<PathBuf>,
    #[arg(long)]
    shifts: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Reference frequency in rad/s.
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    shifts: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    /// Skip the integrated squared error.
    #[arg(long)]
    no_mise: bool,
    /// Report JSON.
    #[arg(long, short)]
    out: PathBuf,
    /// Optional one-row summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Runtime(wavespec::Error),
    AllFailed(String),
}

impl From<wavespec::Error> for CliError {
    fn from(e: wavespec::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid `{field}`: {msg}"))
}

fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => read_json(p).map_err(|e| CliError::Config(format!("cannot load config {}: {e}", p.display()))),
    }
}

fn mother(cache: &Option<PathBuf>) -> Result<Arc<MotherWavelet>, CliError> {
    let cfg = WaveletConfig::default();
    let w = match cache {
        Some(p) => MotherWavelet::build_cached(&cfg, p)?,
        None => MotherWavelet::build(&cfg)?,
    };
    Ok(Arc::new(w))
}

fn model_from_flags(
    current: SpectralModel,
    kind: Option<ModelKind>,
    alpha: Option<f64>,
    hurst: Option<f64>,
) -> SpectralModel {
    match kind {
        Some(ModelKind::Ou) => SpectralModel::OrnsteinUhlenbeck { alpha: alpha.unwrap_or(1.0) },
        Some(ModelKind::Fbm) => SpectralModel::Fbm { h: hurst.unwrap_or(0.5) },
        None => match current {
            SpectralModel::OrnsteinUhlenbeck { alpha: a } => SpectralModel::OrnsteinUhlenbeck {
                alpha: alpha.unwrap_or(a),
            },
            SpectralModel::Fbm { h } => SpectralModel::Fbm { h: hurst.unwrap_or(h) },
            other => other,
        },
    }
}

fn parse_law(s: &str) -> Result<DurationLaw, CliError> {
    DurationLaw::parse(s).map_err(|e| config_err("law", e))
}

fn check_d(d: f64) -> Result<(), CliError> {
    if d > 0.0 && d < 1.0 {
        Ok(())
    } else {
        Err(config_err("d", format!("{d} must lie in (0, 1)")))
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = load_config(&cli.config)?;
    cfg.model = model_from_flags(cfg.model, args.model, args.alpha, args.hurst);
    if let Some(l) = &args.law {
        cfg.law = parse_law(l)?;
    }
    cfg.n = args.n.unwrap_or(cfg.n);
    cfg.d = args.d.unwrap_or(cfg.d);
    check_d(cfg.d)?;
    if cfg.n < 2 {
        return Err(config_err("n", format!("{} must be at least 2", cfg.n)));
    }
    cfg.model.validate().map_err(|e| config_err("model", e))?;
    let seed = cli.seed.unwrap_or(0);

    let mut rng = stream(seed, 0);
    let grid = build_grid(&cfg.law, cfg.n, cfg.d, &mut rng)?;
    let support = wavespec::wavelet::DEFAULT_SUPPORT;
    let mut path = simulate_path(&cfg.model, &grid, &mut rng, cfg.simulator, cfg.lambda, support)?;
    if !cfg.trend.is_empty() {
        path = add_polynomial_trend(&path, &cfg.trend)?;
    }
    write_path_csv(BufWriter::new(File::create(&args.out)?), &path)?;
    if let Some(g) = &args.grid_out {
        write_grid_csv(BufWriter::new(File::create(g)?), &grid)?;
    }
    write_json(
        args.out.with_extension("json"),
        &SimulateSidecar {
            seed,
            delta: grid.delta,
            span: grid.span(),
            n: grid.n(),
            config: &cfg,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    input: &'a Path,
    flagged_rows: &'a [usize],
    result: &'a wavespec::estimator::EstimateResult,
}

fn estimator_config(
    base: EstimatorConfig,
    lambda: Option<f64>,
    level: Option<f64>,
    shifts: Option<usize>,
) -> Result<EstimatorConfig, CliError> {
    let mut c = base;
    if let Some(l) = lambda {
        if !(l >= wavespec::wavelet::DEFAULT_SUPPORT) {
            return Err(config_err("lambda", format!("{l} must be at least the wavelet support 5")));
        }
        c.lambda = l;
    }
    if let Some(l) = level {
        if !(l >= 0.0 && l < 1.0) {
            return Err(config_err("level", format!("{l} must lie in [0, 1)")));
        }
        c.level = l;
    }
    if let Some(s) = shifts {
        if s == 0 {
            return Err(config_err("shifts", "must be at least 1"));
        }
        c.shift_count = Some(s);
    }
    Ok(c)
}

fn cmd_estimate(cli: &Cli, args: &EstimateArgs) -> Result<(), CliError> {
    let base: EstimatorConfig = load_config(&cli.config)?;
    let mut cfg = estimator_config(base, args.lambda, args.level, args.shifts)?;
    if args.strict {
        cfg.policy = BoundaryPolicy::Strict;
    }
    if !(args.from > 0.0 && args.to > args.from) {
        return Err(config_err("from/to", "frequencies must satisfy 0 < from < to"));
    }
    if args.count < 2 {
        return Err(config_err("count", "at least two frequencies are needed"));
    }
    let series = args.input.load()?;
    let path = series.to_path()?.centered();
    let freqs: Vec<f64> = if args.linear {
        let step = (args.to - args.from) / (args.count - 1) as f64;
        (0..args.count).map(|i| args.from + step * i as f64).collect()
    } else {
        geometric_grid(args.from, args.to, args.count)?
    };
    let to_rad = if args.unit == Unit::Hz { 2.0 * std::f64::consts::PI } else { 1.0 };
    let rad: Vec<f64> = freqs.iter().map(|v| v * to_rad).collect();
    let est = Estimator::new(mother(&cli.wavelet_cache)?, cfg)?;
    let mut result = est.estimate_curve(&path, &rad)?;
    if args.unit == Unit::Hz {
        result = result.to_hz();
    }
    write_estimate_csv(BufWriter::new(File::create(with_suffix(&args.out, ".csv"))?), &result)?;
    write_loglog_csv(BufWriter::new(File::create(with_suffix(&args.out, "_loglog.csv"))?), &result)?;
    write_json(
        with_suffix(&args.out, ".json"),
        &EstimateReport {
            input: &args.input.input,
            flagged_rows: &series.flagged,
            result: &result,
        },
    )?;
    if result.frequencies.is_empty() {
        let first = result.failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(CliError::AllFailed(format!(
            "all {} frequencies failed; first error: {first}",
            result.failures.len()
        )));
    }
    for f in &result.failures {
        eprintln!("warning: frequency {}: {}", f.frequency, f.message);
    }
    Ok(())
}

#[derive(Serialize)]
struct HurstReport {
    scales: Vec<f64>,
    fit: wavespec::inference::LogLogFit,
}

fn cmd_hurst(cli: &Cli, args: &HurstArgs) -> Result<(), CliError> {
    let base: EstimatorConfig = load_config(&cli.config)?;
    let mut cfg = estimator_config(base, None, None, args.shifts)?;
    if let Some(r) = args.rho {
        cfg.rho = r;
    }
    let series = args.input.load()?;
    let path = series.to_path()?.centered();
    let scales = match (args.a_min, args.a_max) {
        (Some(lo), Some(hi)) => geometric_grid(lo, hi, args.count).map_err(|e| config_err("a_min/a_max", e))?,
        (None, None) => default_scales(path.grid.delta, path.grid.span())?,
        _ => return Err(config_err("a_min/a_max", "give both bounds or neither")),
    };
    let count = cfg.shift_count.unwrap_or(path.grid.n());
    let shifts = build_shifts(path.grid.span(), count, cfg.rho).map_err(|e| config_err("rho", e))?;
    let mother = mother(&cli.wavelet_cache)?;
    let spectrum = scale_spectrum(&path, &shifts, &scales, &mother, cfg.policy, None)?;
    let fit = loglog_fit(&spectrum.scales, &spectrum.j, Axis::Scale)?;
    write_scale_spectrum_csv(BufWriter::new(File::create(with_suffix(&args.out, ".csv"))?), &spectrum)?;
    write_json(with_suffix(&args.out, ".json"), &HurstReport { scales, fit })?;
    Ok(())
}

fn cmd_heartbeat(cli: &Cli, args: &HeartbeatArgs) -> Result<(), CliError> {
    let mut cfg: HeartbeatConfig = load_config(&cli.config)?;
    if let Some(s) = args.shifts {
        cfg.estimator = estimator_config(cfg.estimator, None, None, Some(s))?;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let series = SeriesFile::load(&args.input, SeriesFormat::Rr, !args.no_header)
        .map_err(|e| CliError::Config(format!("cannot read input {}: {e}", args.input.display())))?;
    let zones = match &args.zones {
        Some(z) => load_zones(z).map_err(|e| config_err("zones", e))?,
        None => Vec::new(),
    };
    let (t0, t1) = (series.start(), series.end());
    if let Some(z) = zones.iter().find(|z| z.start < t0 || z.end > t1) {
        return Err(config_err(
            "zones",
            format!("zone {:?} [{}, {}] s lies outside the recording [{t0}, {t1}] s", z.label, z.start, z.end),
        ));
    }
    let est = Estimator::new(mother(&cli.wavelet_cache)?, cfg.estimator)?;
    let reports = analyze_recording(&series, &zones, &est, &cfg)?;
    fs::create_dir_all(&args.out)?;
    let mut table = SummaryTable::new(
        ["h_single", "h_left", "h_right", "breakpoint_hz", "sse_ratio", "lf", "hf", "lf_hf"]
            .map(String::from)
            .to_vec(),
    );
    for (i, r) in reports.iter().enumerate() {
        let name = if r.label.is_empty() { format!("zone{i}") } else { r.label.clone() };
        let safe: String = name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        write_estimate_csv(
            BufWriter::new(File::create(args.out.join(format!("{safe}_curve.csv")))?),
            &r.curve,
        )?;
        let vals = [
            r.single.h_hat,
            r.left.h_hat,
            r.right.h_hat,
            r.breakpoint_hz,
            r.sse_ratio,
            r.lf_energy,
            r.hf_energy,
            r.lf_hf_ratio,
        ];
        for (c, v) in vals.into_iter().enumerate() {
            table.set(&name, c, v);
        }
    }
    table.write_csv(BufWriter::new(File::create(args.out.join("zones.csv"))?))?;
    write_json(args.out.join("report.json"), &reports)?;
    Ok(())
}

fn experiment_config(cli: &Cli, args: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = match &cli.config {
        Some(_) => load_config::<Option<ExperimentConfig>>(&cli.config)?
            .ok_or_else(|| CliError::Config("empty experiment config".into()))?,
        None => ExperimentConfig::new(SpectralModel::OrnsteinUhlenbeck { alpha: 1.0 }, DurationLaw::T2, 10_000, 0.3),
    };
    cfg.model = model_from_flags(cfg.model, args.model, args.alpha, args.hurst);
    if let Some(l) = &args.law {
        cfg.law = parse_law(l)?;
    }
    cfg.n = args.n.unwrap_or(cfg.n);
    cfg.d = args.d.unwrap_or(cfg.d);
    check_d(cfg.d)?;
    cfg.replications = args.reps.unwrap_or(cfg.replications);
    cfg.reference_frequency = args.xi.unwrap_or(cfg.reference_frequency);
    cfg.estimator = estimator_config(cfg.estimator, None, args.level, args.shifts)?;
    if args.no_mise {
        cfg.mise = None;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn cmd_experiment(cli: &Cli, args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = experiment_config(cli, args)?;
    let report = run_experiment(cfg, mother(&cli.wavelet_cache)?)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    fs::write(&args.out, report.canonical_json()? + "\n")?;
    if let Some(s) = &args.summary {
        let mut t = SummaryTable::new(vec![format!("n={}", report.config.n), "mise".into()]);
        let law = format!("{:?}", report.config.law);
        t.set(&law, 0, report.rmse);
        if let Some(m) = report.mise {
            t.set(&law, 1, m);
        }
        t.write_csv(BufWriter::new(File::create(s)?))?;
    }
    Ok(())
}

fn cmd_coverage(cli: &Cli, args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = experiment_config(cli, args)?;
    let report = run_coverage(cfg, mother(&cli.wavelet_cache)?)?;
    write_json(&args.out, &report)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(config_err("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| config_err("threads", e))?;
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Estimate(a) => cmd_estimate(cli, a),
        Command::Hurst(a) => cmd_hurst(cli, a),
        Command::Heartbeat(a) => cmd_heartbeat(cli, a),
        Command::Experiment(a) => cmd_experiment(cli, a),
        Command::Coverage(a) => cmd_coverage(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(CliError::AllFailed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(4)
        }
    }
}
