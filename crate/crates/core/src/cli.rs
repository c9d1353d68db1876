//! Command-line front end: `synth`, `train`, `evaluate`, `serve`, `cluster`.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error. Every run
//! writes a `key=value` manifest next to its outputs.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::cluster::{mean_shift, MeanShiftParams, DEFAULT_BANDWIDTH};
use crate::ensemble::{write_scores_csv, ParamGrid};
use crate::error::Error;
use crate::ingest::{self, Split, TripSplit};
use crate::model::PortRegistry;
use crate::neural::TrainConfig;
use crate::pipeline::{self, ModelBundle, TrainOptions};
use crate::rng;
use crate::synthgen::{self, CorpusParams, FaultRates, GeoBox, TripParams};

pub const THREADS_ENV: &str = "VOYAGECAST_THREADS";
pub const SPLITS_FILE: &str = "splits.csv";
pub const GRID_SCORES_FILE: &str = "grid_scores.csv";

#[derive(Debug, Parser)]
#[command(name = "voyagecast", version, about = "Destination port and ETA prediction for AIS streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic AIS corpus and its port registry.
    Synth(SynthArgs),
    /// Train the ensemble and the ETA network, and save a model bundle.
    Train(TrainArgs),
    /// Score a bundle on labeled data.
    Evaluate(EvaluateArgs),
    /// Answer one prediction per CSV line on stdin.
    Serve(ServeArgs),
    /// Mean-shift area encoding of AIS positions.
    Cluster(ClusterArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub ports: usize,
    #[arg(long)]
    pub ships: usize,
    #[arg(long)]
    pub trips_per_ship: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Seconds between position reports.
    #[arg(long, default_value_t = 300)]
    pub report_interval: i64,
    /// Fraction of trips given one report stamped after arrival.
    #[arg(long, default_value_t = 0.0)]
    pub late_rate: f64,
    /// Fraction of trips given one out-of-order report.
    #[arg(long, default_value_t = 0.0)]
    pub stale_rate: f64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled AIS CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Port registry CSV (`NAME,LON,LAT`).
    #[arg(long = "ports")]
    pub registry: PathBuf,
    /// Bundle directory to create.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the default hyperparameters instead of searching the grid.
    #[arg(long)]
    pub skip_grid_search: bool,
    /// Grid file of `model.param=v1,v2` lines.
    #[arg(long, conflicts_with = "skip_grid_search")]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Labeled AIS CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Restrict to the trips of one split recorded in the bundle.
    #[arg(long, value_parser = ["train", "test", "validation"])]
    pub split: Option<String>,
    /// Write one `PORT,ETA,DELTA` line per evaluated record.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Write the metrics as `metric,value` CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// AIS CSV whose positions are clustered.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BANDWIDTH)]
    pub bandwidth: f64,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Output CSV (`CLUSTER_ID,LON,LAT,SUPPORT`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Ordered `key=value` lines.
#[derive(Debug, Default)]
struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn new(subcommand: &str) -> Self {
        let mut m = Manifest::default();
        m.set("subcommand", subcommand);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("command", std::env::args().collect::<Vec<_>>().join(" "));
        m.set("rng", rng::GENERATOR_NAME);
        m
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn digest(&mut self, key: &str, path: &Path) -> CliResult {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.set(&format!("sha256.{key}"), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn write(&self, path: &Path) -> CliResult {
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push('=');
            text.push_str(&v.replace('\n', " "));
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// `<path>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn open(path: &Path) -> CliResult<File> {
    Ok(File::open(path).map_err(|e| Error::io(path, e))?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Parses a labeled or unlabeled AIS file; any malformed row is fatal.
fn read_records(path: &Path) -> CliResult<Vec<crate::model::AisRecord>> {
    let (records, errors) = ingest::parse_csv(open(path)?)?;
    if let Some(first) = errors.first() {
        return Err(Error::InvalidInput(format!(
            "{}: {} malformed row(s), first at {first}",
            path.display(),
            errors.len()
        ))
        .into());
    }
    Ok(records)
}

fn configure_threads() -> CliResult {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={value:?} is not a thread count")))?;
    if n > 0 {
        // Only fails if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    if args.ports < 2 {
        return Err(CliError::Usage(format!("--ports must be at least 2, got {}", args.ports)));
    }
    if args.ships == 0 || args.trips_per_ship == 0 {
        return Err(CliError::Usage("--ships and --trips-per-ship must be positive".into()));
    }
    if args.report_interval <= 0 {
        return Err(CliError::Usage("--report-interval must be positive".into()));
    }
    for (flag, rate) in [("--late-rate", args.late_rate), ("--stale-rate", args.stale_rate)] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(CliError::Usage(format!("{flag} must be in [0, 1]")));
        }
    }
    let started = Instant::now();
    let world = synthgen::generate_world(args.ports, GeoBox::default(), args.seed)?;
    let params = CorpusParams {
        trip: TripParams {
            report_interval: args.report_interval,
            ..TripParams::default()
        },
        faults: FaultRates {
            late: args.late_rate,
            stale: args.stale_rate,
        },
        ..CorpusParams::default()
    };
    let corpus = synthgen::generate_corpus(&world, args.ships, args.trips_per_ship, &params, args.seed)?;
    synthgen::write_corpus(&args.out, &world, &corpus)?;

    let ais = args.out.join(synthgen::AIS_FILE);
    let ports = args.out.join(synthgen::PORTS_FILE);
    let mut m = Manifest::new("synth");
    m.set("seed", args.seed);
    m.set("ports", args.ports);
    m.set("ships", args.ships);
    m.set("trips_per_ship", args.trips_per_ship);
    m.set("report_interval", args.report_interval);
    m.set("late_rate", args.late_rate);
    m.set("stale_rate", args.stale_rate);
    m.set("records", corpus.records.len());
    m.set("trips", corpus.n_trips);
    m.set("faults.late", corpus.faults.late);
    m.set("faults.stale", corpus.faults.stale);
    m.set("faults.missing_draught", corpus.faults.missing_draught);
    m.set("artifact.ais", ais.display());
    m.set("artifact.ports", ports.display());
    m.digest("ais", &ais)?;
    m.digest("ports", &ports)?;
    m.set("elapsed_ms", started.elapsed().as_millis());
    m.write(&args.manifest.clone().unwrap_or_else(|| args.out.join("synth.manifest.txt")))?;
    println!(
        "wrote {} records in {} trips to {}",
        corpus.records.len(),
        corpus.n_trips,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> CliResult {
    let started = Instant::now();
    let records = read_records(&args.data)?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no records", args.data.display())).into());
    }
    let registry = PortRegistry::read_csv(open(&args.registry)?)?;
    let grid = if args.skip_grid_search {
        None
    } else if let Some(path) = &args.grid {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Some(ParamGrid::parse(&text).map_err(|e| CliError::Usage(e.to_string()))?)
    } else {
        Some(ParamGrid::default())
    };
    let mut network = TrainConfig::default();
    if let Some(n) = args.max_epochs {
        network.max_epochs = n;
    }
    let options = TrainOptions {
        seed: args.seed,
        grid,
        network,
        ..TrainOptions::default()
    };
    let outcome = pipeline::train(records, registry, &options)?;

    outcome.bundle.save(&args.out)?;
    outcome.split.write_csv(create(&args.out.join(SPLITS_FILE))?)?;
    write_scores_csv(create(&args.out.join(GRID_SCORES_FILE))?, &outcome.grid_scores)?;

    let mut m = Manifest::new("train");
    m.set("seed", args.seed);
    m.set("data", args.data.display());
    m.set("ports", args.registry.display());
    m.digest("data", &args.data)?;
    m.digest("ports", &args.registry)?;
    m.set("grid_search", !args.skip_grid_search);
    if let Some(g) = &args.grid {
        m.set("grid", g.display());
        m.digest("grid", g)?;
    }
    m.set("max_epochs", options.network.max_epochs);
    m.set("drops.draught_filled", outcome.drops.draught_filled);
    m.set("drops.after_arrival", outcome.drops.after_arrival_dropped);
    m.set("drops.out_of_order", outcome.drops.out_of_order_dropped);
    for s in Split::ALL {
        m.set(&format!("trips.{}", s.name()), outcome.split.ids(s).len());
    }
    let cfg = &outcome.ensemble_config;
    m.set("ensemble.rf_trees", cfg.rf_trees);
    m.set("ensemble.ert_trees", cfg.ert_trees);
    m.set(
        "ensemble.gbdt",
        format!("depth={};eta={};rounds={}", cfg.gbdt.max_depth, cfg.gbdt.learning_rate, cfg.gbdt.rounds),
    );
    m.set(
        "ensemble.xgb",
        format!(
            "depth={};eta={};rounds={};lambda={};gamma={}",
            cfg.xgb.max_depth, cfg.xgb.learning_rate, cfg.xgb.rounds, cfg.xgb.lambda, cfg.xgb.gamma
        ),
    );
    m.set("network.epochs", outcome.network_report.history.len());
    m.set("network.best_epoch", outcome.network_report.best_epoch);
    m.set("network.best_val_mse", outcome.network_report.best_val_loss);
    m.set("validation.port_accuracy", outcome.validation.port_accuracy);
    m.set("validation.eta_mae", outcome.validation.eta_mae);
    m.set("ensemble_ms", outcome.ensemble_time.as_millis());
    m.set("network_ms", outcome.network_time.as_millis());
    m.set("artifact.bundle", args.out.display());
    m.digest("bundle_json", &args.out.join(pipeline::BUNDLE_FILE))?;
    m.set("elapsed_ms", started.elapsed().as_millis());
    m.write(&args.manifest.clone().unwrap_or_else(|| sibling(&args.out, ".manifest.txt")))?;

    println!("validation metrics ({} trips)", outcome.split.validation.len());
    print!("{}", outcome.validation);
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult {
    let started = Instant::now();
    let bundle = ModelBundle::load(&args.bundle)?;
    let records = read_records(&args.data)?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no records", args.data.display())).into());
    }
    if let Some(r) = records.iter().find(|r| r.arrival_port.is_none() || r.arrival_time.is_none()) {
        return Err(Error::InvalidInput(format!(
            "{} is unlabeled (record of {} at {} lacks ARRIVAL_PORT or ARRIVAL_TIME)",
            args.data.display(),
            r.ship_id,
            r.timestamp
        ))
        .into());
    }
    let (mut records, drops) = ingest::clean(records);
    if let Some(name) = &args.split {
        let split: Split = name.parse()?;
        let path = args.bundle.join(SPLITS_FILE);
        let splits = TripSplit::read_csv(open(&path)?)?;
        let ids: HashSet<&str> = splits.ids(split).iter().map(String::as_str).collect();
        records.retain(|r| r.trip_id.as_deref().is_some_and(|t| ids.contains(t)));
    }
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to evaluate".into()).into());
    }
    let predictions = pipeline::predict_all(&bundle, &records)?;
    let metrics = pipeline::Metrics::from_predictions(&predictions, &records, &pipeline::ETA_TOLERANCES)?;

    if let Some(path) = &args.predictions {
        let mut w = create(path)?;
        for p in &predictions {
            writeln!(w, "{}", p.to_protocol_line()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    if let Some(path) = &args.report {
        metrics.write_csv(create(path)?)?;
    }

    let mut m = Manifest::new("evaluate");
    m.set("bundle", args.bundle.display());
    m.digest("bundle_json", &args.bundle.join(pipeline::BUNDLE_FILE))?;
    m.set("data", args.data.display());
    m.digest("data", &args.data)?;
    m.set("split", args.split.as_deref().unwrap_or("all"));
    m.set("drops.after_arrival", drops.after_arrival_dropped);
    m.set("drops.out_of_order", drops.out_of_order_dropped);
    m.set("count", metrics.count);
    m.set("port_accuracy", metrics.port_accuracy);
    m.set("eta_mae", metrics.eta_mae);
    for (t, f) in &metrics.eta_within {
        m.set(&format!("eta_within_{t}"), f);
    }
    if let Some(p) = &args.predictions {
        m.set("artifact.predictions", p.display());
    }
    if let Some(p) = &args.report {
        m.set("artifact.report", p.display());
    }
    m.set("elapsed_ms", started.elapsed().as_millis());
    m.write(&args.manifest.clone().unwrap_or_else(|| sibling(&args.bundle, ".evaluate.manifest.txt")))?;

    print!("{metrics}");
    Ok(())
}

/// Reads CSV lines from `input` and answers each one on `output`; malformed
/// lines are reported on `errors` as `ERROR,<line>,<reason>`. An exact header
/// line is skipped. Returns (answered, rejected).
pub fn serve_stream<R: BufRead, W: Write, E: Write>(
    bundle: &ModelBundle,
    input: R,
    mut output: W,
    mut errors: E,
) -> io::Result<(usize, usize)> {
    let header = ingest::AIS_HEADER.join(",");
    let (mut answered, mut rejected) = (0, 0);
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed == header {
            continue;
        }
        let result = ingest::parse_line(trimmed)
            .and_then(|rec| pipeline::predict_tuple(bundle, &rec).map_err(|e| e.to_string()));
        match result {
            Ok(p) => {
                writeln!(output, "{}", p.to_protocol_line())?;
                output.flush()?;
                answered += 1;
            }
            Err(reason) => {
                writeln!(errors, "ERROR,{line_no},{}", reason.replace('\n', " "))?;
                errors.flush()?;
                rejected += 1;
            }
        }
    }
    Ok((answered, rejected))
}

fn cmd_serve(args: &ServeArgs) -> CliResult {
    let started = Instant::now();
    let bundle = ModelBundle::load(&args.bundle)?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let (answered, rejected) = serve_stream(&bundle, stdin.lock(), stdout.lock(), stderr.lock())
        .map_err(|e| Error::io("<stdio>", e))?;
    let mut m = Manifest::new("serve");
    m.set("bundle", args.bundle.display());
    m.digest("bundle_json", &args.bundle.join(pipeline::BUNDLE_FILE))?;
    m.set("answered", answered);
    m.set("rejected", rejected);
    m.set("elapsed_ms", started.elapsed().as_millis());
    m.write(&args.manifest.clone().unwrap_or_else(|| sibling(&args.bundle, ".serve.manifest.txt")))?;
    Ok(())
}

fn cmd_cluster(args: &ClusterArgs) -> CliResult {
    if !(args.bandwidth > 0.0) || !args.bandwidth.is_finite() {
        return Err(CliError::Usage("--bandwidth must be positive".into()));
    }
    let started = Instant::now();
    let records = read_records(&args.data)?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no records", args.data.display())).into());
    }
    let (cleaned, _) = ingest::clean(records);
    let points: Vec<[f64; 2]> = cleaned.iter().map(|r| [r.lon, r.lat]).collect();
    let mut params = MeanShiftParams::with_bandwidth(args.bandwidth);
    if let Some(n) = args.max_iter {
        params.max_iter = n;
    }
    let model = mean_shift(&points, &params)?;
    let mut w = create(&args.out)?;
    model.write_csv(&mut w)?;
    w.flush().map_err(|e| Error::io(&args.out, e))?;

    let mut m = Manifest::new("cluster");
    m.set("data", args.data.display());
    m.digest("data", &args.data)?;
    m.set("bandwidth", args.bandwidth);
    m.set("tol", params.tol);
    m.set("max_iter", params.max_iter);
    m.set("points", points.len());
    m.set("clusters", model.centers.len());
    m.set("artifact.clusters", args.out.display());
    m.set("elapsed_ms", started.elapsed().as_millis());
    m.write(&args.manifest.clone().unwrap_or_else(|| sibling(&args.out, ".manifest.txt")))?;
    println!("{} clusters from {} positions", model.centers.len(), points.len());
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult {
    configure_threads()?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Cluster(a) => cmd_cluster(a),
    }
}

/// Parses `std::env::args`, runs the subcommand and maps the outcome to an
/// exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
