//! `skysample` command-line driver.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 data integrity.

mod report;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use skysample::algorithms::bnl_skyline;
use skysample::approx::{
    baseline, double, estimate_error_from_sample, predict_error, relation_error, required_verification_size,
};
use skysample::datagen::{generate, sidecar_path};
use skysample::storage::{ingest_csv, seeded_rng, CsvSchema, DEFAULT_PAGE_BYTES};
use skysample::{
    ApproxParams, Distribution, Engine, Error, GenSpec, IoCounter, PageLayout, Relation, SkylineResult,
};

use rand::RngCore;
use report::{mean_std, BenchReport, BenchRow};

const PAGE_BYTES_ENV: &str = "SKYSAMPLE_PAGE_BYTES";

#[derive(Parser)]
#[command(name = "skysample", version, about = "Sampling-based approximate skyline queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic relation.
    Generate(GenerateArgs),
    /// Convert a CSV file into a relation.
    Ingest(IngestArgs),
    /// Compute the exact skyline of a relation.
    Exact(ExactArgs),
    /// Run the fixed-size sampling algorithm and report its error.
    Baseline(BaselineArgs),
    /// Run the doubling algorithm with Monte-Carlo verification.
    Double(DoubleArgs),
    /// Sweep sample sizes and dimensions into an error table.
    ErrorTable(ErrorTableArgs),
    /// Print the predicted baseline error for (d, m, n).
    Predict(PredictArgs),
}

#[derive(Args)]
struct LayoutArgs {
    /// Record stride in bytes (default 128, or 8*d if larger).
    #[arg(long)]
    tuple_bytes: Option<u32>,
    /// Page size in bytes (default 8192, or $SKYSAMPLE_PAGE_BYTES).
    #[arg(long)]
    page_bytes: Option<u32>,
}

impl LayoutArgs {
    fn resolve(&self, d: u32) -> Result<PageLayout, Error> {
        let page_bytes = match self.page_bytes {
            Some(p) => p,
            None => env_page_bytes()?,
        };
        let mut layout = PageLayout::for_dim(d, page_bytes);
        if let Some(t) = self.tuple_bytes {
            layout.tuple_bytes = t;
        }
        Ok(layout)
    }
}

fn env_page_bytes() -> Result<u32, Error> {
    match std::env::var(PAGE_BYTES_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("{PAGE_BYTES_ENV}={v} is not a page size"))),
        Err(_) => Ok(DEFAULT_PAGE_BYTES),
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    d: u32,
    /// independent | correlated | anticorrelated
    #[arg(long, value_parser = parse_dist)]
    dist: Distribution,
    /// Pearson target for attributes 1-2 (default +0.5 / -0.5).
    #[arg(long, allow_hyphen_values = true)]
    pcc: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Round values to this many levels per attribute.
    #[arg(long)]
    quantize: Option<u32>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    layout: LayoutArgs,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Zero-based columns to keep, e.g. 0,2,5 (default: all).
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<usize>>,
    /// Per kept column, 1 to negate (maximized criterion), e.g. 0,1,0.
    #[arg(long, value_delimiter = ',')]
    negate: Vec<u8>,
    /// First row is a header.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    page_bytes: Option<u32>,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "sfs", value_parser = parse_engine)]
    engine: Engine,
    /// BNL window capacity in records.
    #[arg(long, default_value_t = Engine::DEFAULT_WINDOW)]
    window: usize,
    /// Write skyline members as CSV (index then values).
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    m: u64,
    #[arg(long, default_value_t = 20)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sfs", value_parser = parse_engine)]
    engine: Engine,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DoubleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// double1 (eps 0.1), double2 (0.01) or double3 (0.001).
    #[arg(long, conflicts_with = "epsilon")]
    preset: Option<String>,
    /// Initial sample size (default: the verification sample size).
    #[arg(long)]
    s_initial: Option<u64>,
    #[arg(long, default_value = "sfs", value_parser = parse_engine)]
    engine: Engine,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compute the true error with a full scan.
    #[arg(long)]
    oracle: bool,
    /// Write per-round JSON lines here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ErrorTableArgs {
    /// Existing relations; repeat for several. Without it, relations are
    /// generated from --n/--dist/--d.
    #[arg(long)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    n: u64,
    #[arg(long, default_value = "independent", value_parser = parse_dist)]
    dist: Distribution,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    d: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "100,1000")]
    m: Vec<u64>,
    #[arg(long, default_value_t = 20)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sfs", value_parser = parse_engine)]
    engine: Engine,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    d: u32,
    #[arg(long)]
    m: u64,
    #[arg(long)]
    n: u64,
}

fn parse_dist(s: &str) -> Result<Distribution, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        e if e.is_data_integrity() => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Exact(a) => cmd_exact(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Double(a) => cmd_double(a),
        Command::ErrorTable(a) => cmd_error_table(a),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Error> {
    let mut spec = GenSpec::new(a.n, a.d, a.dist, a.seed);
    spec.target_pcc = a.pcc;
    spec.quantize = a.quantize;
    spec.layout = a.layout.resolve(a.d)?;
    let header = generate(&spec, &a.out)?;
    print_json(&header)
}

fn cmd_ingest(a: IngestArgs) -> Result<(), Error> {
    let schema = CsvSchema {
        columns: a.columns,
        negate: a.negate.iter().map(|&f| f != 0).collect(),
        has_header: a.header,
    };
    let page_bytes = match a.page_bytes {
        Some(p) => p,
        None => env_page_bytes()?,
    };
    let header = ingest_csv(&a.input, &schema, &a.out, page_bytes)?;
    print_json(&header)
}

#[derive(Serialize)]
struct ExactSummary {
    engine: Engine,
    n: u64,
    d: usize,
    skyline_size: usize,
    comparisons: u64,
    pages_read: u64,
    wall_nanos: u128,
}

fn cmd_exact(a: ExactArgs) -> Result<(), Error> {
    let rel = Relation::open(&a.input)?;
    let mut counter = IoCounter::new();
    let start = Instant::now();
    let sky = match a.engine {
        Engine::Bnl => {
            let mut failure = None;
            let stream = rel
                .scan(&mut counter)
                .map_while(|r| r.map_err(|e| failure = Some(e)).ok());
            let sky = bnl_skyline(stream, a.window)?;
            if let Some(e) = failure {
                return Err(e);
            }
            sky
        }
        engine => engine.skyline(rel.read_all(&mut counter)?)?,
    };
    let wall = start.elapsed();
    if let Some(path) = &a.dump {
        dump_members(&sky, path)?;
    }
    print_json(&ExactSummary {
        engine: a.engine,
        n: rel.n(),
        d: rel.d(),
        skyline_size: sky.len(),
        comparisons: sky.comparisons,
        pages_read: counter.pages_read,
        wall_nanos: wall.as_nanos(),
    })
}

fn dump_members(sky: &SkylineResult, path: &Path) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut members: Vec<_> = sky.members.iter().collect();
    members.sort_by_key(|r| r.index);
    for r in members {
        let mut row = vec![r.index.to_string()];
        row.extend(r.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Seed for trial `t` of a run seeded with `seed`.
fn trial_seed(seed: u64, trial: u64) -> u64 {
    seeded_rng(seed, trial).next_u64()
}

fn distribution_label(path: &Path) -> String {
    fs::read(sidecar_path(path))
        .ok()
        .and_then(|b| serde_json::from_slice::<GenSpec>(&b).ok())
        .map_or_else(|| "unknown".to_string(), |s| s.distribution.to_string())
}

fn bench_row(rel: &Relation, path: &Path, m: u64, trials: u64, seed: u64, engine: Engine) -> Result<BenchRow, Error> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let n = rel.n();
    let mut errors = Vec::with_capacity(trials as usize);
    let mut estimates = Vec::with_capacity(trials as usize);
    let mut pages = 0u64;
    let mut nanos = 0u128;
    for t in 0..trials {
        let mut counter = IoCounter::new();
        let start = Instant::now();
        let sky = baseline(rel, m, engine, trial_seed(seed, t), &mut counter)?;
        nanos += start.elapsed().as_nanos();
        pages += counter.pages_read;
        // The oracle scan is not part of the algorithm's I/O.
        errors.push(relation_error(&sky.members, rel, &mut IoCounter::new())?.error);
        estimates.push(estimate_error_from_sample(sky.len() as u64, m, n)?);
    }
    let (mean_error, stddev_error) = mean_std(&errors);
    let predicted_error = if m < n { predict_error(rel.d() as u32, m, n)?.predicted_mean } else { 0.0 };
    Ok(BenchRow {
        dataset: path.display().to_string(),
        distribution: distribution_label(path),
        n,
        d: rel.d() as u32,
        m,
        engine: engine.to_string(),
        trials,
        mean_error,
        stddev_error,
        predicted_error,
        sample_estimate: mean_std(&estimates).0,
        mean_pages_read: pages as f64 / trials as f64,
        mean_wall_nanos: nanos as f64 / trials as f64,
    })
}

fn cmd_baseline(a: BaselineArgs) -> Result<(), Error> {
    let rel = Relation::open(&a.input)?;
    let row = bench_row(&rel, &a.input, a.m, a.trials, a.seed, a.engine)?;
    let report = BenchReport { rows: vec![row] };
    if a.json {
        print_json(&report)
    } else {
        report.write_csv(io::stdout().lock()).map_err(io::Error::from)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct DoubleSummary {
    epsilon: f64,
    delta: f64,
    s_v: u64,
    s_initial: u64,
    engine: Engine,
    final_m: u64,
    rounds: usize,
    terminated: bool,
    fell_back_to_exact: bool,
    last_eps_hat: Option<f64>,
    skyline_size: usize,
    pages_read: u64,
    full_scan_pages: u64,
    wall_nanos: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_error: Option<f64>,
}

fn cmd_double(a: DoubleArgs) -> Result<(), Error> {
    let rel = Relation::open(&a.input)?;
    let mut params = match (&a.preset, a.epsilon) {
        (Some(p), _) => ApproxParams::preset(p, a.delta)?,
        (None, Some(e)) => ApproxParams::new(e, a.delta)?,
        (None, None) => return Err(Error::InvalidParameter("give --epsilon or --preset".into())),
    }
    .with_engine(a.engine);
    if let Some(s) = a.s_initial {
        params = params.with_s_initial(s)?;
    }
    let s_v = required_verification_size(rel.n(), params.epsilon, params.delta)?;

    let mut counter = IoCounter::new();
    let start = Instant::now();
    let (sky, trace) = double(&rel, &params, a.seed, &mut counter)?;
    let wall = start.elapsed();

    if let Some(path) = &a.trace {
        let mut w = BufWriter::new(File::create(path)?);
        trace.write_jsonl(&mut w)?;
        w.flush()?;
    }
    let true_error = if a.oracle {
        Some(relation_error(&sky.members, &rel, &mut IoCounter::new())?.error)
    } else {
        None
    };
    print_json(&DoubleSummary {
        epsilon: params.epsilon,
        delta: params.delta,
        s_v,
        s_initial: params.s_initial.unwrap_or(s_v),
        engine: params.engine,
        final_m: trace.final_m,
        rounds: trace.rounds.len(),
        terminated: trace.terminated,
        fell_back_to_exact: trace.fell_back_to_exact,
        last_eps_hat: trace.rounds.last().map(|r| r.eps_hat),
        skyline_size: sky.len(),
        pages_read: counter.pages_read,
        full_scan_pages: rel.header().data_pages(),
        wall_nanos: wall.as_nanos(),
        true_error,
    })
}

fn cmd_error_table(a: ErrorTableArgs) -> Result<(), Error> {
    let scratch = tempfile::tempdir()?;
    let inputs: Vec<PathBuf> = if a.input.is_empty() {
        a.d.iter()
            .map(|&d| {
                let p = scratch.path().join(format!("{}_d{d}_n{}.skyr", a.dist, a.n));
                let mut spec = GenSpec::new(a.n, d, a.dist, trial_seed(a.seed, u64::from(d)));
                spec.layout = PageLayout::for_dim(d, env_page_bytes()?);
                generate(&spec, &p)?;
                Ok(p)
            })
            .collect::<Result<_, Error>>()?
    } else {
        a.input.clone()
    };

    let mut report = BenchReport::default();
    for path in &inputs {
        let rel = Relation::open(path)?;
        for &m in &a.m {
            if m > rel.n() {
                return Err(Error::SampleTooLarge { m, n: rel.n() });
            }
            let seed = trial_seed(a.seed, m ^ (u64::from(rel.d() as u32) << 48));
            let mut row = bench_row(&rel, path, m, a.trials, seed, a.engine)?;
            if a.input.is_empty() {
                // Generated files live in a scratch directory; label them by spec.
                row.dataset = format!("generated:{}:d{}:n{}", a.dist, rel.d(), rel.n());
            }
            report.rows.push(row);
        }
    }

    match &a.csv {
        Some(p) => report.write_csv(BufWriter::new(File::create(p)?)),
        None => report.write_csv(io::stdout().lock()),
    }
    .map_err(io::Error::from)?;
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_vec_pretty(&report)?)?;
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<(), Error> {
    print_json(&predict_error(a.d, a.m, a.n)?)
}
