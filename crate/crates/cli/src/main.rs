//! `sparsecov` command-line front end.
//!
//! Exit codes: 0 success, 2 input error, 3 domain error, 4 budget error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sparsecov::estimators::{estimate, EstimatorSpec, ThresholdRule, DEFAULT_ETA, DEFAULT_GAMMA};
use sparsecov::losses::LossSpec;
use sparsecov::lower_bound::lower_bound_report;
use sparsecov::matrix::{read_matrix_csv, write_matrix_csv};
use sparsecov::model::{LeastFavorableConfig, DEFAULT_BUDGET, DEFAULT_UPSILON};
use sparsecov::risk::{fit_groups, run_grid, write_csv, write_json, GridConfig, RiskRecord};
use sparsecov::sampling::{mle_covariance, DataMatrix, RngSeed};
use sparsecov::{Error, ErrorCategory, SymmetricMatrix};

#[derive(Parser, Debug)]
#[command(name = "sparsecov", version, about = "Sparse covariance thresholding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Threshold a sample covariance and write the estimate.
    Estimate(EstimateArgs),
    /// Run a risk simulation grid.
    Simulate(SimulateArgs),
    /// Evaluate the lower-bound construction for one configuration.
    Lowerbound(LowerboundArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rule {
    Hard,
    Soft,
    Alasso,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossName {
    Op1,
    Op2,
    Opinf,
    Fro,
    Stein,
    Vn,
}

impl LossName {
    fn spec(self, normalized: bool) -> LossSpec {
        let name = match self {
            LossName::Op1 => "op1",
            LossName::Op2 => "op2",
            LossName::Opinf => "opinf",
            LossName::Fro => "fro",
            LossName::Stein => "stein",
            LossName::Vn => "vn",
        };
        LossSpec::from_short(name, normalized).expect("every value-enum name is known")
    }
}

#[derive(Args, Debug)]
struct EstimatorArgs {
    #[arg(long, value_enum, default_value_t = Rule::Hard)]
    rule: Rule,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Exponent of the adaptive-lasso rule.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long)]
    psd_project: bool,
    #[arg(long)]
    bregman_guard: bool,
}

impl EstimatorArgs {
    fn spec(&self) -> sparsecov::Result<EstimatorSpec> {
        let rule = match self.rule {
            Rule::Hard => ThresholdRule::Hard,
            Rule::Soft => ThresholdRule::Soft,
            Rule::Alasso => ThresholdRule::AdaptiveLasso { eta: self.eta },
        };
        Ok(EstimatorSpec::new(rule, self.gamma)?
            .with_psd_project(self.psd_project)
            .with_bregman_guard(self.bregman_guard))
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// CSV of observations (one row each), or a covariance with `--covariance`.
    #[arg(long)]
    input: PathBuf,
    /// Treat the input as a precomputed covariance matrix.
    #[arg(long)]
    covariance: bool,
    /// Sample size behind a precomputed covariance.
    #[arg(long, required_if_eq("covariance", "true"))]
    n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Score the estimate against this true covariance (CSV).
    #[arg(long, requires = "loss")]
    truth: Option<PathBuf>,
    #[arg(long, value_enum, requires = "truth")]
    loss: Option<LossName>,
    #[arg(long)]
    normalized: bool,
    /// Accepted for a uniform interface; estimation draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Grid configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed of the grid.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the worker count of the grid.
    #[arg(long)]
    threads: Option<usize>,
    /// Replaces the grid losses.
    #[arg(long, value_enum)]
    loss: Vec<LossName>,
    #[arg(long, requires = "loss")]
    normalized: bool,
}

#[derive(Args, Debug)]
struct LowerboundArgs {
    /// Configuration JSON with `p`, `n`, `q`, `c` and optional `upsilon`.
    #[arg(long, conflicts_with_all = ["p", "n", "q", "c"])]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    p: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[arg(long, required_unless_present = "config")]
    c: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_UPSILON)]
    upsilon: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo samples for the affinity.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Enumeration budget.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    arguments: Vec<String>,
    library_version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    master_seed: Option<u64>,
    started: String,
    finished: String,
    outputs: Vec<PathBuf>,
}

struct Run {
    command: &'static str,
    started: String,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str, seed: Option<u64>) -> Self {
        Self {
            command,
            started: now(),
            seed,
            outputs: Vec::new(),
        }
    }

    fn write(&mut self, path: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> sparsecov::Result<()>) -> sparsecov::Result<()> {
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.outputs.push(path);
        Ok(())
    }

    fn finish(self, out: &Path) -> sparsecov::Result<()> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            arguments: std::env::args().collect(),
            library_version: sparsecov::VERSION,
            master_seed: self.seed,
            started: self.started,
            finished: now(),
            outputs: self.outputs,
        };
        let mut w = BufWriter::new(File::create(out.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn json_to<T: Serialize>(value: &T) -> impl FnOnce(&mut BufWriter<File>) -> sparsecov::Result<()> + '_ {
    move |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

fn read_matrix(path: &Path) -> sparsecov::Result<SymmetricMatrix> {
    read_matrix_csv(BufReader::new(File::open(path)?))
}

fn cmd_estimate(args: &EstimateArgs) -> sparsecov::Result<()> {
    let mut run = Run::new("estimate", args.seed);
    let spec = args.estimator.spec()?;
    let (sample_cov, n) = if args.covariance {
        let n = args
            .n
            .ok_or_else(|| Error::InvalidArgument("--covariance needs --n".into()))?;
        (read_matrix(&args.input)?, n)
    } else {
        let x = DataMatrix::read_csv(BufReader::new(File::open(&args.input)?))?;
        let n = x.n();
        (mle_covariance(&x), n)
    };
    let est = estimate(&sample_cov, &spec, n)?;
    let loss = match (&args.truth, args.loss) {
        (Some(path), Some(name)) => {
            let loss = name.spec(args.normalized);
            let truth = read_matrix(path)?;
            Some((loss.label(), loss.evaluate(&est, &truth)?))
        }
        _ => None,
    };
    fs::create_dir_all(&args.out)?;
    run.write(args.out.join("estimate.csv"), |w| write_matrix_csv(&est, w))?;
    if let Some((label, value)) = loss {
        #[derive(Serialize)]
        struct LossReport {
            estimator: String,
            loss: String,
            value: f64,
        }
        let report = LossReport {
            estimator: spec.label(),
            loss: label,
            value,
        };
        run.write(args.out.join("loss.json"), json_to(&report))?;
    }
    run.finish(&args.out)
}

fn plot_rows(records: &[RiskRecord], w: &mut impl Write) -> sparsecov::Result<()> {
    writeln!(w, "estimator,q,c,n,p,x,y,y_err,mean_risk,std_error")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for r in records {
        let x = ((r.p as f64).ln() / r.n as f64).ln();
        let y = r.mean_risk.ln();
        // delta-method standard error of ln(mean)
        let y_err = r.std_error / r.mean_risk;
        writeln!(
            w,
            "{},{},{},{},{},{x:.16e},{y:.16e},{y_err:.16e},{:.16e},{:.16e}",
            r.estimator.label(),
            opt(r.q),
            opt(r.c),
            r.n,
            r.p,
            r.mean_risk,
            r.std_error
        )?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> sparsecov::Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg = GridConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    if !args.loss.is_empty() {
        cfg.losses = args.loss.iter().map(|l| l.spec(args.normalized)).collect();
    }
    cfg.validate()?;
    let mut run = Run::new("simulate", Some(cfg.master_seed));
    let records = run_grid(&cfg)?;
    fs::create_dir_all(&args.out)?;
    run.write(args.out.join("records.json"), |w| write_json(&records, w))?;
    for loss in &cfg.losses {
        let subset: Vec<RiskRecord> = records.iter().filter(|r| &r.loss == loss).cloned().collect();
        let label = loss.label();
        run.write(args.out.join(format!("risk_{label}.csv")), |w| write_csv(&subset, w))?;
        run.write(args.out.join(format!("plot_{label}.csv")), |w| plot_rows(&subset, w))?;
    }
    let fits = fit_groups(&records);
    run.write(args.out.join("rate_fits.json"), json_to(&fits))?;
    run.finish(&args.out)
}

fn cmd_lowerbound(args: &LowerboundArgs) -> sparsecov::Result<()> {
    let mut run = Run::new("lowerbound", Some(args.seed));
    let cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<LeastFavorableConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => LeastFavorableConfig::build(
            args.p.expect("clap enforces p"),
            args.n.expect("clap enforces n"),
            args.q,
            args.c.expect("clap enforces c"),
            args.upsilon,
        )?,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let report = pool.install(|| lower_bound_report(&cfg, args.samples, RngSeed::new(args.seed), args.budget))?;
    fs::create_dir_all(&args.out)?;
    run.write(args.out.join("lowerbound.json"), json_to(&report))?;
    run.finish(&args.out)
}

fn exit_code(err: &Error) -> u8 {
    match err.category() {
        ErrorCategory::Input => 2,
        ErrorCategory::Domain => 3,
        ErrorCategory::Budget => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Lowerbound(a) => cmd_lowerbound(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
