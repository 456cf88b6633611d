//! `aws-sgd`: generate data, run, calibrate, sweep, verify and report.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use aws_sgd::data::write_libsvm;
use aws_sgd::engine::{
    calibrate_beta, report_rows, run_stream, set_path, sweep, write_report, write_run_outputs, DatasetRef,
    ParamRange, RunConfig, SweepSpec,
};
use aws_sgd::theory::{run_suite, BoundReport, VerifyOptions, SUITES};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "aws-sgd", version, about = "Loss-based sampling and adaptive-weight SGD")]
struct Cli {
    /// Worker threads for sweeps and verification (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `step_policy.beta=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize a dataset as LIBSVM text.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One streaming pass; writes metrics.csv, summary.json and model.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find the sampling scale that hits a target sampling rate.
    CalibrateBeta {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        target_rate: f64,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        #[arg(long, default_value_t = 30)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random search over configuration parameters.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Sweep specification (JSON); `--param`, `--budget` and
        /// `--target-rate` override or extend it.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Parameter range `KEY=LO:HI` or `KEY=LO:HI:log`. Repeatable.
        #[arg(long = "param", value_name = "RANGE")]
        params: Vec<String>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        target_rate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the convergence bounds numerically. Exits 1 if any fails.
    Verify {
        /// Suite name, or `all`.
        suite: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Seeds per bound check.
        #[arg(long)]
        seeds: Option<usize>,
        /// Fewer seeds per check.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Long-format CSV of average progressive loss from run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics column to average (default: loss_logistic).
        #[arg(long)]
        loss_column: Option<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AWS_SGD_LOG", "error")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !msg.contains(&c) {
            msg = format!("{msg}: {c}");
        }
    }
    msg
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::GenData { cfg, out } => gen_data(&cfg, &out),
        Command::Run { cfg, out } => run(&cfg, &out),
        Command::CalibrateBeta { cfg, target_rate, tol, max_iter, out } => {
            calibrate(&cfg, target_rate, tol, max_iter, &out)
        }
        Command::Sweep { cfg, spec, params, budget, target_rate, out } => {
            run_sweep(&cfg, spec.as_deref(), &params, budget, target_rate, &out)
        }
        Command::Verify { suite, out, seeds, quick, seed } => verify(&suite, &out, seeds, quick, seed),
        Command::Report { runs, out, loss_column } => report(&runs, out.as_deref(), loss_column.as_deref()),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Deserializes with the path of the offending key in the error.
fn typed<T: DeserializeOwned>(doc: Value, what: &str) -> Result<T> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("invalid {what} at `{path}`: {}", e.into_inner())
    })
}

/// Applies `--set` pairs, then `--seed` at `seed_key`.
fn apply_overrides(doc: &mut Value, args: &ConfigArgs, seed_key: &str) -> Result<()> {
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
        set_path(doc, k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        set_path(doc, seed_key, &seed.to_string())?;
    }
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut doc = read_json(&args.config)?;
    apply_overrides(&mut doc, args, "seed")?;
    let cfg: RunConfig = typed(doc, "config")?;
    cfg.validate().context("invalid config")?;
    Ok(cfg)
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Accepts a dataset spec (`{"source": ...}`) or a full run configuration,
/// whose featurization is then applied.
fn gen_data(args: &ConfigArgs, out: &Path) -> Result<u8> {
    let mut doc = read_json(&args.config)?;
    let ds = if doc.get("dataset").is_some() {
        apply_overrides(&mut doc, args, "dataset.seed")?;
        let cfg: RunConfig = typed(doc, "config")?;
        cfg.load_dataset()?
    } else {
        apply_overrides(&mut doc, args, "seed")?;
        let dref: DatasetRef = typed(doc, "dataset spec")?;
        RunConfig::new(dref, aws_sgd::LossKind::Logistic, placeholder_policy()).load_dataset()?
    };
    fs::create_dir_all(out)?;
    let path = out.join("data.libsvm");
    write_libsvm(&ds, &path)?;
    println!("wrote {} examples, d = {}, to {}", ds.len(), ds.d, path.display());
    Ok(0)
}

fn placeholder_policy() -> aws_sgd::StepPolicy {
    aws_sgd::StepPolicy::ConstantWeight { gamma: 1.0, pi: aws_sgd::PiSpec::Constant { p: 1.0 } }
}

fn run(args: &ConfigArgs, out: &Path) -> Result<u8> {
    let cfg = load_config(args)?;
    let result = run_stream(&cfg)?;
    write_run_outputs(out, &cfg, &result)?;
    let s = &result.summary;
    println!("iterations {}  samples {}  rate {:.4}", s.n, s.total_samples, s.sampling_rate);
    for p in &s.progressive {
        println!("average progressive {}: {:.6}", p.loss, p.average);
    }
    Ok(0)
}

fn calibrate(args: &ConfigArgs, target: f64, tol: f64, max_iter: usize, out: &Path) -> Result<u8> {
    let cfg = load_config(args)?;
    let ds = cfg.load_dataset()?;
    let cal = calibrate_beta(&cfg, &ds, target, tol, max_iter)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("calibration.json"), &json!({
        "target_rate": target,
        "tol": tol,
        "scale": cal.scale,
        "achieved_rate": cal.achieved_rate,
        "probes": cal.probes,
    }))?;
    write_json(&out.join("config.json"), &cal.config)?;
    println!("scale {:.6e}  rate {:.4} (target {target}, {} probes)", cal.scale, cal.achieved_rate, cal.probes.len());
    Ok(0)
}

fn parse_range(s: &str) -> Result<ParamRange> {
    let (key, range) = s.split_once('=').ok_or_else(|| anyhow!("--param expects KEY=LO:HI[:log], got `{s}`"))?;
    let parts: Vec<&str> = range.split(':').collect();
    let log = match parts.get(2) {
        None => false,
        Some(&"log") => true,
        Some(other) => bail!("--param `{s}`: unknown scale `{other}`"),
    };
    if parts.len() < 2 || parts.len() > 3 {
        bail!("--param expects KEY=LO:HI[:log], got `{s}`");
    }
    let num = |v: &str| v.trim().parse::<f64>().with_context(|| format!("--param `{s}`"));
    Ok(ParamRange { key: key.trim().to_string(), lo: num(parts[0])?, hi: num(parts[1])?, log })
}

fn run_sweep(
    args: &ConfigArgs,
    spec_path: Option<&Path>,
    params: &[String],
    budget: Option<usize>,
    target_rate: Option<f64>,
    out: &Path,
) -> Result<u8> {
    let cfg = load_config(args)?;
    let mut spec: SweepSpec = match spec_path {
        Some(p) => typed(read_json(p)?, "sweep spec")?,
        None => SweepSpec {
            params: Vec::new(),
            budget: 20,
            target_rate: None,
            tol: 0.01,
            max_iter: 30,
            rank_by: aws_sgd::LossKind::Logistic,
            seed: 0,
        },
    };
    for p in params {
        spec.params.push(parse_range(p)?);
    }
    if let Some(b) = budget {
        spec.budget = b;
    }
    if target_rate.is_some() {
        spec.target_rate = target_rate;
    }
    if spec.params.is_empty() {
        bail!("nothing to sweep: give --param or a --spec with params");
    }
    let ds = cfg.load_dataset()?;
    let res = sweep(&cfg, &ds, &spec)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("sweep.json"), &res)?;
    let best = res.best().ok_or_else(|| anyhow!("every candidate failed; see sweep.json"))?;
    write_json(&out.join("best_config.json"), &best.config)?;
    println!("{:>5}  {:>10}  {:>7}  values", "rank", "loss", "rate");
    for (i, e) in res.leaderboard.iter().take(10).enumerate() {
        let vals: Vec<String> = e.values.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
        match &e.error {
            None => println!("{:>5}  {:>10.6}  {:>7.4}  {}", i + 1, e.loss, e.sampling_rate, vals.join(" ")),
            Some(err) => println!("{:>5}  {:>10}  {:>7}  {}  ({err})", i + 1, "failed", "-", vals.join(" ")),
        }
    }
    Ok(0)
}

fn verify(suite: &str, out: &Path, seeds: Option<usize>, quick: bool, seed: u64) -> Result<u8> {
    if suite != "all" && !SUITES.contains(&suite) {
        bail!("unknown suite `{suite}`; expected `all` or one of: {}", SUITES.join(", "));
    }
    let mut opts = if quick { VerifyOptions::quick() } else { VerifyOptions::default() };
    if let Some(s) = seeds {
        opts.seeds = s;
    }
    opts.base_seed = seed;
    let reports = run_suite(suite, &opts)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("verify.json"), &reports)?;
    print_table(&reports)?;
    let failed = reports.iter().filter(|r| !r.holds).count();
    println!("{} of {} checks hold", reports.len() - failed, reports.len());
    Ok(if failed == 0 { 0 } else { 1 })
}

fn print_table(reports: &[BoundReport]) -> io::Result<()> {
    let mut w = io::stdout().lock();
    writeln!(w, "{:<4}  {:<20}  {:>12}  {:>12}  {:>10}  bound", "ok", "suite", "empirical", "theory", "slack")?;
    for r in reports {
        writeln!(
            w,
            "{:<4}  {:<20}  {:>12.5e}  {:>12.5e}  {:>10.3e}  {}",
            if r.holds { "yes" } else { "NO" },
            r.suite,
            r.empirical_value,
            r.theoretical_value,
            r.slack,
            r.bound_name
        )?;
    }
    Ok(())
}

fn report(runs: &[PathBuf], out: Option<&Path>, loss_column: Option<&str>) -> Result<u8> {
    let mut rows = Vec::new();
    let names: Vec<String> = runs
        .iter()
        .map(|d| d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned()))
        .collect();
    let unique = names.iter().collect::<std::collections::HashSet<_>>().len() == names.len();
    for (dir, name) in runs.iter().zip(&names) {
        let metrics = dir.join("metrics.csv");
        if !metrics.is_file() {
            bail!("{} has no metrics.csv", dir.display());
        }
        let method = if unique { name.clone() } else { dir.display().to_string() };
        rows.extend(report_rows(&metrics, &method, loss_column).with_context(|| format!("reading {}", metrics.display()))?);
    }
    match out {
        Some(p) => write_report(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?, &rows)?,
        None => write_report(io::stdout().lock(), &rows)?,
    }
    Ok(0)
}
