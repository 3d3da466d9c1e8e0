//! `zovr` command-line front end.
//!
//! Exit codes: 0 success, 1 error, 2 divergence, 3 a comparison or check
//! did not pass.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zovr::harness::accounting::{measure_peak_slots, tracking_active};
use zovr::harness::compare::{compare, summarize, write_curves, Criterion};
use zovr::harness::config::{parse_count, read_pairs, RunConfig};
use zovr::harness::presets::{preset, preset_csv_path, run_preset};
use zovr::harness::records::{load_records, save_records, write_records};
use zovr::harness::verify;
use zovr::harness::TrackingAllocator;
use zovr::trajectory::{load_params, replay, save_params};
use zovr::{run, TrajectoryLog, ZoError};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

const EXIT_ERROR: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "zovr",
    version,
    about = "Zeroth-order optimization runs, comparisons and replay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration or a named preset.
    Run(Box<RunArgs>),
    /// Compare recorded runs at equal query counts.
    Compare(CompareArgs),
    /// Reconstruct a checkpoint from a trajectory log.
    Replay(ReplayArgs),
    /// Run the oracle suite.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// key = value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    query_budget: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    anchor_batch: Option<usize>,
    #[arg(long)]
    lr1: Option<f64>,
    #[arg(long)]
    lr2: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    accounting_mode: Option<String>,
    /// Preset name; `--out` is then a directory.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    traj_out: Option<PathBuf>,
    #[arg(long)]
    params_out: Option<PathBuf>,
    #[arg(long)]
    theta0_out: Option<PathBuf>,
}

impl RunArgs {
    fn flag_pairs(&self) -> Vec<(String, String)> {
        fn show<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(T::to_string)
        }
        fn path(p: &Option<PathBuf>) -> Option<String> {
            p.as_ref().map(|p| p.display().to_string())
        }
        [
            ("problem", self.problem.clone()),
            ("optimizer", self.optimizer.clone()),
            ("steps", show(&self.steps)),
            ("query_budget", show(&self.query_budget)),
            ("batch_size", show(&self.batch_size)),
            ("anchor_batch", show(&self.anchor_batch)),
            ("lr1", show(&self.lr1)),
            ("lr2", show(&self.lr2)),
            ("mu", show(&self.mu)),
            ("q", show(&self.q)),
            ("kappa", show(&self.kappa)),
            ("alpha", show(&self.alpha)),
            ("seed", show(&self.seed)),
            ("eval_every", show(&self.eval_every)),
            ("accounting_mode", self.accounting_mode.clone()),
            ("out", path(&self.out)),
            ("traj_out", path(&self.traj_out)),
            ("params_out", path(&self.params_out)),
            ("theta0_out", path(&self.theta0_out)),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Run CSVs; the first is the reference.
    #[arg(required = true, num_args = 2..)]
    runs: Vec<PathBuf>,
    /// `metric` or `metric<=ratio`, metric one of final_loss, final_gap, trailing_std.
    #[arg(long, default_value = "final_loss")]
    criterion: Criterion,
    /// Merged loss-vs-query curves.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long)]
    theta0: PathBuf,
    /// Defaults to the last recorded step.
    #[arg(long)]
    step: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Error(ZoError),
    Diverged(String),
    CheckFailed,
}

impl From<ZoError> for Failure {
    fn from(e: ZoError) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("ZOVR_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) if a.preset.is_some() => cmd_preset(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Replay(a) => cmd_replay(&a),
        Command::Verify => cmd_verify(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
        Err(Failure::Diverged(msg)) => {
            eprintln!("diverged: {msg}");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(Failure::CheckFailed) => ExitCode::from(EXIT_CHECK_FAILED),
    }
}

fn load_config(a: &RunArgs) -> Result<RunConfig, ZoError> {
    let mut pairs = match &a.config {
        Some(p) => read_pairs(p)?,
        None => Vec::new(),
    };
    pairs.extend(a.flag_pairs());
    RunConfig::from_pairs(pairs)
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(a)?;
    if cfg.traj_out.is_some() && !cfg.optimizer.kind().replayable() {
        return Err(ZoError::Config(format!("{} runs cannot be recorded for replay", cfg.optimizer.kind())).into());
    }
    let problem = cfg.problem.build()?;
    if let Some(p) = &cfg.theta0_out {
        save_params(&problem.theta0, p)?;
    }
    let spec = cfg.run_spec(problem.f_star);
    let (outcome, measured) = measure_peak_slots(|| run(problem.objective(), &problem.theta0, &spec));
    let outcome = outcome?;

    match &cfg.out {
        Some(p) => save_records(p, &outcome.records, &[])?,
        None => write_records(std::io::stdout().lock(), &outcome.records, &[])?,
    }
    if let (Some(p), Some(log)) = (&cfg.traj_out, &outcome.trajectory) {
        log.save(p)?;
    }
    if let Some(p) = &cfg.params_out {
        save_params(&outcome.theta, p)?;
    }

    let modeled = outcome.records.first().map_or(0, |r| r.peak_slots);
    let mut err = std::io::stderr().lock();
    let _ = writeln!(
        err,
        "{} steps, {} queries, final loss {}",
        outcome.steps,
        outcome.total_queries,
        outcome.final_loss.map_or_else(|| "-".into(), |l| format!("{l:.6e}"))
    );
    match measured.filter(|_| tracking_active()) {
        Some(m) => {
            let _ = writeln!(err, "peak slots: modeled {modeled}, measured {m}");
        }
        None => {
            let _ = writeln!(err, "peak slots: modeled {modeled}");
        }
    }
    match outcome.failure {
        Some(f) if f.diverged => Err(Failure::Diverged(format!("step {}: {}", f.step, f.reason))),
        Some(f) => Err(ZoError::Contract(format!("step {}: {}", f.step, f.reason)).into()),
        None => Ok(()),
    }
}

fn cmd_preset(a: &RunArgs) -> Result<(), Failure> {
    let name = a.preset.as_deref().unwrap_or_default();
    let p = preset(name, a.seed.unwrap_or(0), a.query_budget)?;
    let report = run_preset(&p, a.out.as_deref())?;
    for r in &report.runs {
        let s = &r.summary;
        println!(
            "{:<16} steps {:>8} queries {:>10} final loss {}",
            r.label,
            s.steps,
            s.final_queries,
            s.final_loss.map_or_else(|| "-".into(), |l| format!("{l:.6e}"))
        );
        if let Some(dir) = &a.out {
            println!("  wrote {}", preset_csv_path(dir, p.name, &r.label).display());
        }
    }
    for c in &report.checks {
        print!("{c}");
    }
    if let Some(r) = report.runs.iter().find(|r| r.outcome.diverged()) {
        let reason = r.outcome.failure.as_ref().map_or("", |f| f.reason.as_str());
        return Err(Failure::Diverged(format!("{}: {reason}", r.label)));
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

fn label(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_compare(a: &CompareArgs) -> Result<(), Failure> {
    let runs = a
        .runs
        .iter()
        .map(|p| summarize(&label(p), &load_records(p)?))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(p) = &a.out {
        let file = std::fs::File::create(p).map_err(|e| ZoError::io(p, e))?;
        write_curves(std::io::BufWriter::new(file), &runs)?;
    }
    let report = compare(runs, a.criterion)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

fn cmd_replay(a: &ReplayArgs) -> Result<(), Failure> {
    let log = TrajectoryLog::load(&a.trajectory)?;
    let theta0 = load_params(&a.theta0)?;
    let step = a.step.unwrap_or_else(|| log.steps());
    let theta = replay(&log, &theta0, step)?;
    save_params(&theta, &a.out)?;
    eprintln!("reconstructed step {step} of {} into {}", log.steps(), a.out.display());
    Ok(())
}

fn cmd_verify() -> Result<(), Failure> {
    let results = verify::run_all();
    for r in &results {
        println!("{r}");
    }
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}
