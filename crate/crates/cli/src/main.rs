//! Batch driver for the LEO transfer studies and custom transfers.
//!
//! Usage:
//!   lowthrust run --study meo --case 1
//!   lowthrust run --study heo --case 1 --eta 0.01 --mesh-intervals 170 --warm-start results/heo-2/trajectory.csv
//!   lowthrust run --problem transfer.toml --format json
//!   lowthrust suite --studies meo,geo --cases 1,3 --max-time 1800

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lowthrust_core::bbsoc::BbsocError;
use lowthrust_core::collocation::Trajectory;
use lowthrust_core::problem::{Study, TransferConfig, TransferProblem};
use lowthrust_core::report::{
    export_trajectory, read_trajectory, suite_table, write_summary, ExportFormat, Frame, SuiteRow,
};
use lowthrust_core::transfer::{solve_case, solve_transfer, RunOptions, RunStatus, TransferError, TransferRun};
use serde::{Deserialize, Serialize};

const CONFIG_ERROR: u8 = 4;
const INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "lowthrust", version, about = "Minimum-fuel low-thrust transfers with bang-bang structure detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one transfer
    Run(RunArgs),
    /// Solve a grid of tabulated cases and print the summary table
    Suite(SuiteArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Study: meo, heo or geo
    #[arg(long, required_unless_present = "problem")]
    study: Option<Study>,

    /// Case number 1..7 within the study
    #[arg(long, required_unless_present = "problem")]
    case: Option<usize>,

    /// Custom transfer definition (TOML) instead of a tabulated case
    #[arg(long, conflicts_with_all = ["study", "case"])]
    problem: Option<PathBuf>,

    /// Trajectory file (mee frame) used as the initial guess
    #[arg(long)]
    warm_start: Option<PathBuf>,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SuiteArgs {
    /// Comma-separated studies
    #[arg(long, value_delimiter = ',', default_values = ["meo", "heo", "geo"])]
    studies: Vec<Study>,

    /// Comma-separated case numbers
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5, 6, 7])]
    cases: Vec<usize>,

    /// Parallel workers (default: available cores)
    #[arg(long)]
    jobs: Option<usize>,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Relative jump threshold for arc detection
    #[arg(long)]
    eta: Option<f64>,

    /// Intervals of the initial mesh
    #[arg(long)]
    mesh_intervals: Option<usize>,

    /// Collocation points per initial interval
    #[arg(long)]
    points: Option<usize>,

    /// NLP tolerance [default: 1e-7]
    #[arg(long)]
    nlp_tol: Option<f64>,

    /// Mesh error tolerance [default: 1e-2]
    #[arg(long)]
    mesh_tol: Option<f64>,

    /// Wall-time cap per case in seconds
    #[arg(long)]
    max_time: Option<f64>,

    /// Output directory
    #[arg(long, env = "LOWTHRUST_OUT")]
    out: Option<PathBuf>,

    /// Trajectory format: csv or json [default: csv]
    #[arg(long)]
    format: Option<ExportFormat>,

    /// Element frame of exported trajectories: mee, coe or cartesian [default: mee]
    #[arg(long)]
    frame: Option<Frame>,

    /// Settings file (TOML) with the same keys as the flags
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Settings file contents. Flags given on the command line take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct Settings {
    eta: Option<f64>,
    mesh_intervals: Option<usize>,
    points: Option<usize>,
    nlp_tol: Option<f64>,
    mesh_tol: Option<f64>,
    max_time: Option<f64>,
    out: Option<PathBuf>,
    format: Option<ExportFormat>,
    frame: Option<Frame>,
    warm_start: Option<PathBuf>,
}

struct Resolved {
    options: RunOptions,
    out: PathBuf,
    format: ExportFormat,
    frame: Frame,
    warm_start: Option<PathBuf>,
}

fn resolve(args: &CommonArgs, warm_start: Option<PathBuf>) -> anyhow::Result<Resolved> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => Settings::default(),
    };
    let defaults = RunOptions::default();
    let max_time = args.max_time.or(file.max_time);
    if let Some(t) = max_time.filter(|t| !(*t > 0.0)) {
        anyhow::bail!("max-time must be positive, got {t}");
    }
    let options = RunOptions {
        eta: args.eta.or(file.eta),
        intervals: args.mesh_intervals.or(file.mesh_intervals),
        points: args.points.or(file.points).unwrap_or(defaults.points),
        nlp_tolerance: args.nlp_tol.or(file.nlp_tol).unwrap_or(defaults.nlp_tolerance),
        mesh_tolerance: args.mesh_tol.or(file.mesh_tol).unwrap_or(defaults.mesh_tolerance),
        max_wall_time: max_time.map(Duration::from_secs_f64),
    };
    Ok(Resolved {
        options,
        out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("results")),
        format: args.format.or(file.format).unwrap_or(ExportFormat::Csv),
        frame: args.frame.or(file.frame).unwrap_or(Frame::Mee),
        warm_start: warm_start.or(file.warm_start),
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    name: &'a str,
    status: RunStatus,
    structure: String,
    guess: lowthrust_core::transfer::GuessSource,
    metrics: &'a lowthrust_core::report::TransferMetrics,
    objective: f64,
    max_violation: f64,
    max_error: f64,
}

#[derive(Serialize)]
struct Failure<'a> {
    name: &'a str,
    kind: &'static str,
    error: String,
}

fn exit_code(err: &TransferError) -> u8 {
    match err {
        TransferError::Config(_) | TransferError::Problem(_) | TransferError::Bbsoc(BbsocError::Config(_)) => {
            CONFIG_ERROR
        }
        _ => INFEASIBLE,
    }
}

fn kind(err: &TransferError) -> &'static str {
    match err {
        TransferError::Problem(_) => "problem",
        TransferError::Guess(_) => "guess",
        TransferError::Bbsoc(_) => "bbsoc",
        TransferError::Report(_) => "report",
        TransferError::Config(_) => "config",
    }
}

fn write_run(dir: &Path, name: &str, run: &TransferRun, res: &Resolved) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let ext = res.format.extension();
    let scales = &run.problem.scales;
    let sol = &run.outcome.solution;
    export_trajectory(&sol.to_trajectory(), scales, res.format, res.frame, &dir.join(format!("trajectory.{ext}")))?;
    export_trajectory(&run.guess, scales, res.format, res.frame, &dir.join(format!("guess.{ext}")))?;
    let summary = Summary {
        name,
        status: run.status,
        structure: run.outcome.structure.signature(),
        guess: run.guess_source,
        metrics: &run.metrics,
        objective: sol.objective,
        max_violation: sol.max_violation,
        max_error: run.outcome.max_error,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let mut log = fs::File::create(dir.join("iterations.jsonl"))?;
    for rec in &run.outcome.history {
        writeln!(log, "{}", serde_json::to_string(rec)?)?;
    }
    Ok(())
}

fn write_failure(dir: &Path, name: &str, err: &TransferError) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    let doc = Failure { name, kind: kind(err), error: err.to_string() };
    fs::write(dir.join("failure.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

fn load_warm_start(path: &Option<PathBuf>) -> anyhow::Result<Option<Trajectory>> {
    path.as_ref()
        .map(|p| read_trajectory(p).with_context(|| format!("reading warm start {}", p.display())))
        .transpose()
}

fn run(args: RunArgs) -> ExitCode {
    let setup = || -> anyhow::Result<_> {
        let res = resolve(&args.common, args.warm_start.clone())?;
        let warm = load_warm_start(&res.warm_start)?;
        let custom = match &args.problem {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Some(TransferConfig::from_toml(&text)?)
            }
            None => None,
        };
        Ok((res, warm, custom))
    };
    let (res, warm, custom) = match setup() {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let (name, result) = match (custom, args.study, args.case) {
        (Some(cfg), _, _) => {
            let name = cfg.name.clone();
            let result = TransferProblem::new(cfg).map_err(TransferError::from).and_then(|prob| {
                let config = res.options.detection(None)?;
                solve_transfer(prob, &config, warm.as_ref())
            });
            (name, result)
        }
        (None, Some(study), Some(case)) => {
            (format!("{study}-{case}"), solve_case(study, case, &res.options, warm.as_ref()))
        }
        _ => unreachable!("clap requires a case or a problem file"),
    };
    let dir = res.out.join(&name);
    match result {
        Ok(run) => {
            if let Err(e) = write_run(&dir, &name, &run, &res) {
                eprintln!("error: {e:#}");
                return ExitCode::from(CONFIG_ERROR);
            }
            match (args.study, args.case) {
                (Some(study), Some(case)) => {
                    let row = SuiteRow {
                        study,
                        case,
                        metrics: Some(run.metrics.clone()),
                        converged: run.status == RunStatus::Converged,
                        error: None,
                    };
                    let mut csv = Vec::new();
                    if write_summary(std::slice::from_ref(&row), &mut csv).is_ok() {
                        let _ = fs::write(dir.join("summary.csv"), &csv);
                    }
                    print!("{}", suite_table(&[row]));
                }
                _ => println!("{name}: {}", serde_json::to_string(&run.metrics).unwrap_or_default()),
            }
            println!("structure {}; results in {}", run.outcome.structure, dir.display());
            ExitCode::from(run.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Err(io) = write_failure(&dir, &name, &e) {
                eprintln!("error: {io:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn suite(args: SuiteArgs) -> ExitCode {
    let res = match resolve(&args.common, None) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let cells: Vec<(Study, usize)> =
        args.studies.iter().flat_map(|&s| args.cases.iter().map(move |&c| (s, c))).collect();
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, cells.len().max(1));
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SuiteRow>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(study, case)) = cells.get(i) else {
                    break;
                };
                let name = format!("{study}-{case}");
                let dir = res.out.join(&name);
                let row = match solve_case(study, case, &res.options, None) {
                    Ok(run) => {
                        let error = write_run(&dir, &name, &run, &res).err().map(|e| format!("{e:#}"));
                        SuiteRow {
                            study,
                            case,
                            converged: run.status == RunStatus::Converged,
                            metrics: Some(run.metrics),
                            error,
                        }
                    }
                    Err(e) => {
                        let _ = write_failure(&dir, &name, &e);
                        SuiteRow { study, case, metrics: None, converged: false, error: Some(e.to_string()) }
                    }
                };
                log::info!("{name} finished");
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });
    let rows: Vec<SuiteRow> = rows.into_inner().unwrap().into_iter().flatten().collect();
    print!("{}", suite_table(&rows));
    let written = fs::create_dir_all(&res.out)
        .map_err(anyhow::Error::from)
        .and_then(|_| Ok(write_summary(&rows, fs::File::create(res.out.join("suite.csv"))?)?));
    if let Err(e) = written {
        eprintln!("error: {e:#}");
    }
    if rows.iter().any(|r| r.error.is_some()) {
        ExitCode::from(INFEASIBLE)
    } else if rows.iter().all(|r| r.converged) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(CONFIG_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run(args) => run(args),
        Command::Suite(args) => suite(args),
    }
}
