//! Command-line front end. `run_cli` does all the work so it can be driven
//! from tests; the binary only forwards `std::env::args`.
//!
//! Exit codes: 0 ok, 1 replay divergence, 2 budget exhausted, 3 episode
//! error, 64 usage, 65 bad input data, 66 missing input file.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agent::{replay, ReplayError};
use crate::config::{ConfigError, RunConfig};
use crate::device::adb::{adb_path_from_env, list_serials, ProcessRunner};
use crate::device::Driver;
use crate::eval::report::{load_results, write_report};
use crate::eval::{
    catalog_for, ingest_tasks, read_labels, run_suite, run_task_episode, Backends, EvalError, SuiteOptions, TaskFileError,
};
use crate::sim::{SimCatalog, World, WorldError};
use crate::trace::{Outcome, Subset, TaskSpec, TRACE_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIVERGED: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_EPISODE_ERROR: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NO_INPUT: i32 = 66;

#[derive(Debug, Parser)]
#[command(name = "tapwise", version, about = "Run, evaluate and replay GUI agent episodes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and print the trace path.
    Run(RunArgs),
    /// Run a task suite and write traces, results and a report.
    Eval(EvalArgs),
    /// Re-execute a simulator trace and check every observation.
    Replay {
        trace_dir: PathBuf,
    },
    /// Merge results directories into one comparison table.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Also write report.txt, report.csv and results.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulator world files.
    Worlds {
        #[command(subcommand)]
        action: WorldsCommand,
    },
    /// Attached phones and bundled worlds.
    Devices {
        #[command(subcommand)]
        action: DevicesCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum WorldsCommand {
    Validate { path: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum DevicesCommand {
    List,
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["sim", "adb"])]
    pub device: Option<String>,
    #[arg(long)]
    pub serial: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Instruction text. With the simulator, `--goal` names the target.
    pub instruction: Option<String>,
    /// Take the task from `--tasks` by id.
    #[arg(long, requires = "tasks")]
    pub task_id: Option<String>,
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// `world:goal` or a unique goal id.
    #[arg(long)]
    pub goal: Option<String>,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallel: Option<u64>,
    #[arg(long, default_value = "eval-out")]
    pub out: PathBuf,
    /// Row label in reports; defaults to the output directory name.
    #[arg(long)]
    pub label: Option<String>,
    /// CSV of human success labels applied before reporting.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl ToString) -> Failure {
    Failure { code, message: message.to_string() }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => EXIT_NO_INPUT,
            _ => EXIT_DATA,
        };
        fail(code, e)
    }
}

impl From<TaskFileError> for Failure {
    fn from(e: TaskFileError) -> Self {
        let code = if matches!(e, TaskFileError::Io { .. }) { EXIT_NO_INPUT } else { EXIT_DATA };
        fail(code, e)
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::Io { .. } => EXIT_NO_INPUT,
            EvalError::Config(_) | EvalError::Labels(_) | EvalError::Task { .. } => EXIT_DATA,
            EvalError::EmptyOutcomes | EvalError::EmptyResults => EXIT_DATA,
        };
        fail(code, e)
    }
}

fn load_config(o: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = match &o.config {
        Some(p) => {
            if !p.is_file() {
                return Err(fail(EXIT_NO_INPUT, format!("config file not found: {}", p.display())));
            }
            RunConfig::load(p)?
        }
        None => {
            let mut c = RunConfig::sim_oracle();
            c.apply_env(|k| std::env::var(k).ok());
            c
        }
    };
    if let Some(d) = &o.device {
        cfg.device.driver = if d == "adb" { Driver::Adb } else { Driver::Sim };
    }
    if let Some(s) = &o.serial {
        cfg.device.serial = Some(s.clone());
    }
    if let Some(s) = o.seed {
        cfg.run.seed = s;
    }
    if let Some(n) = o.max_steps {
        cfg.loop_.max_steps = Some(n as usize);
    }
    Ok(cfg)
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load_config(&a.overrides)?;
    cfg.validate()?;
    let mut task = match (&a.task_id, &a.tasks, &a.instruction) {
        (Some(id), Some(file), _) => ingest_tasks(file)?
            .into_iter()
            .find(|t| &t.id == id)
            .ok_or_else(|| fail(EXIT_DATA, format!("no task '{id}' in {}", file.display())))?,
        (None, _, Some(text)) => TaskSpec::new("adhoc", Subset::Custom("adhoc".into()), text.clone()),
        _ => return Err(fail(EXIT_USAGE, "give an instruction or --task-id with --tasks")),
    };
    if let Some(g) = &a.goal {
        task = task.with_goal(g.clone());
    }
    if cfg.device.driver == Driver::Sim && task.sim_goal.is_none() {
        return Err(fail(EXIT_USAGE, "the sim driver needs --goal (world:goal) or a task with a goal"));
    }
    let opts = SuiteOptions::new("run").with_out_dir(&a.out).with_catalog(catalog_for(&cfg)?);
    let backends = Backends::from_config(&cfg)?;
    let (record, trace) = match run_task_episode(&task, 0, &cfg, &backends, &opts) {
        Ok(r) => r,
        Err(EvalError::Task { task, message }) => return Err(fail(EXIT_EPISODE_ERROR, format!("task '{task}': {message}"))),
        Err(e) => return Err(e.into()),
    };
    if let Some(dir) = &record.trace_dir {
        writeln!(out, "{}", a.out.join(dir).join(TRACE_FILE).display()).ok();
    }
    Ok(match trace.outcome {
        Outcome::Success => EXIT_OK,
        Outcome::BudgetExhausted => EXIT_BUDGET,
        Outcome::Error { .. } => EXIT_EPISODE_ERROR,
    })
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if !a.tasks.is_file() {
        return Err(fail(EXIT_NO_INPUT, format!("tasks file not found: {}", a.tasks.display())));
    }
    let tasks = ingest_tasks(&a.tasks)?;
    let mut cfg = load_config(&a.overrides)?;
    if let Some(r) = a.repeats {
        cfg.run.repeats = r as usize;
    }
    if let Some(p) = a.parallel {
        cfg.run.parallel = p as usize;
    }
    cfg.validate()?;
    let label = a.label.clone().unwrap_or_else(|| dir_label(&a.out));
    let opts = SuiteOptions::new(label.clone()).with_out_dir(&a.out).with_catalog(catalog_for(&cfg)?);
    let mut result = run_suite(&tasks, &cfg, &opts)?;
    if let Some(p) = &a.labels {
        result = result.import_human_labels(&read_labels(p).map_err(EvalError::from)?)?;
        result.write_json(&a.out.join(crate::eval::RESULTS_FILE))?;
    }
    let report = crate::eval::generate_report(&[(label, result)])?;
    report.write_to(&a.out)?;
    write!(out, "{}", report.text).ok();
    Ok(EXIT_OK)
}

fn dir_label(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string())
}

fn cmd_replay(dir: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    match replay(dir) {
        Ok(t) => {
            writeln!(out, "replayed {} steps without divergence", t.steps.len()).ok();
            Ok(EXIT_OK)
        }
        Err(e @ ReplayError::Divergence { .. }) => Err(fail(EXIT_DIVERGED, e)),
        Err(ReplayError::Format(e)) if dir.exists() => Err(fail(EXIT_DATA, e)),
        Err(ReplayError::Format(e)) => Err(fail(EXIT_NO_INPUT, e)),
        Err(e) => Err(fail(EXIT_DATA, e)),
    }
}

fn cmd_report(dirs: &[PathBuf], dest: Option<&Path>, out: &mut dyn Write) -> Result<i32, Failure> {
    let refs: Vec<&Path> = dirs.iter().map(PathBuf::as_path).collect();
    let results = load_results(&refs)?;
    let report = match dest {
        Some(d) => write_report(d, &results)?,
        None => crate::eval::generate_report(&results)?,
    };
    write!(out, "{}", report.text).ok();
    Ok(EXIT_OK)
}

fn cmd_worlds_validate(path: &Path, out: &mut dyn Write) -> Result<i32, Failure> {
    match World::load(path) {
        Ok(w) => {
            writeln!(out, "{}: ok (world '{}', {} screens, {} goals)", path.display(), w.id, w.screens.len(), w.goals.len()).ok();
            Ok(EXIT_OK)
        }
        Err(WorldError::Io(m)) => Err(fail(EXIT_NO_INPUT, format!("{}: {m}", path.display()))),
        Err(WorldError::Invalid(issues)) => {
            let lines: Vec<String> = issues.iter().map(|i| format!("{}: {i}", path.display())).collect();
            Err(fail(EXIT_DATA, lines.join("\n")))
        }
        Err(e) => Err(fail(EXIT_DATA, format!("{}: {e}", path.display()))),
    }
}

fn cmd_devices_list(out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match list_serials(&mut ProcessRunner, &adb_path_from_env()) {
        Ok(serials) => {
            for s in serials {
                writeln!(out, "adb\t{s}").ok();
            }
        }
        Err(e) => {
            writeln!(err, "adb unavailable: {e}").ok();
        }
    }
    for w in SimCatalog::bundled().worlds() {
        writeln!(out, "sim\t{}", w.id).ok();
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                write!(err, "{text}").ok();
            } else {
                write!(out, "{text}").ok();
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Replay { trace_dir } => cmd_replay(&trace_dir, out),
        Command::Report { results, out: dest } => cmd_report(&results, dest.as_deref(), out),
        Command::Worlds { action: WorldsCommand::Validate { path } } => cmd_worlds_validate(&path, out),
        Command::Devices { action: DevicesCommand::List } => cmd_devices_list(out, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            writeln!(err, "error: {}", f.message).ok();
            f.code
        }
    }
}
