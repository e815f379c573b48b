//! `nanodetect`: runs detection scenarios and writes CSV.
//!
//! Exit status: 0 on success, 2 for unreadable or invalid input, 3 when any
//! row failed numerically, 4 for an unknown preset.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nanodetect::report::to_csv;
use nanodetect::scenario::{preset, run_scenario, sweep, Document, RunOptions, RunOutcome, Scenario, ScenarioError};

const EXIT_PARSE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_PRESET: u8 = 4;

#[derive(Parser)]
#[command(name = "nanodetect", version, about = "Target-detection probabilities for clustered nanomachine networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Simulation seed; falls back to the scenario file, then NANODETECT_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo realizations per scenario.
    #[arg(long, global = true)]
    realizations: Option<u64>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Worker threads (affects speed only).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Fill the wall_ms column (makes output run-dependent).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario file.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a built-in figure preset.
    Preset {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a scenario file once per value of one key.
    Sweep {
        file: PathBuf,
        /// `key=v1,v2,...`
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate { file: PathBuf },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Self {
        Self { code: EXIT_PARSE, message: message.into() }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if matches!(e, ScenarioError::UnknownPreset(_)) { EXIT_PRESET } else { EXIT_PARSE };
        Self { code, message: e.to_string() }
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var("NANODETECT_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::parse(format!("NANODETECT_SEED must be an unsigned integer, found '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn read_document(cli: &Cli, file: &Path) -> Result<Document, Failure> {
    let text = fs::read_to_string(file).map_err(|e| Failure::parse(format!("{}: {e}", file.display())))?;
    let mut doc = Document::parse(&text)?;
    let seed = match cli.seed {
        Some(s) => Some(s),
        None if doc.contains("sim.seed") => None,
        None => env_seed()?,
    };
    if let Some(s) = seed {
        doc.set("sim.seed", &s.to_string())?;
    }
    if let Some(n) = cli.realizations {
        doc.set("sim.realizations", &n.to_string())?;
    }
    if let Some(x) = cli.rel_tol {
        doc.set("quad.rel_tol", &format!("{x:?}"))?;
    }
    Ok(doc)
}

fn preset_scenarios(cli: &Cli, id: &str) -> Result<Vec<Scenario>, Failure> {
    let mut all = preset(id)?;
    let seed = match cli.seed {
        Some(s) => Some(s),
        None => env_seed()?,
    };
    for s in &mut all {
        if let Some(seed) = seed {
            s.sim.seed = seed;
        }
        if let Some(n) = cli.realizations {
            s.sim.n_realizations = n;
        }
        if let Some(x) = cli.rel_tol {
            s.quad.rel_tol = x;
        }
        if let Err(v) = s.check() {
            let messages: Vec<_> = v.iter().map(|v| v.message.clone()).collect();
            return Err(Failure::parse(messages.join("; ")));
        }
    }
    Ok(all)
}

fn run_all(cli: &Cli, scenarios: &[Scenario], out: Option<&Path>) -> Result<(), Failure> {
    let opts = RunOptions { timing: cli.timing };
    let mut outcome = RunOutcome::default();
    for s in scenarios {
        outcome.extend(run_scenario(s, &opts));
    }
    let text = match cli.format {
        Format::Csv => to_csv(&outcome.rows),
    };
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::parse(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    if outcome.failures.is_empty() {
        return Ok(());
    }
    for f in &outcome.failures {
        eprintln!("failed: {f}");
    }
    Err(Failure { code: EXIT_NUMERIC, message: format!("{} row(s) failed", outcome.failures.len()) })
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { file, out } => {
            let s = Scenario::from_document(&read_document(cli, file)?)?;
            run_all(cli, &[s], out.as_deref())
        }
        Command::Preset { id, out } => run_all(cli, &preset_scenarios(cli, id)?, out.as_deref()),
        Command::Sweep { file, vary, out } => {
            let (key, values) = vary.split_once('=').ok_or_else(|| Failure::parse("--vary expects key=v1,v2,..."))?;
            let values: Vec<&str> = values.split(',').map(str::trim).collect();
            let all = sweep(&read_document(cli, file)?, key.trim(), &values)?;
            run_all(cli, &all, out.as_deref())
        }
        Command::Validate { file } => {
            let s = Scenario::from_document(&read_document(cli, file)?)?;
            println!("ok: {} ({} methods, {} times)", s.name, s.methods.len(), s.t_grid.len());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
