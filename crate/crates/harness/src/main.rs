use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blockflow::{format_report, run_scenario, HarnessError, ReportFormat, Scenario};
use blockflow_ensemble::{expand, PatternSpec};
use blockflow_interop::format_task_lines;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Parser)]
#[command(name = "blockflow", version, about = "Run blockflow scenarios on simulated resources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its event log and metrics report.
    Run {
        scenario: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Check a scenario without running it.
    Validate { scenario: PathBuf },
    /// Expand a pattern, or a scenario's workload, and print it as task lines.
    Expand { pattern: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Text => ReportFormat::Text,
        }
    }
}

fn init_logging() {
    let level = std::env::var("BLOCKFLOW_LOG_LEVEL").unwrap_or_else(|_| "error".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
}

fn run(path: &Path, seed: Option<u64>, out: &Path, format: ReportFormat) -> Result<(), HarnessError> {
    let mut scenario = Scenario::load(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let output = run_scenario(&scenario)?;
    fs::create_dir_all(out)?;
    let log_path = out.join(format!("{}.events.jsonl", scenario.name));
    fs::write(&log_path, output.log.to_jsonl())?;
    let ext = match format {
        ReportFormat::Csv => "csv",
        ReportFormat::Text => "txt",
    };
    let report = format_report(&output.metrics, format);
    fs::write(out.join(format!("{}.metrics.{ext}", scenario.name)), &report)?;
    info!("wrote {} events to {}", output.log.len(), log_path.display());
    print!("{report}");
    output.check()
}

fn validate(path: &Path) -> Result<(), HarnessError> {
    let scenario = Scenario::load(path)?;
    scenario.validate()?;
    let dag = scenario.workflow()?;
    println!("{}: ok ({} tasks, {} resources)", scenario.name, dag.len(), scenario.resources.len());
    Ok(())
}

fn expand_file(path: &Path) -> Result<(), HarnessError> {
    let text = fs::read_to_string(path)?;
    let dag = match serde_json::from_str::<PatternSpec>(&text) {
        Ok(spec) => expand(&spec).map_err(|e| HarnessError::Config(e.to_string()))?,
        Err(_) => Scenario::load(path)?.workflow()?,
    };
    print!("{}", format_task_lines(&dag).map_err(|e| HarnessError::Config(e.to_string()))?);
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            format,
        } => run(&scenario, seed, &out, format.into()),
        Command::Validate { scenario } => validate(&scenario),
        Command::Expand { pattern } => expand_file(&pattern),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("blockflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
