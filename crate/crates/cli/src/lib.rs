//! Batch driver for the podtann pipeline.
//!
//! Every subcommand reads one JSON config, writes its artifacts and reports
//! into `--out`, and records a `manifest.json` with the resolved config and
//! the SHA-256 of each output. Passing that manifest back as `--config`
//! reruns the command.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use podtann_core::artifact::{sha256_hex, toolkit_version, ArtifactError};
use serde_json::{json, Value};
use thiserror::Error;

use crate::commands::Outputs;
use crate::config::{load_config, CommandConfig};
use crate::report::ReportFormat;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("artifact mismatch: {0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Training(_) => 4,
            CliError::Mismatch(_) => 5,
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Fingerprint { .. } => CliError::Mismatch(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "podtann", version, about = "POD-reduced thermodynamics-based energy networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config, or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Simulate an ensemble along random strain paths.
    GenRuc,
    /// Synthesize a correlated Gaussian random field.
    GenField,
    /// Extract a POD basis and its energy-error table.
    Pod,
    /// Train a Helmholtz energy network.
    Train,
    /// Train a Gibbs energy network on macroelement data.
    TrainMacro,
    /// Predict along dataset records.
    Infer,
    /// Field reconstruction error per mode count.
    Reconstruct,
    /// Simulate the Iwan macroelement along force paths.
    MacroGen,
    /// Read exported IC snapshots.
    Ingest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenRuc => "gen-ruc",
            Command::GenField => "gen-field",
            Command::Pod => "pod",
            Command::Train => "train",
            Command::TrainMacro => "train-macro",
            Command::Infer => "infer",
            Command::Reconstruct => "reconstruct",
            Command::MacroGen => "macro-gen",
            Command::Ingest => "ingest",
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("PODTANN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A pool may already exist when running in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute<C: CommandConfig>(
    cli: &Cli,
    f: impl FnOnce(&C, &mut Outputs) -> Result<Value, CliError>,
) -> Result<Value, CliError> {
    let name = cli.command.name();
    let mut cfg: C = match &cli.config {
        Some(p) => load_config(p, name)?,
        None => return Err(CliError::Config(format!("{name} requires --config"))),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let mut out = Outputs::new(cli.out.clone(), cli.format);
    let summary = f(&cfg, &mut out)?;
    write_run_manifest(&cli.out, name, &cfg, &out.files, &summary)?;
    Ok(summary)
}

/// Output file names mapped to their SHA-256.
pub fn hash_outputs(files: &[PathBuf]) -> Result<serde_json::Map<String, Value>, CliError> {
    let mut m = serde_json::Map::new();
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| CliError::Io(format!("{}: {e}", f.display())))?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        m.insert(name, json!(sha256_hex(&bytes)));
    }
    Ok(m)
}

fn write_run_manifest<C: CommandConfig>(
    dir: &Path,
    command: &str,
    cfg: &C,
    files: &[PathBuf],
    summary: &Value,
) -> Result<(), CliError> {
    let config = serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let m = json!({
        "command": command,
        "toolkit": toolkit_version(),
        "config": config,
        "outputs": hash_outputs(files)?,
        "summary": summary,
    });
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs a parsed command, returning its summary.
pub fn dispatch(cli: &Cli) -> Result<Value, CliError> {
    use crate::commands as c;
    match cli.command {
        Command::GenRuc => execute(cli, c::gen_ruc),
        Command::GenField => execute(cli, c::gen_field),
        Command::Pod => execute(cli, c::pod),
        Command::Train => execute(cli, c::train_cmd),
        Command::TrainMacro => execute(cli, c::train_macro_cmd),
        Command::Infer => execute(cli, c::infer),
        Command::Reconstruct => execute(cli, c::reconstruct),
        Command::MacroGen => execute(cli, c::macro_gen),
        Command::Ingest => execute(cli, c::ingest),
    }
}

/// Parses arguments, runs, prints the summary and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    match dispatch(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("podtann {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Simulation(String::new()).exit_code(), 3);
        assert_eq!(CliError::Training(String::new()).exit_code(), 4);
        assert_eq!(CliError::Mismatch(String::new()).exit_code(), 5);
        let fp = ArtifactError::Fingerprint {
            expected: "a".into(),
            got: "b".into(),
        };
        assert_eq!(CliError::from(fp).exit_code(), 5);
        assert_eq!(CliError::from(ArtifactError::Version(9)).exit_code(), 2);
    }

    #[test]
    fn bad_arguments_exit_2() {
        assert_eq!(run(["podtann", "bogus"]), 2);
        assert_eq!(run(["podtann", "pod"]), 2);
    }

    #[test]
    fn rank_parses_numbers_and_full() {
        let v: Vec<config::Rank> = serde_json::from_str(r#"[5, "full"]"#).unwrap();
        assert_eq!(v[0].resolve(9), 5);
        assert_eq!(v[1].resolve(9), 9);
        assert!(serde_json::from_str::<Vec<config::Rank>>(r#"["most"]"#).is_err());
    }
}
