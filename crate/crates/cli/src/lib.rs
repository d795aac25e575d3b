//! Command-line driver: argument parsing, run manifests and exit codes.
//!
//! Every argument documents itself and its default:
//!
//! ```
//! let root = fastdoc_cli::command();
//! for sub in root.get_subcommands() {
//!     for arg in sub.get_arguments() {
//!         let id = arg.get_id().as_str();
//!         if id == "help" || id == "version" {
//!             continue;
//!         }
//!         let help = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
//!         assert!(!help.is_empty(), "{} --{id} has no help", sub.get_name());
//!         let documented = arg.is_required_set()
//!             || !arg.get_default_values().is_empty()
//!             || help.contains("[default:");
//!         assert!(documented, "{} --{id} has no documented default", sub.get_name());
//!     }
//! }
//! ```

pub mod args;
pub mod commands;
pub mod manifest;

use std::path::Path;
use std::time::Instant;

use clap::CommandFactory;
use fastdoc_core::{Error, ErrorKind, Result};

pub use args::{Cli, Command};
pub use manifest::RunManifest;

use manifest::{path_key, sha256_file, Outputs, Timings, TOOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub const THREADS_VAR: &str = "FASTDOC_THREADS";

pub fn command() -> clap::Command {
    Cli::command()
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
        ErrorKind::Io => EXIT_IO,
    }
}

/// Worker threads from the environment; 1 when unset, 0 picks the available
/// parallelism.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Err(e) => Err(Error::Config(format!("{THREADS_VAR}: {e}"))),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_VAR} must be a thread count, got {v:?}"))),
    }
}

/// Runs one command and returns text destined for standard output.
pub fn run(cmd: Command, threads: usize) -> Result<Option<String>> {
    match cmd {
        Command::Replay(a) => replay(&a.manifest, a.out_dir.as_deref(), threads).map(Some),
        cmd => run_recorded(cmd, threads).map(|(_, stdout)| stdout),
    }
}

fn check_inputs(cmd: &Command) -> Result<()> {
    for p in commands::inputs(cmd) {
        if !p.is_file() {
            return Err(Error::Config(format!("input {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn run_recorded(mut cmd: Command, threads: usize) -> Result<(Option<RunManifest>, Option<String>)> {
    commands::resolve(&mut cmd);
    check_inputs(&cmd)?;
    let mut inputs = std::collections::BTreeMap::new();
    for p in commands::inputs(&cmd) {
        inputs.insert(path_key(&p), sha256_file(&p)?);
    }

    let start = Instant::now();
    let mut outputs = Outputs::default();
    let exec = commands::execute(&cmd, threads, &mut outputs)?;
    let wall_ms = u64::try_from(start.elapsed().as_millis()).unwrap_or(u64::MAX);

    let manifest = match commands::manifest_path(&cmd).map(Path::to_path_buf) {
        Some(path) => {
            let m = RunManifest {
                tool: TOOL.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                subcommand: cmd.name().to_string(),
                config: cmd,
                inputs,
                outputs: outputs.digests(),
                threads,
                timings: Timings {
                    wall_ms,
                    steps: exec.steps,
                },
            };
            fastdoc_core::trainer::write_atomic(&path, m.to_json().as_bytes())?;
            Some(m)
        }
        None => None,
    };
    outputs.commit();
    Ok((manifest, exec.stdout))
}

/// Re-runs a recorded command and checks that inputs and outputs hash to the
/// recorded digests. Outputs go to `out_dir` by file name when given.
pub fn replay(manifest_path: &Path, out_dir: Option<&Path>, threads: usize) -> Result<String> {
    if !manifest_path.is_file() {
        return Err(Error::Config(format!(
            "manifest {} does not exist",
            manifest_path.display()
        )));
    }
    let recorded = RunManifest::load(manifest_path)?;
    if recorded.tool != TOOL {
        return Err(Error::Validation(format!("manifest was written by {:?}", recorded.tool)));
    }
    for (path, digest) in &recorded.inputs {
        let p = Path::new(path);
        if !p.is_file() {
            return Err(Error::Config(format!("input {path} does not exist")));
        }
        if &sha256_file(p)? != digest {
            return Err(Error::Validation(format!("input {path} changed since the recorded run")));
        }
    }

    let mut cmd = recorded.config.clone();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| manifest::io_error(dir, e))?;
        commands::redirect(&mut cmd, dir);
    }
    let (fresh, _) = run_recorded(cmd, threads)?;
    let fresh = fresh.ok_or_else(|| Error::Validation("recorded command writes no manifest".into()))?;

    let mut mismatches = Vec::new();
    for (path, digest) in &recorded.outputs {
        let key = match out_dir {
            Some(dir) => path_key(&dir.join(Path::new(path).file_name().unwrap_or_default())),
            None => path.clone(),
        };
        if fresh.outputs.get(&key) != Some(digest) {
            mismatches.push(path.clone());
        }
    }
    if !mismatches.is_empty() {
        return Err(Error::Validation(format!(
            "replay produced different outputs: {}",
            mismatches.join(", ")
        )));
    }
    let summary = serde_json::json!({
        "manifest": path_key(manifest_path),
        "subcommand": recorded.subcommand,
        "outputs_checked": recorded.outputs.len(),
        "identical": true,
    });
    Ok(format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serializes")))
}
