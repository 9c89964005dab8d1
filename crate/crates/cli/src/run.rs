//! Exit status, path checks, the worker pool and run-config sidecars.

use std::fmt;
use std::path::{Path, PathBuf};

use mbf_core::fsutil::write_atomic;
use serde::Serialize;

/// Why a command stopped; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or unreadable, unwritable or malformed files.
    Usage(String),
    /// The numerical pipeline failed on valid input.
    Numeric(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Numeric(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<mbf_core::Error> for Failure {
    fn from(e: mbf_core::Error) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

pub type Outcome<T = ()> = std::result::Result<T, Failure>;

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// `MBF_THREADS`, then `--workers`, then the number of logical cores.
pub fn worker_count(flag: Option<usize>) -> Outcome<usize> {
    let n = match std::env::var("MBF_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| usage(format!("MBF_THREADS={v:?} is not a thread count")))?,
        Err(_) => match flag {
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(usage("worker count must be at least 1"));
    }
    Ok(n)
}

pub fn check_inputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Outcome {
    for p in paths {
        if !p.is_file() {
            return Err(usage(format!("no such input file: {}", p.display())));
        }
    }
    Ok(())
}

/// The directory that will receive `path` must exist.
pub fn check_output(path: &Path) -> Outcome {
    if path.file_name().is_none() {
        return Err(usage(format!("output {} is not a file path", path.display())));
    }
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) if !dir.is_dir() => Err(usage(format!("output directory {} does not exist", dir.display()))),
        _ => Ok(()),
    }
}

pub fn ensure_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))
}

/// File stem used as the row id of a path.
pub fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub workers: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl RunConfig {
    pub fn new(subcommand: &str, seed: u64, workers: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            argv: std::env::args().collect(),
            seed,
            workers,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Writes the config as JSON to `path`.
    pub fn save(&self, path: &Path) -> Outcome {
        let json = serde_json::to_string_pretty(self).map_err(|e| usage(e.to_string()))?;
        write_atomic(path, format!("{json}\n").as_bytes())?;
        Ok(())
    }

    /// Writes the config next to `output` as `<output>.run.json`.
    pub fn save_beside(&self, output: &Path) -> Outcome {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".run.json");
        self.save(&output.with_file_name(name))
    }
}
