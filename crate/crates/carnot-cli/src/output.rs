//! Output directory bookkeeping and deterministic CSV/JSON writers.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Step {
    pub name: String,
    pub seconds: f64,
}

/// Files written by one command and the time spent per step.
#[derive(Debug)]
pub struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
    steps: Vec<Step>,
    /// Summary lines printed by the command.
    pub lines: Vec<String>,
}

impl Output {
    pub fn new(dir: PathBuf) -> Self {
        Output {
            dir,
            files: Vec::new(),
            steps: Vec::new(),
            lines: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn step(&mut self, name: &str, elapsed: Duration) {
        self.steps.push(Step {
            name: name.to_string(),
            seconds: elapsed.as_secs_f64(),
        });
    }

    pub fn say(&mut self, line: String) {
        println!("{line}");
        self.lines.push(line);
    }

    pub fn path(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(p.clone());
        Ok(p)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let p = self.path(name)?;
        let bytes =
            serde_json::to_vec_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(&p, bytes)?;
        Ok(p)
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        let p = self.path(name)?;
        let mut w = csv::Writer::from_path(&p).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(p)
    }

    /// Registers a file written by library code.
    pub fn record(&mut self, p: PathBuf) {
        self.files.push(p);
    }
}

/// Shortest round-trip representation, so equal values give equal bytes.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Config(format!("csv: {e}"))
}
