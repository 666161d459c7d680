//! Versioned JSON reports and CSV side files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: &str = "dynreg-report/1";

#[derive(Serialize)]
struct Failure {
    module: String,
    message: String,
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool_version: &'a str,
    config_hash: &'a str,
    /// Everything that varies between identical runs lives here.
    timing: &'a BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Document<'a> {
    schema_version: &'a str,
    command: &'a str,
    status: &'a str,
    error: Option<Failure>,
    config: &'a Value,
    results: &'a BTreeMap<String, Value>,
    files: &'a [String],
    provenance: Provenance<'a>,
}

/// Accumulates results stage by stage so a failure still leaves a partial report.
pub struct Run {
    pub command: String,
    pub out_dir: PathBuf,
    config: Value,
    config_hash: String,
    results: BTreeMap<String, Value>,
    files: Vec<String>,
    timing: BTreeMap<String, f64>,
}

impl Run {
    pub fn new(command: &str, out_dir: PathBuf, config: Value, config_hash: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
        Ok(Self {
            command: command.to_string(),
            out_dir,
            config,
            config_hash,
            results: BTreeMap::new(),
            files: Vec::new(),
            timing: BTreeMap::new(),
        })
    }

    /// Run one pipeline stage, recording its result under `key` and its wall time.
    pub fn stage<T: Serialize>(
        &mut self,
        key: &str,
        module: &str,
        f: impl FnOnce() -> dynreg::Result<T>,
    ) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f();
        self.timing.insert(format!("{key}_seconds"), start.elapsed().as_secs_f64());
        match out {
            Ok(v) => {
                self.put(key, &v);
                Ok(v)
            }
            Err(e) => Err(CliError::Numerical { module: module.to_string(), message: e.to_string() }),
        }
    }

    pub fn put<T: Serialize>(&mut self, key: &str, v: &T) {
        self.results.insert(key.to_string(), serde_json::to_value(v).expect("results serialize"));
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Write `<command>.json`; `failure` marks a partial report.
    pub fn finish(&mut self, failure: Option<&CliError>) -> Result<PathBuf, CliError> {
        let err = failure.map(|f| match f {
            CliError::Numerical { module, message } => Failure { module: module.clone(), message: message.clone() },
            other => Failure { module: "cli".into(), message: other.to_string() },
        });
        let mut files = self.files.clone();
        files.sort();
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            command: &self.command,
            status: if err.is_some() { "numerical_failure" } else { "ok" },
            error: err,
            config: &self.config,
            results: &self.results,
            files: &files,
            provenance: Provenance { tool_version: env!("CARGO_PKG_VERSION"), config_hash: &self.config_hash, timing: &self.timing },
        };
        let path = self.out_dir.join(format!("{}.json", self.command));
        let text = serde_json::to_string_pretty(&doc).expect("report serializes");
        write(&path, &(text + "\n"))?;
        Ok(path)
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
