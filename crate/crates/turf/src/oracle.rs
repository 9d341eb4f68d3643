//! Accuracy oracles backed by files and external programs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use turf_core::explore::{replacement_key, AccuracyOracle, TableOracle};
use turf_core::model::ModelSpec;
use turf_core::Error;

use crate::error::{CliError, Result};
use crate::model_file::ModelFile;

/// Reads `replacement,accuracy` rows (with a header) into a table oracle.
pub fn load_table_oracle(path: &Path) -> Result<TableOracle> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| CliError::parse(path, e))?;
    let mut entries = BTreeMap::new();
    for row in reader.deserialize::<(String, f64)>() {
        let (key, acc) = row.map_err(|e| CliError::parse(path, e))?;
        entries.insert(key, acc);
    }
    Ok(TableOracle::new(entries)?)
}

/// Runs a shell command per candidate. The model file is written to its
/// standard input; `TURF_REPLACEMENT` and `TURF_BUDGET` are set in its
/// environment; it prints one accuracy in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ExternalOracle {
    pub command: String,
}

impl AccuracyOracle for ExternalOracle {
    fn accuracy(&self, model: &ModelSpec, budget: u32) -> turf_core::Result<f64> {
        let body = serde_json::to_vec(&ModelFile::from_model(model)).map_err(|e| Error::Oracle(e.to_string()))?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .env("TURF_REPLACEMENT", replacement_key(model))
            .env("TURF_BUDGET", budget.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Oracle(format!("cannot start `{}`: {e}", self.command)))?;
        // a command that ignores its input may close the pipe early
        let _ = child.stdin.take().expect("piped stdin").write_all(&body);
        let out = child.wait_with_output().map_err(|e| Error::Oracle(e.to_string()))?;
        if !out.status.success() {
            return Err(Error::Oracle(format!("`{}` exited with {}", self.command, out.status)));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let acc: f64 = text.trim().parse().map_err(|_| Error::Oracle(format!("`{}` printed `{}`", self.command, text.trim())))?;
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::Oracle(format!("`{}` returned accuracy {acc}", self.command)));
        }
        Ok(acc)
    }

    fn describe(&self) -> String {
        format!("external ({})", self.command)
    }
}
