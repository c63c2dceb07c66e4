use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use crate::config::Settings;
use crate::CliError;

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunLog {
    pub command: String,
    pub args: Vec<String>,
    pub version: &'static str,
    pub seed: u64,
    pub config: std::collections::BTreeMap<String, String>,
    pub config_hash: String,
    pub wall_time_secs: f64,
    pub exit_code: i32,
    pub error: Option<String>,
    pub outputs: Value,
}

impl RunLog {
    pub fn new(command: &str, args: Vec<String>, settings: &Settings) -> Self {
        Self {
            command: command.to_string(),
            args,
            version: env!("CARGO_PKG_VERSION"),
            seed: settings.get("seed").unwrap_or(0),
            config: settings.values().clone(),
            config_hash: settings.hash(),
            wall_time_secs: 0.0,
            exit_code: 0,
            error: None,
            outputs: Value::Null,
        }
    }

    pub fn finish(&mut self, elapsed: Duration, result: &Result<Value, CliError>) {
        self.wall_time_secs = elapsed.as_secs_f64();
        match result {
            Ok(v) => self.outputs = v.clone(),
            Err(e) => {
                self.exit_code = e.exit_code();
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn write(&self, out_dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(out_dir)?;
        let text = serde_json::to_string_pretty(self).expect("run log serializes");
        std::fs::write(out_dir.join("run_log.json"), text + "\n")
    }
}
