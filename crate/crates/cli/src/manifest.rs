use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smp_control::io::{write_json, SCHEMA_VERSION};

/// Everything needed to re-run a command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    /// Working directory the arguments are relative to.
    pub working_dir: PathBuf,
    /// Output directory after resolving the environment default.
    pub out_dir: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub exit_code: u8,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest-{command}.json")
    }

    pub fn new(command: &str, argv: &[String], out_dir: &Path) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: argv.iter().skip(1).cloned().collect(),
            working_dir: std::env::current_dir().unwrap_or_default(),
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            config: serde_json::Value::Null,
            seed: None,
            outputs: Vec::new(),
            exit_code: 0,
            wall_time_s: 0.0,
        }
    }

    pub fn write(&self) -> smp_control::Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(Self::file_name(&self.command));
        write_json(&path, self)?;
        Ok(path)
    }
}
