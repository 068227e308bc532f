//! The run manifest written next to every command's outputs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use colannot::pipeline::write_atomic;
use serde::Serialize;

use crate::failure::Failure;

pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("COLANNOT_GIT_DESCRIBE"));

#[derive(Clone, Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub artifact_version: String,
    pub seed: u64,
    pub workers: usize,
    pub config: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, workers: usize) -> Self {
        RunManifest {
            command: command.to_string(),
            argv,
            artifact_version: ARTIFACT_VERSION.to_string(),
            seed: 0,
            workers,
            config: serde_json::Value::Null,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: unix_now(),
            finished_unix: None,
            status: "running".into(),
            error: None,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn finish(&mut self, outcome: &Result<(), Failure>) {
        self.finished_unix = Some(unix_now());
        match outcome {
            Ok(()) => self.status = "ok".into(),
            Err(f) => {
                self.status = "error".into();
                self.error = Some(ErrorInfo {
                    kind: f.kind().into(),
                    exit_code: f.exit_code(),
                    message: f.message().into(),
                });
            }
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(path, text.as_bytes())
    }
}
