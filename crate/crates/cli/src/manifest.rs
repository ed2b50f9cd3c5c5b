//! Run manifests: every output file is accompanied by a sibling
//! `<file>.manifest.json` recording the subcommand, inputs, parameters and
//! tool version that produced it. Data files themselves stay deterministic;
//! timestamps live only in the manifest.

use crate::AppError;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub inputs: BTreeMap<String, String>,
    pub params: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
    pub created_unix_ms: u128,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        RunManifest {
            tool: "survscale",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            inputs: BTreeMap::new(),
            params: BTreeMap::new(),
            outputs: Vec::new(),
            created_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
        }
    }

    pub fn input(mut self, key: &str, path: &Path) -> Self {
        self.inputs.insert(key.to_string(), path.display().to_string());
        self
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        let value = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Writes `<data_path>.manifest.json` next to the data file.
    pub fn write_beside(&self, data_path: &Path) -> Result<(), AppError> {
        let mut manifest_path = data_path.as_os_str().to_owned();
        manifest_path.push(".manifest.json");
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| AppError::Io(format!("serialising manifest: {e}")))?;
        std::fs::write(&manifest_path, body).map_err(|e| {
            AppError::Io(format!(
                "writing manifest {}: {e}",
                Path::new(&manifest_path).display()
            ))
        })
    }
}
