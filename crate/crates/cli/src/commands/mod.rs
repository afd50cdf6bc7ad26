pub mod axes;
pub mod demo;
pub mod fit;
pub mod metrics;
pub mod quantize;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use raremap::metamodel::MapMetamodel;
use raremap::sampling::{is_weight, InputLaw};
use serde::{Deserialize, Serialize};

use crate::archive::write_bytes;
use crate::config::RunConfig;
use crate::error::{io_error, CliError, CliResult};

pub const BUNDLE_FORMAT: &str = "raremap-metamodel";
pub const BUNDLE_VERSION: u32 = 1;

/// A fitted metamodel together with the configuration that produced it.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bundle {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub model: MapMetamodel,
}

impl Bundle {
    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
        let b: Bundle = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("{}: malformed bundle: {e}", path.display())))?;
        if b.format != BUNDLE_FORMAT || b.version != BUNDLE_VERSION {
            return Err(CliError::Data(format!(
                "{}: unsupported bundle {} v{}",
                path.display(),
                b.format,
                b.version
            )));
        }
        Ok(b)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// The only output that may differ between identical runs.
pub fn write_metadata(dir: &Path, command: &str) -> CliResult<()> {
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &dir.join("metadata.json"),
        &serde_json::json!({
            "command": command,
            "created_unix": created,
            "version": env!("CARGO_PKG_VERSION"),
            "threads": rayon::current_num_threads(),
        }),
    )
}

/// IS weights `f/g` of a set of inputs.
pub fn weights(f: &InputLaw, g: &InputLaw, inputs: &[Vec<f64>]) -> CliResult<Vec<f64>> {
    inputs
        .iter()
        .map(|x| is_weight(f, g, x).map_err(CliError::from))
        .collect()
}

pub fn check_dim(inputs: &[Vec<f64>], dim: usize, what: &str) -> CliResult<()> {
    if let Some((k, x)) = inputs.iter().enumerate().find(|(_, x)| x.len() != dim) {
        return Err(CliError::Data(format!(
            "{what} row {} has {} columns, expected {dim}",
            k + 1,
            x.len()
        )));
    }
    Ok(())
}

/// `round(1/p)`, the "1 in N" reading of a probability.
pub fn frequency(p: f64) -> Option<u64> {
    (p > 0.0).then(|| (1.0 / p).round() as u64)
}
