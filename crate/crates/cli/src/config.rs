use std::path::Path;

use serde::{Deserialize, Serialize};

pub const TOL: f64 = 1e-9;
pub const MAX_ITER: usize = 10_000;
pub const GRID_POINTS: usize = 256;
pub const SEED: u64 = 0;

/// Overrides read from `--config`; command-line flags win over the file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub horizon: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub grid_points: Option<usize>,
    pub variant: Option<String>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}

/// `cli`, else the config value, else `default`.
pub fn pick<T>(cli: Option<T>, file: Option<T>, default: T) -> T {
    cli.or(file).unwrap_or(default)
}
