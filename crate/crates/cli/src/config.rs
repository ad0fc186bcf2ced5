//! Optional JSON run configuration. Every field may be omitted; command-line
//! flags take precedence over the file, and the file over built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Option<Vec<PathBuf>>,
    pub out_dir: Option<PathBuf>,
    pub pred_dir: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,

    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub node_radius: Option<f64>,
    pub width: Option<usize>,
    pub height: Option<usize>,

    pub snap_radius: Option<f64>,
    pub sample_spacing: Option<f64>,
    pub rho: Option<f64>,

    pub rdp_tolerance: Option<f64>,
    pub min_spur: Option<f64>,

    pub patch: Option<usize>,
    pub stride: Option<usize>,
    pub margin: Option<usize>,

    pub reduction: Option<usize>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

/// First present value of flag, config, default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}
