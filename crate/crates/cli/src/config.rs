use std::path::Path;

use anyhow::Context;
use msnn_core::evaluation::GridSpec;
use msnn_core::models::ModelSpec;
use msnn_core::simulator::{LapConfig, VehicleParams};
use msnn_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Everything a run can be configured with. Every section is optional in the
/// file; missing fields take their defaults.
///
/// ```json
/// { "model": { "q": 9, "n_y": 5 }, "train": { "max_epochs": 2000 },
///   "vehicle": { "k_aero": 0.0 }, "laps": { "grip_usage": 0.7 },
///   "grid": { "q": [4, 9] } }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub vehicle: VehicleParams,
    pub laps: LapConfig,
    pub grid: GridSpec,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }
}

/// Vehicle parameters from a standalone JSON file.
pub fn load_vehicle(path: &Path) -> anyhow::Result<VehicleParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading vehicle {}", path.display()))?;
    let v: VehicleParams =
        serde_json::from_str(&text).map_err(|e| UsageError(format!("vehicle {}: {e}", path.display())))?;
    v.validate().map_err(|e| UsageError(format!("vehicle {}: {e}", path.display())))?;
    Ok(v)
}
