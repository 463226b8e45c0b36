//! JSON run configuration. Every field is optional; command-line flags take
//! precedence over file values, which take precedence over defaults.

use griffith_core::model::PairPotential;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub radius: Option<f64>,
    pub k: Option<f64>,
    pub k_start: Option<f64>,
    pub k_window: Option<(f64, f64)>,
    pub ds_init: Option<f64>,
    pub ds_min: Option<f64>,
    pub ds_max: Option<f64>,
    pub max_steps: Option<usize>,
    pub max_folds: Option<usize>,
    pub max_events: Option<usize>,
    pub eigen_every: Option<usize>,
    pub target_corrector_iters: Option<usize>,
    pub newton_tol: Option<f64>,
    pub lambda: Option<i32>,
    pub u_start: Option<String>,
    pub amplitude: Option<f64>,
    pub decay: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub radii_sched: Option<(u32, u32)>,
    pub reference: Option<f64>,
    pub hausdorff_with_k: Option<bool>,
    pub jobs: Option<usize>,
    pub fit_range: Option<(f64, f64)>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn potential(&self) -> PairPotential {
        let default = PairPotential::default();
        PairPotential::new(
            self.amplitude.unwrap_or(default.amplitude),
            self.decay.unwrap_or(default.decay),
        )
    }
}
