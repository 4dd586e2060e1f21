//! JSON run configuration shared by the command-line tools.
//!
//! ```json
//! {
//!   "data":    { "scene": "plume2d", "extent": 64, "count": 35, "test_count": 5,
//!                "val_fraction": 0.1, "seed": 0, "num_steps": 64,
//!                "dt_small": 0.5, "dt_large": 4.0, "jobs": 1 },
//!   "scene":   null,
//!   "train":   { "lr": 0.001, "batch_size": 8, "epochs": 30, "accumulation": 1,
//!                "seed": 0, "weights": null, "val_fraction": 0.1,
//!                "unet": { ... }, "extractor": { "width": 0.25, "seed": 0, "weights": null },
//!                "device": "cpu" },
//!   "rollout": { "n": 64, "switch_fraction": 0.5 }
//! }
//! ```
//!
//! Every section and field is optional. `scene`, when set, is a full scene
//! description used for every generated simulation instead of the seeded
//! random scenes (only its seed changes per simulation).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::CorpusConfig;
use crate::error::{Error, Result};
use crate::solver::SceneConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    /// Final frame index; must be a multiple of `k`.
    pub n: usize,
    pub switch_fraction: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            n: 64,
            switch_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: CorpusConfig,
    pub scene: Option<SceneConfig>,
    pub train: TrainConfig,
    pub rollout: RolloutConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
        fs::write(path, serde_json::to_string_pretty(self).unwrap()).map_err(Error::io(path))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(s) = &self.scene {
            s.validate()?;
        }
        if !(0.0..=1.0).contains(&self.rollout.switch_fraction) {
            return Err(Error::Config(format!(
                "switch_fraction {} outside [0, 1]",
                self.rollout.switch_fraction
            )));
        }
        Ok(())
    }
}
