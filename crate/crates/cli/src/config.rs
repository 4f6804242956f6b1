//! Defaults layered as: built-in values, then an optional TOML file, then
//! command-line flags.
//!
//! ```toml
//! [blur_map]
//! sigma = 0.5
//! scale_count = 3
//!
//! [stack]
//! k = 8
//! seed = 42
//!
//! [loss]
//! tau = 0.8
//! lambda = 0.1
//!
//! [stability]
//! tau = 0.8
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use sbs_core::blur_map::HifstParams;
use sbs_core::config;
use sbs_core::synth::FocalSeries;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub blur_map: HifstParams,
    pub stack: StackSection,
    pub loss: LossSection,
    pub stability: StabilitySection,
    pub synth: FocalSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackSection {
    pub k: usize,
    pub align: bool,
    pub fusion_sigma: f64,
    pub seed: u64,
}

impl Default for StackSection {
    fn default() -> Self {
        Self { k: config::TOP_K, align: false, fusion_sigma: config::FUSION_SIGMA, seed: config::RANSAC_SEED }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub tau: f64,
    pub lambda: f64,
    pub floor: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        Self { tau: config::CONSISTENCY_TAU, lambda: config::LOSS_LAMBDA, floor: config::PROB_FLOOR }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub tau: f64,
    pub slice_count: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self { tau: config::STABILITY_TAU, slice_count: config::TOP_K }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Param(format!("{}: {e}", path.display())))
    }
}
