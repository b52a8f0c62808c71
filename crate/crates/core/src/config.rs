//! Run configuration file (TOML).
//!
//! Every section and key is optional; anything missing takes the default
//! documented on the corresponding type. Unknown keys are rejected.
//!
//! ```toml
//! [phantom]
//! speckle_level = 0.1
//! rng_seed = 7
//!
//! [band]
//! f_low = 1.5
//! f_high = 2.5
//!
//! [controller.translation]
//! k_p = 250.0                     # omitted: estimated from the phantom
//! energy_threshold = { relative = 0.02 }
//!
//! [restoration]
//! trials_per_offset = 4
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, EnergyThreshold, StepClamp};
use crate::error::{Error, Result};
use crate::harness::{self, DEFAULT_HEATMAP_FLOOR, DEFAULT_TRIALS, ROTATION_OFFSETS, TRANSLATION_OFFSETS};
use crate::phantom::{MotionMode, Phantom, PhantomConfig};
use crate::spectral::BandpassSpec;

/// Controller overrides for one motion mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSettings {
    pub k_p: Option<f64>,
    pub direction_step: Option<f64>,
    pub energy_threshold: Option<EnergyThreshold>,
    pub low_energy_fraction: Option<f64>,
    pub frames_per_measurement: Option<usize>,
    pub step_clamp: Option<StepClamp>,
    pub max_iterations: Option<usize>,
}

impl ControllerSettings {
    /// Fill gaps with mode defaults; a missing gain is estimated from `phantom`.
    pub fn resolve(&self, mode: MotionMode, band: BandpassSpec, phantom: &Phantom) -> Result<ControllerConfig> {
        let mut cfg = ControllerConfig::defaults(mode, 1.0);
        cfg.passband = band;
        if let Some(v) = self.direction_step {
            cfg.direction_step = v;
        }
        if let Some(v) = self.energy_threshold {
            cfg.energy_threshold = v;
        }
        if let Some(v) = self.low_energy_fraction {
            cfg.low_energy_fraction = v;
        }
        if let Some(v) = self.frames_per_measurement {
            cfg.frames_per_measurement = v;
        }
        if let Some(v) = self.step_clamp {
            cfg.step_clamp = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        cfg.k_p = match self.k_p {
            Some(k) => k,
            None => harness::estimate_gain(
                phantom,
                mode,
                cfg.frames_per_measurement,
                harness::gain_reference_offset(mode),
            )?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Settings that reproduce `cfg` exactly.
    pub fn pinned(cfg: &ControllerConfig) -> Self {
        Self {
            k_p: Some(cfg.k_p),
            direction_step: Some(cfg.direction_step),
            energy_threshold: Some(cfg.energy_threshold),
            low_energy_fraction: Some(cfg.low_energy_fraction),
            frames_per_measurement: Some(cfg.frames_per_measurement),
            step_clamp: Some(cfg.step_clamp),
            max_iterations: Some(cfg.max_iterations),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub translation: ControllerSettings,
    pub rotation: ControllerSettings,
}

impl ControllerSection {
    pub fn for_mode(&self, mode: MotionMode) -> &ControllerSettings {
        match mode {
            MotionMode::Translation => &self.translation,
            MotionMode::Rotation => &self.rotation,
        }
    }

    pub fn for_mode_mut(&mut self, mode: MotionMode) -> &mut ControllerSettings {
        match mode {
            MotionMode::Translation => &mut self.translation,
            MotionMode::Rotation => &mut self.rotation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub translation_offsets: Vec<f64>,
    pub rotation_offsets: Vec<f64>,
    pub num_seeds: usize,
    pub repeats: usize,
    pub frames: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            translation_offsets: (0..=10).map(|k| k as f64 * 0.5).collect(),
            rotation_offsets: (0..=5).map(|k| k as f64 * 2.5).collect(),
            num_seeds: 10,
            repeats: 1,
            frames: 60,
        }
    }
}

impl SweepSettings {
    pub fn offsets(&self, mode: MotionMode) -> &[f64] {
        match mode {
            MotionMode::Translation => &self.translation_offsets,
            MotionMode::Rotation => &self.rotation_offsets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestorationSettings {
    pub translation_offsets: Vec<f64>,
    pub rotation_offsets: Vec<f64>,
    pub trials_per_offset: usize,
}

impl Default for RestorationSettings {
    fn default() -> Self {
        Self {
            translation_offsets: TRANSLATION_OFFSETS.to_vec(),
            rotation_offsets: ROTATION_OFFSETS.to_vec(),
            trials_per_offset: DEFAULT_TRIALS,
        }
    }
}

impl RestorationSettings {
    pub fn offsets(&self, mode: MotionMode) -> &[f64] {
        match mode {
            MotionMode::Translation => &self.translation_offsets,
            MotionMode::Rotation => &self.rotation_offsets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisplaySettings {
    pub floor_percentile: f64,
}

impl Default for DisplaySettings {
    fn default() -> Self {
        Self { floor_percentile: DEFAULT_HEATMAP_FLOOR }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub phantom: PhantomConfig,
    pub band: BandpassSpec,
    pub controller: ControllerSection,
    pub sweep: SweepSettings,
    pub restoration: RestorationSettings,
    pub display: DisplaySettings,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_toml_str(&text)
            .map_err(|message| Error::ConfigFile { path: path.to_path_buf(), message })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom.validate()?;
        self.band.validate(self.phantom.frame_rate)?;
        if !(0.0..1.0).contains(&self.display.floor_percentile) {
            return Err(Error::config("display.floor_percentile must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialise config: {e}")))
    }
}
