//! Run configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sensorspace_core::control::{ControlConfig, PathSpec};
use sensorspace_core::plant::PlantConfig;
use sensorspace_core::sensing::{SensorModel, SensorNoise};
use sensorspace_core::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantBlock {
    pub config: PlantConfig,
    pub gap_seed: u64,
    /// Payload for control runs (g).
    pub payload_g: f64,
    /// Run control on the gap plant instead of the ideal one.
    pub control_on_gap_plant: bool,
}

impl Default for PlantBlock {
    fn default() -> Self {
        Self {
            config: PlantConfig::default(),
            gap_seed: 7,
            payload_g: 0.0,
            control_on_gap_plant: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensingBlock {
    pub model: SensorModel,
    /// Noise on the simulated training set.
    pub sim_noise: SensorNoise,
    /// Noise on the physical-style reads: grid data, load sweeps, control.
    pub real_noise: SensorNoise,
    /// Curve file written by `calibrate`; overrides `model.curve`.
    pub calibration_file: Option<PathBuf>,
}

impl Default for SensingBlock {
    fn default() -> Self {
        Self {
            model: SensorModel::default(),
            sim_noise: SensorNoise::quantized_only(),
            real_noise: SensorNoise::default(),
            calibration_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataBlock {
    pub sim_samples: usize,
    /// Pressure levels per chamber on the grid (levels^6 samples).
    pub real_levels: usize,
    /// Samples per payload in the load sweep.
    pub load_samples: usize,
    pub loads_g: Vec<f64>,
}

impl Default for DataBlock {
    fn default() -> Self {
        Self {
            sim_samples: 20_000,
            real_levels: 3,
            load_samples: 1000,
            loads_g: vec![0.0, 35.0, 115.0, 270.0, 500.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingBlock {
    pub smap: TrainConfig,
    pub s2r: TrainConfig,
}

impl Default for TrainingBlock {
    fn default() -> Self {
        Self {
            smap: TrainConfig::default(),
            s2r: TrainConfig {
                seed: 100,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ControlBlock {
    pub config: ControlConfig,
    pub path: PathSpec,
}

/// File names under the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsBlock {
    pub out_dir: PathBuf,
    pub sim_data: String,
    pub real_data: String,
    pub smap_model: String,
    pub s2r_t_model: String,
    pub s2r_r_model: String,
}

impl Default for PathsBlock {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            sim_data: "sim_data.csv".into(),
            real_data: "real_data.csv".into(),
            smap_model: "smap.json".into(),
            s2r_t_model: "s2r_t.json".into(),
            s2r_r_model: "s2r_r.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub plant: PlantBlock,
    pub sensing: SensingBlock,
    pub data: DataBlock,
    pub training: TrainingBlock,
    pub control: ControlBlock,
    pub paths: PathsBlock,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            plant: PlantBlock::default(),
            sensing: SensingBlock::default(),
            data: DataBlock::default(),
            training: TrainingBlock::default(),
            control: ControlBlock::default(),
            paths: PathsBlock::default(),
            seed: 1,
        }
    }
}

impl RunConfig {
    /// Parses and validates; relative file references resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.paths.out_dir.is_relative() {
            cfg.paths.out_dir = base.join(&cfg.paths.out_dir);
        }
        if let Some(f) = &cfg.sensing.calibration_file {
            if f.is_relative() {
                cfg.sensing.calibration_file = Some(base.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{source}: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.plant.config.validate()?;
        self.sensing.model.validate()?;
        self.sensing.sim_noise.validate()?;
        self.sensing.real_noise.validate()?;
        self.training.smap.validate()?;
        self.training.s2r.validate()?;
        self.control.config.validate()?;
        if let Some(f) = &self.sensing.calibration_file {
            if !f.is_file() {
                return Err(CliError::Config(format!("calibration file {} does not exist", f.display())));
            }
        }
        if self.data.sim_samples == 0 || self.data.real_levels == 0 || self.data.load_samples == 0 {
            return Err(CliError::Config("data sizes must be positive".into()));
        }
        if !(self.plant.payload_g >= 0.0) || self.data.loads_g.iter().any(|l| !(*l >= 0.0)) {
            return Err(CliError::Config("payloads must be non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of the parsed configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }

    /// Comment lines heading every output file.
    pub fn provenance(&self, what: &str) -> Vec<String> {
        vec![format!(
            "{what} config_sha256={} seed={} version={}",
            self.hash(),
            self.seed,
            env!("CARGO_PKG_VERSION")
        )]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_hash_is_stable() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_json(&text, "mem").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
        let other = RunConfig { seed: 2, ..RunConfig::default() };
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"seed": 1, "sede": 2}"#, "mem").is_err());
        assert!(RunConfig::from_json(r#"{"data": {"sim_sample": 5}}"#, "mem").is_err());
        let partial = RunConfig::from_json(r#"{"data": {"sim_samples": 5}}"#, "mem").unwrap();
        assert_eq!(partial.data.sim_samples, 5);
        assert_eq!(partial.data.real_levels, 3);
    }

    #[test]
    fn missing_calibration_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"sensing": {"calibration_file": "nope.json"}}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(CliError::Config(_))));
        std::fs::write(&p, r#"{"paths": {"out_dir": "o"}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.paths.out_dir, dir.path().join("o"));
    }
}
