//! Experiment building blocks shared by `eval`, `control` and the acceptance
//! suite.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sensorspace_core::control::{follow_path, generate_path, ControlConfig, Manipulator, PathResult, PathShape, PathSpec};
use sensorspace_core::plant::{forward, ActuationVector, LoadSpec, Plant};
use sensorspace_core::proprioception::{
    gen_real_dataset, gen_sim_dataset, load_robustness, Metrics, Provenance, Rig, SensorChannels, Split, Workspace,
};
use sensorspace_core::sensing::{CalibrationCurve, SensorModel, SensorVector};
use sensorspace_core::{Dataset, GapModel, Mlp, Pose, PosePredictor};

use crate::{CliError, RunConfig};

/// Contents of a calibration file written by `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub curve: CalibrationCurve,
    pub residual_rms: f64,
    pub samples: usize,
}

/// One pass/fail property with the number it was judged on.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }

    /// Passes when `value >= bound`.
    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }

    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value: f64::from(u8::from(pass)),
            bound: 1.0,
            pass,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.4} (bound {:.4})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.bound
        )
    }
}

/// Fails with an acceptance error naming every failed check.
pub fn require(checks: &[Check]) -> Result<(), CliError> {
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(failed.join("; ")))
    }
}

pub fn sensor_model(cfg: &RunConfig) -> Result<SensorModel, CliError> {
    let mut model = cfg.sensing.model.clone();
    if let Some(path) = &cfg.sensing.calibration_file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
        let file: CalibrationFile =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        model.curve = file.curve;
        model.validate()?;
    }
    Ok(model)
}

pub fn gap_model(cfg: &RunConfig) -> GapModel {
    GapModel::from_seed(cfg.plant.gap_seed)
}

pub fn sim_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    Ok(gen_sim_dataset(
        &cfg.plant.config,
        &sensor_model(cfg)?,
        &cfg.sensing.sim_noise,
        cfg.data.sim_samples,
        cfg.seed,
    )?)
}

pub fn real_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    Ok(gen_real_dataset(
        &cfg.plant.config,
        &sensor_model(cfg)?,
        &cfg.sensing.real_noise,
        &gap_model(cfg),
        cfg.data.real_levels,
        cfg.seed.wrapping_add(1),
    )?)
}

pub fn load_dataset(path: &Path, provenance: Provenance) -> Result<Dataset, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "dataset {} missing; run gen-data first",
            path.display()
        )));
    }
    Ok(Dataset::load_csv(path, provenance)?)
}

pub fn load_model(path: &Path) -> Result<Mlp, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!("model {} missing; run train first", path.display())));
    }
    Ok(Mlp::load(path)?)
}

/// Sensor-to-pose predictor from the configured model files; the correction
/// stage is attached when both of its files exist.
pub fn load_predictor(cfg: &RunConfig, with_s2r: bool) -> Result<PosePredictor, CliError> {
    let smap = load_model(&cfg.out(&cfg.paths.smap_model))?;
    if smap.input_dim() != SensorChannels::Fused.width() {
        return Err(CliError::Config(format!("smap model has input width {}", smap.input_dim())));
    }
    let mut pred = PosePredictor::new(smap, SensorChannels::Fused)?;
    let (t, r) = (cfg.out(&cfg.paths.s2r_t_model), cfg.out(&cfg.paths.s2r_r_model));
    if with_s2r && t.is_file() && r.is_file() {
        pred = pred.with_s2r(load_model(&t)?, load_model(&r)?)?;
    }
    Ok(pred)
}

pub fn sim_split(cfg: &RunConfig, data: &Dataset) -> Split {
    data.split(cfg.seed)
}

pub fn real_split(cfg: &RunConfig, data: &Dataset) -> Split {
    data.split(cfg.seed.wrapping_add(1))
}

/// Held-out translation error relative to the workspace diagonal.
pub fn accuracy_check(metrics: &Metrics, workspace: &Workspace) -> Check {
    Check::at_most(
        "translation error / workspace diagonal (%)",
        100.0 * metrics.translation_mm / workspace.diagonal(),
        1.0,
    )
}

/// Fusion ordering over (spring-only, IMU-only, fused) metrics.
pub fn fusion_checks(spring: &Metrics, imu: &Metrics, fused: &Metrics) -> Vec<Check> {
    let best_single = spring.translation_mm.min(imu.translation_mm);
    let imu_wins = [
        imu.yaw_deg < spring.yaw_deg,
        imu.pitch_deg < spring.pitch_deg,
        imu.roll_deg < spring.roll_deg,
    ]
    .iter()
    .filter(|&&b| b)
    .count();
    vec![
        Check::at_most("fused / spring-only translation", fused.translation_mm / spring.translation_mm, 1.0),
        Check::at_most("fused / IMU-only translation", fused.translation_mm / imu.translation_mm, 1.0),
        Check::at_least(
            "fused gain over best single modality",
            1.0 - fused.translation_mm / best_single,
            0.1,
        ),
        Check::at_least("rotation channels where IMU-only beats spring-only", imu_wins as f64, 2.0),
    ]
}

pub fn s2r_check(before: &Metrics, after: &Metrics) -> Check {
    Check::at_most(
        "corrected / uncorrected translation error",
        after.translation_mm / before.translation_mm,
        0.5,
    )
}

/// Per-payload errors on fresh draws of the ideal plant.
pub fn load_sweep(cfg: &RunConfig, pred: &PosePredictor) -> Result<Vec<(f64, Metrics)>, CliError> {
    let sensors = sensor_model(cfg)?;
    let rig = Rig {
        plant: &cfg.plant.config,
        sensors: &sensors,
        noise: &cfg.sensing.real_noise,
        gap: None,
    };
    let mut loads = cfg.data.loads_g.clone();
    if !loads.contains(&0.0) {
        loads.insert(0, 0.0);
    }
    Ok(load_robustness(pred, &rig, &loads, cfg.data.load_samples, cfg.seed.wrapping_add(2))?)
}

pub fn load_checks(sweep: &[(f64, Metrics)]) -> Vec<Check> {
    let base = sweep
        .iter()
        .find(|(g, _)| *g == 0.0)
        .map_or(f64::NAN, |(_, m)| m.translation_mm);
    sweep
        .iter()
        .filter(|(g, _)| *g > 0.0)
        .map(|(g, m)| Check::at_most(format!("{g} g error / unloaded error"), m.translation_mm / base, 1.5))
        .collect()
}

/// Bit patterns of the predictions for `probe`; compared before and after a
/// load sweep to show the predictor carries no payload state.
pub fn prediction_bits(pred: &PosePredictor, probe: &[SensorVector]) -> Result<Vec<u64>, CliError> {
    let mut out = Vec::with_capacity(6 * probe.len());
    for s in probe {
        out.extend(pred.predict(s)?.to_array().map(f64::to_bits));
    }
    Ok(out)
}

/// Manipulator at rest under the configured payload and plant choice.
pub fn manipulator(cfg: &RunConfig, seed_offset: u64) -> Result<Manipulator, CliError> {
    let gap = cfg.plant.control_on_gap_plant.then(|| gap_model(cfg));
    let plant = Plant::new(cfg.plant.config.clone(), LoadSpec::with_payload(cfg.plant.payload_g), gap)?;
    Ok(Manipulator::new(
        plant,
        sensor_model(cfg)?,
        cfg.sensing.real_noise.clone(),
        cfg.seed.wrapping_add(10 + seed_offset),
    )?)
}

/// Pressures of the standard far target: every chamber well away from rest
/// but inside the interior margin.
pub const FAR_TARGET_Q: [f64; 6] = [25.0, -30.0, -10.0, -30.0, -30.0, -25.0];

/// Pose of the far target on the unloaded ideal plant.
pub fn far_target(cfg: &RunConfig) -> Result<Pose, CliError> {
    Ok(forward(&cfg.plant.config, &ActuationVector(FAR_TARGET_Q), &LoadSpec::default())?.1)
}

pub fn path_waypoints(cfg: &RunConfig, shape: PathShape) -> Result<Vec<Pose>, CliError> {
    let spec = PathSpec {
        shape,
        ..cfg.control.path.clone()
    };
    Ok(generate_path(&cfg.plant.config, &spec)?)
}

pub fn run_path(
    cfg: &RunConfig,
    pred: &PosePredictor,
    data: Option<&Dataset>,
    waypoints: &[Pose],
    control: &ControlConfig,
) -> Result<PathResult, CliError> {
    let m = manipulator(cfg, 0)?;
    Ok(follow_path(waypoints, m, pred, data, control)?.0)
}

/// Path-following property for one payload: unloaded and light loads are
/// bounded relative to the workspace dimension; heavy loads only require
/// every missed waypoint to be explained by saturation.
pub fn path_checks(label: &str, payload_g: f64, result: &PathResult, workspace_dim: f64) -> Vec<Check> {
    let rel = 100.0 * result.mean_error_mm / workspace_dim;
    if payload_g == 0.0 {
        vec![Check::at_most(format!("{label} unloaded mean error / dimension (%)"), rel, 2.0)]
    } else if payload_g <= 200.0 {
        vec![Check::at_most(format!("{label} {payload_g} g mean error / dimension (%)"), rel, 6.0)]
    } else {
        let unexplained = result
            .waypoints
            .iter()
            .filter(|w| !w.converged && !w.saturated)
            .count();
        vec![Check::at_most(
            format!("{label} {payload_g} g missed waypoints without saturation"),
            unexplained as f64,
            0.0,
        )]
    }
}
