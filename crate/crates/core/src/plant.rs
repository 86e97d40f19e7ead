//! Virtual manipulator: chamber pressures and payload to chamber lengths,
//! pad frames and end-effector pose, plus first-order pressure dynamics.
//!
//! Two flavours share the same code path. The ideal plant stands in for the
//! geometric simulator; the gap plant adds seeded chamber offsets here and
//! sensor perturbations in [`crate::sensing`], playing the role of hardware.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{chain_frames, chamber_lengths_to_arc, ArcParams, ChainFrames, Pose, SegmentGeometry};

pub const NUM_CHAMBERS: usize = 6;
pub const PRESSURE_MIN: f64 = -40.0;
pub const PRESSURE_MAX: f64 = 40.0;

const FIXED_POINT_TOL: f64 = 1e-6;
const FIXED_POINT_MAX_ITERS: usize = 50;

/// Six chamber pressures in kPa; chambers 0-2 drive the upper segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuationVector(pub [f64; NUM_CHAMBERS]);

impl ActuationVector {
    pub fn zeros() -> Self {
        Self([0.0; NUM_CHAMBERS])
    }

    pub fn splat(p: f64) -> Self {
        Self([p; NUM_CHAMBERS])
    }

    /// Clamps into the pressure range; the flags record which chambers clipped.
    pub fn clamped(&self) -> (ActuationVector, [bool; NUM_CHAMBERS]) {
        let mut out = *self;
        let mut sat = [false; NUM_CHAMBERS];
        for (p, s) in out.0.iter_mut().zip(sat.iter_mut()) {
            if *p < PRESSURE_MIN || *p > PRESSURE_MAX {
                *s = true;
                *p = p.clamp(PRESSURE_MIN, PRESSURE_MAX);
            }
        }
        (out, sat)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChamberModel {
    pub l_min: f64,
    pub l_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Axial stiffness against payload-induced forces (N/mm).
    pub stiffness: f64,
}

impl Default for ChamberModel {
    fn default() -> Self {
        Self {
            l_min: 70.0,
            l_max: 220.0,
            p_min: PRESSURE_MIN,
            p_max: PRESSURE_MAX,
            stiffness: 2.0,
        }
    }
}

impl ChamberModel {
    /// Unloaded length for a pressure: affine over the pressure range.
    pub fn rest_length(&self, p: f64) -> f64 {
        self.l_min + (p - self.p_min) * (self.l_max - self.l_min) / (self.p_max - self.p_min)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_min < self.l_max && self.p_min < self.p_max && self.stiffness > 0.0) {
            return Err(Error::Config(
                "chamber model needs l_min < l_max, p_min < p_max and positive stiffness".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadSpec {
    /// Payload held at the end-effector (g).
    pub payload_g: f64,
    /// Distal hardware always carried by the arm, i.e. the gripper (g).
    pub structure_g: f64,
    /// Unit gravity direction in the base frame.
    pub gravity_dir: [f64; 3],
}

impl Default for LoadSpec {
    fn default() -> Self {
        Self {
            payload_g: 0.0,
            structure_g: 450.0,
            gravity_dir: [0.0, 0.0, 1.0],
        }
    }
}

impl LoadSpec {
    pub fn with_payload(payload_g: f64) -> Self {
        Self {
            payload_g,
            ..Self::default()
        }
    }

    /// No mass at all, so no compliance deflection.
    pub fn weightless() -> Self {
        Self {
            payload_g: 0.0,
            structure_g: 0.0,
            ..Self::default()
        }
    }

    pub fn total_mass_kg(&self) -> f64 {
        (self.payload_g + self.structure_g) / 1000.0
    }

    pub fn validate(&self) -> Result<()> {
        let n = Vector3::from(self.gravity_dir).norm();
        if self.payload_g < 0.0 || self.structure_g < 0.0 || (n - 1.0).abs() > 1e-9 {
            return Err(Error::Config(
                "load masses must be non-negative and gravity_dir a unit vector".into(),
            ));
        }
        Ok(())
    }
}

/// First-order pressure lag standing in for the pump/valve airflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PneumaticDynamics {
    pub time_constant: f64,
    pub dt: f64,
}

impl Default for PneumaticDynamics {
    fn default() -> Self {
        Self {
            time_constant: 0.3,
            dt: 0.01,
        }
    }
}

impl PneumaticDynamics {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_constant > 0.0 && self.dt > 0.0 && self.dt < self.time_constant) {
            return Err(Error::Config("pneumatics need 0 < dt < time_constant".into()));
        }
        Ok(())
    }
}

/// Seeded sim-to-real perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapModel {
    pub spring_gain: [f64; 12],
    /// mm
    pub spring_bias: [f64; 12],
    /// deg, per IMU channel
    pub imu_bias: [f64; 12],
    /// mm
    pub chamber_offset: [f64; NUM_CHAMBERS],
    pub seed: u64,
}

impl GapModel {
    pub fn zero() -> Self {
        Self {
            spring_gain: [1.0; 12],
            spring_bias: [0.0; 12],
            imu_bias: [0.0; 12],
            chamber_offset: [0.0; NUM_CHAMBERS],
            seed: 0,
        }
    }

    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Self::zero();
        g.seed = seed;
        for v in g.spring_gain.iter_mut() {
            *v = rng.random_range(0.98..=1.02);
        }
        for v in g.spring_bias.iter_mut() {
            *v = rng.random_range(-1.5..=1.5);
        }
        for v in g.imu_bias.iter_mut() {
            *v = rng.random_range(-1.0..=1.0);
        }
        for v in g.chamber_offset.iter_mut() {
            *v = rng.random_range(-2.0..=2.0);
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    pub geometry: SegmentGeometry,
    pub chamber: ChamberModel,
    pub dynamics: PneumaticDynamics,
    /// m/s^2
    pub gravity_accel: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            geometry: SegmentGeometry::default(),
            chamber: ChamberModel::default(),
            dynamics: PneumaticDynamics::default(),
            gravity_accel: 9.81,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.chamber.validate()?;
        self.dynamics.validate()
    }
}

/// Result of the quasi-static length solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthSolution {
    pub lengths: [f64; NUM_CHAMBERS],
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub pressures: ActuationVector,
    pub lengths: [f64; NUM_CHAMBERS],
    pub arcs: [ArcParams; 2],
    pub frames: ChainFrames,
    pub load: LoadSpec,
    /// Chambers whose commanded pressure was clipped on the last update.
    pub saturated: [bool; NUM_CHAMBERS],
    pub converged: bool,
}

impl PlantState {
    pub fn pose(&self) -> Pose {
        Pose::from_transform(&self.frames.end_pad)
    }

    pub fn any_saturated(&self) -> bool {
        self.saturated.iter().any(|&s| s)
    }
}

/// Arcs and chain frames for a set of chamber lengths.
pub fn frames_from_lengths(
    geometry: &SegmentGeometry,
    lengths: &[f64; NUM_CHAMBERS],
) -> Result<([ArcParams; 2], ChainFrames)> {
    let a1 = chamber_lengths_to_arc([lengths[0], lengths[1], lengths[2]], geometry.chamber_radius)?;
    let a2 = chamber_lengths_to_arc([lengths[3], lengths[4], lengths[5]], geometry.chamber_radius)?;
    Ok(([a1, a2], chain_frames(&a1, &a2, geometry)))
}

/// Chamber length changes produced by the distal mass at the current frames.
///
/// Per segment, gravity on the end-effector mass produces a torque about the
/// segment's proximal pad face; the three chambers resist it through a
/// three-point force balance and their axial stiffness.
pub fn compliance_deflection(
    cfg: &PlantConfig,
    frames: &ChainFrames,
    load: &LoadSpec,
) -> [f64; NUM_CHAMBERS] {
    let mut out = [0.0; NUM_CHAMBERS];
    let mass = load.total_mass_kg();
    if mass == 0.0 {
        return out;
    }
    let force = Vector3::from(load.gravity_dir) * (mass * cfg.gravity_accel);
    let tip = frames.end_pad.translation;
    let d_c = cfg.geometry.chamber_radius;
    for (seg, pivot) in [frames.seg1_proximal, frames.seg2_proximal].iter().enumerate() {
        let torque_world = (tip - pivot.translation).cross(&force);
        let torque = pivot.rotation.transpose() * torque_world;
        for (i, &angle) in cfg.geometry.chamber_angles.iter().enumerate() {
            // rotation about the torque axis lengthens chambers on one side
            let f = (torque.x * angle.sin() - torque.y * angle.cos()) / (1.5 * d_c);
            out[3 * seg + i] = f / cfg.chamber.stiffness;
        }
    }
    out
}

fn clamp_lengths(cfg: &ChamberModel, l: &mut [f64; NUM_CHAMBERS]) {
    for v in l.iter_mut() {
        *v = v.clamp(cfg.l_min, cfg.l_max);
    }
}

/// Fixed-point solve of chamber lengths under payload.
///
/// `offsets` shifts each chamber's unloaded length (the gap plant's chamber
/// perturbation); pass zeros for the ideal plant.
pub fn pressures_to_lengths(
    cfg: &PlantConfig,
    q: &ActuationVector,
    load: &LoadSpec,
    offsets: &[f64; NUM_CHAMBERS],
) -> Result<LengthSolution> {
    let mut rest = [0.0; NUM_CHAMBERS];
    for i in 0..NUM_CHAMBERS {
        rest[i] = cfg.chamber.rest_length(q.0[i]) + offsets[i];
    }
    clamp_lengths(&cfg.chamber, &mut rest);
    let mut l = rest;
    for it in 1..=FIXED_POINT_MAX_ITERS {
        let (_, frames) = frames_from_lengths(&cfg.geometry, &l)?;
        let dl = compliance_deflection(cfg, &frames, load);
        let mut next = rest;
        for i in 0..NUM_CHAMBERS {
            next[i] += dl[i];
        }
        clamp_lengths(&cfg.chamber, &mut next);
        let change = next
            .iter()
            .zip(&l)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        l = next;
        if change < FIXED_POINT_TOL {
            return Ok(LengthSolution {
                lengths: l,
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(LengthSolution {
        lengths: l,
        converged: false,
        iterations: FIXED_POINT_MAX_ITERS,
    })
}

fn settle(
    cfg: &PlantConfig,
    pressures: ActuationVector,
    saturated: [bool; NUM_CHAMBERS],
    load: &LoadSpec,
    offsets: &[f64; NUM_CHAMBERS],
) -> Result<PlantState> {
    let sol = pressures_to_lengths(cfg, &pressures, load, offsets)?;
    let (arcs, frames) = frames_from_lengths(&cfg.geometry, &sol.lengths)?;
    Ok(PlantState {
        pressures,
        lengths: sol.lengths,
        arcs,
        frames,
        load: load.clone(),
        saturated,
        converged: sol.converged,
    })
}

/// Quasi-static ideal plant.
pub fn forward(cfg: &PlantConfig, q: &ActuationVector, load: &LoadSpec) -> Result<(PlantState, Pose)> {
    let (q, sat) = q.clamped();
    let state = settle(cfg, q, sat, load, &[0.0; NUM_CHAMBERS])?;
    let pose = state.pose();
    Ok((state, pose))
}

/// Quasi-static gap plant: chamber offsets enter before the pose is formed.
pub fn real_forward(
    cfg: &PlantConfig,
    q: &ActuationVector,
    load: &LoadSpec,
    gap: &GapModel,
) -> Result<(PlantState, Pose)> {
    let (q, sat) = q.clamped();
    let state = settle(cfg, q, sat, load, &gap.chamber_offset)?;
    let pose = state.pose();
    Ok((state, pose))
}

/// Advances pressures by `dt` toward the (clamped) command and re-solves the
/// quasi-static shape.
///
/// The lag is integrated exactly under a zero-order hold on `u_cmd` and the
/// additive pressure disturbance (kPa/s): for constant inputs the pressure
/// follows the analytic exponential, for varying inputs the hold gives
/// first-order convergence in `dt`.
pub fn step_dynamics(
    cfg: &PlantConfig,
    state: &PlantState,
    u_cmd: &ActuationVector,
    dt: f64,
    disturbance: &[f64; NUM_CHAMBERS],
    offsets: &[f64; NUM_CHAMBERS],
) -> Result<PlantState> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let (u, sat) = u_cmd.clamped();
    let tau = cfg.dynamics.time_constant;
    let decay = (-dt / tau).exp();
    let mut p = state.pressures;
    let mut changed = false;
    for i in 0..NUM_CHAMBERS {
        let target = u.0[i] + tau * disturbance[i];
        let next = target + (p.0[i] - target) * decay;
        if next != p.0[i] {
            changed = true;
        }
        p.0[i] = next;
    }
    if !changed {
        let mut s = state.clone();
        s.saturated = sat;
        return Ok(s);
    }
    settle(cfg, p, sat, &state.load, offsets)
}

/// Single-owner virtual manipulator with pressure dynamics.
#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    gap: Option<GapModel>,
    /// Additive pressure disturbance per chamber (kPa/s).
    pub disturbance: [f64; NUM_CHAMBERS],
    state: PlantState,
    time: f64,
}

impl Plant {
    /// Plant at rest with all chambers at zero pressure.
    pub fn new(config: PlantConfig, load: LoadSpec, gap: Option<GapModel>) -> Result<Self> {
        config.validate()?;
        load.validate()?;
        let offsets = gap.as_ref().map_or([0.0; NUM_CHAMBERS], |g| g.chamber_offset);
        let state = settle(
            &config,
            ActuationVector::zeros(),
            [false; NUM_CHAMBERS],
            &load,
            &offsets,
        )?;
        Ok(Self {
            config,
            gap,
            disturbance: [0.0; NUM_CHAMBERS],
            state,
            time: 0.0,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn gap(&self) -> Option<&GapModel> {
        self.gap.as_ref()
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn load(&self) -> &LoadSpec {
        &self.state.load
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.config.dynamics.dt
    }

    pub fn true_pose(&self) -> Pose {
        self.state.pose()
    }

    fn offsets(&self) -> [f64; NUM_CHAMBERS] {
        self.gap.as_ref().map_or([0.0; NUM_CHAMBERS], |g| g.chamber_offset)
    }

    /// Jumps straight to the quasi-static equilibrium for `q`.
    pub fn set_pressures(&mut self, q: &ActuationVector) -> Result<()> {
        self.state = self.probe(q)?;
        Ok(())
    }

    /// Equilibrium state for `q` under this plant's load and gap, without
    /// touching the plant.
    pub fn probe(&self, q: &ActuationVector) -> Result<PlantState> {
        let (q, sat) = q.clamped();
        settle(&self.config, q, sat, &self.state.load, &self.offsets())
    }

    pub fn set_load(&mut self, load: LoadSpec) -> Result<()> {
        load.validate()?;
        self.state = settle(
            &self.config,
            self.state.pressures,
            self.state.saturated,
            &load,
            &self.offsets(),
        )?;
        Ok(())
    }

    /// One pressure-dynamics step of length `dt`.
    pub fn step(&mut self, u_cmd: &ActuationVector) -> Result<()> {
        let dt = self.config.dynamics.dt;
        self.state = step_dynamics(
            &self.config,
            &self.state,
            u_cmd,
            dt,
            &self.disturbance,
            &self.offsets(),
        )?;
        self.time += dt;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> PlantConfig {
        PlantConfig::default()
    }

    #[test]
    fn zero_pressure_is_straight_at_rest_length() {
        let sol = pressures_to_lengths(&cfg(), &ActuationVector::zeros(), &LoadSpec::weightless(), &[0.0; 6])
            .unwrap();
        for l in sol.lengths {
            assert_eq!(l, 145.0);
        }
        let (_, pose) = forward(&cfg(), &ActuationVector::zeros(), &LoadSpec::default()).unwrap();
        // 2 x 145 mm arcs plus four pad half thicknesses
        assert_relative_eq!(pose.z, 330.0, epsilon = 1e-9);
        assert!(pose.x.abs() < 1e-12 && pose.y.abs() < 1e-12);
        assert_eq!(pose.yaw.abs() + pose.pitch.abs() + pose.roll.abs(), 0.0);
    }

    #[test]
    fn axial_payload_keeps_straight_arm_symmetric() {
        let sol = pressures_to_lengths(&cfg(), &ActuationVector::zeros(), &LoadSpec::with_payload(500.0), &[0.0; 6])
            .unwrap();
        assert!(sol.converged);
        for l in sol.lengths {
            assert_relative_eq!(l, 145.0, epsilon = 1e-9);
        }
    }

    /// Same fixed point, reached by under-relaxed iteration with a step ten
    /// times smaller, written independently of the plant's solver loop.
    fn relaxation_oracle(cfg: &PlantConfig, q: &ActuationVector, load: &LoadSpec) -> [f64; 6] {
        let rest: Vec<f64> = q.0.iter().map(|&p| 70.0 + (p + 40.0) * 150.0 / 80.0).collect();
        let mut l = [0.0; 6];
        l.copy_from_slice(&rest);
        for _ in 0..20_000 {
            let (_, frames) = frames_from_lengths(&cfg.geometry, &l).unwrap();
            let dl = compliance_deflection(cfg, &frames, load);
            for i in 0..6 {
                let target = (rest[i] + dl[i]).clamp(70.0, 220.0);
                l[i] += 0.1 * (target - l[i]);
            }
        }
        l
    }

    #[test]
    fn loaded_lengths_match_relaxation_oracle() {
        let q = ActuationVector([40.0, -40.0, 0.0, 0.0, 0.0, 0.0]);
        let load = LoadSpec::with_payload(200.0);
        let sol = pressures_to_lengths(&cfg(), &q, &load, &[0.0; 6]).unwrap();
        assert!(sol.converged);
        let oracle = relaxation_oracle(&cfg(), &q, &load);
        for (a, b) in sol.lengths.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
        // the load actually moved something
        assert!((sol.lengths[0] - 220.0).abs() > 1e-3 || (sol.lengths[1] - 70.0).abs() > 1e-3);
    }

    #[test]
    fn antisymmetric_upper_segment_pressures() {
        let q = ActuationVector([0.0, 20.0, -20.0, 0.0, 0.0, 0.0]);
        let (state, pose) = forward(&cfg(), &q, &LoadSpec::weightless()).unwrap();
        // chamber 0 stays neutral, so the segment bends along -y towards chamber 2
        assert_relative_eq!(state.arcs[0].phi, -std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        // oracle: evaluate the chain directly from the affine lengths
        let lengths = [145.0, 182.5, 107.5, 145.0, 145.0, 145.0];
        let (_, frames) = frames_from_lengths(&cfg().geometry, &lengths).unwrap();
        let expect = Pose::from_transform(&frames.end_pad);
        assert_relative_eq!(pose.yaw, 0.0, epsilon = 1e-9);
        assert!(pose.roll.abs() > 1.0);
        assert!(pose.pitch.abs() < 1e-9);
        assert_relative_eq!(pose.pitch, expect.pitch, epsilon = 1e-12);
        assert_relative_eq!(pose.roll, expect.roll, epsilon = 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let q = ActuationVector([12.0, -3.0, 30.0, -25.0, 7.0, 1.0]);
        let a = forward(&cfg(), &q, &LoadSpec::with_payload(270.0)).unwrap();
        let b = forward(&cfg(), &q, &LoadSpec::with_payload(270.0)).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn saturation_flags_exactly_clamped_chambers() {
        let (q, sat) = ActuationVector([41.0, 40.0, -40.0, -40.5, 0.0, 3.0]).clamped();
        assert_eq!(sat, [true, false, false, true, false, false]);
        assert_eq!(q.0[0], 40.0);
        assert_eq!(q.0[3], -40.0);
    }

    #[test]
    fn bend_direction_follows_short_chamber() {
        // chamber 0 (at +x) short: the arm bends towards +x
        let q = ActuationVector([-30.0, 10.0, 10.0, 0.0, 0.0, 0.0]);
        let (_, pose) = forward(&cfg(), &q, &LoadSpec::weightless()).unwrap();
        assert!(pose.x > 10.0);
        assert!(pose.y.abs() < 1e-9);
    }

    #[test]
    fn gravity_straightens_hanging_arm() {
        let q = ActuationVector([-30.0, 10.0, 10.0, -30.0, 10.0, 10.0]);
        let (_, free) = forward(&cfg(), &q, &LoadSpec::weightless()).unwrap();
        let (_, loaded) = forward(&cfg(), &q, &LoadSpec::with_payload(500.0)).unwrap();
        assert!(loaded.x < free.x);
    }

    #[test]
    fn null_gap_matches_ideal() {
        let q = ActuationVector([5.0, -10.0, 20.0, 33.0, -1.0, 0.0]);
        let load = LoadSpec::with_payload(115.0);
        let a = forward(&cfg(), &q, &load).unwrap();
        let b = real_forward(&cfg(), &q, &load, &GapModel::zero()).unwrap();
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn gap_is_seed_deterministic() {
        assert_eq!(GapModel::from_seed(9), GapModel::from_seed(9));
        assert_ne!(GapModel::from_seed(9), GapModel::from_seed(10));
        let g = GapModel::from_seed(9);
        assert!(g.spring_gain.iter().all(|v| (0.98..=1.02).contains(v)));
        assert!(g.chamber_offset.iter().all(|v| v.abs() <= 2.0));
    }

    #[test]
    fn uniform_chamber_offset_lifts_straight_arm() {
        let mut gap = GapModel::zero();
        gap.chamber_offset = [2.0; 6];
        let (_, base) = forward(&cfg(), &ActuationVector::zeros(), &LoadSpec::default()).unwrap();
        let (_, real) = real_forward(&cfg(), &ActuationVector::zeros(), &LoadSpec::default(), &gap).unwrap();
        assert_relative_eq!(real.z - base.z, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn step_holds_equilibrium() {
        let plant = Plant::new(cfg(), LoadSpec::default(), None).unwrap();
        let s = plant.state().clone();
        let next = step_dynamics(&cfg(), &s, &s.pressures, 0.01, &[0.0; 6], &[0.0; 6]).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn step_response_is_first_order() {
        let mut plant = Plant::new(cfg(), LoadSpec::default(), None).unwrap();
        let u = ActuationVector::splat(40.0);
        for _ in 0..30 {
            plant.step(&u).unwrap();
        }
        let expect = 40.0 * (1.0 - (-1.0f64).exp());
        let p = plant.state().pressures.0[0];
        assert!((p - expect).abs() / expect < 0.005, "{p} vs {expect}");
    }

    /// Pressure at t = 1 s under a sinusoidal command, integrated with step dt.
    fn sine_response(dt: f64) -> f64 {
        let c = cfg();
        let mut s = forward(&c, &ActuationVector::zeros(), &LoadSpec::default()).unwrap().0;
        let n = (1.0 / dt).round() as usize;
        for k in 0..n {
            let t = k as f64 * dt;
            let u = ActuationVector::splat(30.0 * (3.0 * t).sin());
            s = step_dynamics(&c, &s, &u, dt, &[0.0; 6], &[0.0; 6]).unwrap();
        }
        s.pressures.0[0]
    }

    #[test]
    fn step_dynamics_converges_first_order() {
        // analytic response of tau*p' = u - p to u = A sin(w t), p(0) = 0
        let (a, w, tau, t) = (30.0f64, 3.0f64, 0.3f64, 1.0f64);
        let wt = w * tau;
        let exact = a / (1.0 + wt * wt) * ((w * t).sin() - wt * (w * t).cos() + wt * (-t / tau).exp());
        let e1 = (sine_response(0.01) - exact).abs();
        let e2 = (sine_response(0.005) - exact).abs();
        let e3 = (sine_response(0.0025) - exact).abs();
        let r1 = e1 / e2;
        let r2 = e2 / e3;
        assert!((r1 - 2.0).abs() < 0.2 && (r2 - 2.0).abs() < 0.2, "ratios {r1} {r2}");
    }

    #[test]
    fn rejects_bad_dt() {
        let s = forward(&cfg(), &ActuationVector::zeros(), &LoadSpec::default()).unwrap().0;
        assert!(step_dynamics(&cfg(), &s, &ActuationVector::zeros(), 0.0, &[0.0; 6], &[0.0; 6]).is_err());
    }

    #[test]
    fn extreme_pressures_converge_under_heavy_load() {
        for q in [
            ActuationVector([40.0, -40.0, -40.0, 40.0, -40.0, -40.0]),
            ActuationVector([-40.0, 40.0, 40.0, -40.0, 40.0, 40.0]),
            ActuationVector([40.0, 40.0, -40.0, 40.0, 40.0, -40.0]),
        ] {
            let (state, _) = forward(&cfg(), &q, &LoadSpec::with_payload(500.0)).unwrap();
            assert!(state.converged);
        }
    }

    proptest! {
        #[test]
        fn symmetric_pressures_stay_on_axis(p1 in -40.0f64..40.0, p2 in -40.0f64..40.0) {
            let q = ActuationVector([p1, p1, p1, p2, p2, p2]);
            let (_, pose) = forward(&cfg(), &q, &LoadSpec::weightless()).unwrap();
            prop_assert!(pose.x.abs() < 1e-6 && pose.y.abs() < 1e-6);
        }

        #[test]
        fn payload_deflection_grows_with_mass(
            q in proptest::array::uniform6(-40.0f64..40.0),
            m in 0.0f64..450.0,
        ) {
            let q = ActuationVector(q);
            let (free, p0) = forward(&cfg(), &q, &LoadSpec::with_payload(0.0)).unwrap();
            prop_assume!(free.arcs[0].bend() > 0.2 || free.arcs[1].bend() > 0.2);
            prop_assume!(!free.lengths.iter().any(|&l| l <= 70.0 || l >= 220.0));
            let (_, p1) = forward(&cfg(), &q, &LoadSpec::with_payload(m)).unwrap();
            let (sat, p2) = forward(&cfg(), &q, &LoadSpec::with_payload(m + 50.0)).unwrap();
            prop_assume!(!sat.lengths.iter().any(|&l| l <= 70.0 || l >= 220.0));
            prop_assert!(p2.translation_error(&p0) > p1.translation_error(&p0));
        }
    }
}
