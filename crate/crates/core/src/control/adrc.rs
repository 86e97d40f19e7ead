//! Per-chamber pressure tracking with a linear extended state observer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::{ActuationVector, Plant, NUM_CHAMBERS, PRESSURE_MAX, PRESSURE_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdrcConfig {
    /// Observer bandwidth (rad/s).
    pub omega_o: f64,
    /// Proportional gain (1/s).
    pub k_p: f64,
    /// Input gain; `None` takes 1 / pressure time constant.
    pub b0: Option<f64>,
    /// Observer step (s); must divide the plant step.
    pub dt: f64,
}

impl Default for AdrcConfig {
    fn default() -> Self {
        Self {
            omega_o: 20.0,
            k_p: 5.0,
            b0: None,
            dt: 0.01,
        }
    }
}

impl AdrcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_o > 0.0 && self.k_p > 0.0 && self.dt > 0.0) {
            return Err(Error::Config("ADRC needs omega_o, k_p, dt > 0".into()));
        }
        if let Some(b) = self.b0 {
            if !(b > 0.0) {
                return Err(Error::Config(format!("ADRC b0 must be positive, got {b}")));
            }
        }
        Ok(())
    }

    pub fn gains(&self) -> (f64, f64) {
        (2.0 * self.omega_o, self.omega_o * self.omega_o)
    }

    pub fn input_gain(&self, time_constant: f64) -> f64 {
        self.b0.unwrap_or(1.0 / time_constant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdrcState {
    /// Pressure estimate (kPa).
    pub z1: [f64; NUM_CHAMBERS],
    /// Total disturbance estimate (kPa/s).
    pub z2: [f64; NUM_CHAMBERS],
    /// Last applied command.
    pub u: [f64; NUM_CHAMBERS],
}

impl AdrcState {
    /// Observer locked onto measured pressures `p` held by command `p`.
    pub fn at_rest(p: &ActuationVector, b0: f64) -> Self {
        Self {
            z1: p.0,
            // holding p with u = p requires z2 = -b0 * p for the lag plant
            z2: std::array::from_fn(|k| -b0 * p.0[k]),
            u: p.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.z1.iter().chain(&self.z2).chain(&self.u).all(|v| v.is_finite())
    }
}

/// One observer update for a single chamber.
pub fn eso_update(z1: &mut f64, z2: &mut f64, p: f64, u: f64, b0: f64, beta: (f64, f64), dt: f64) {
    let e = p - *z1;
    *z1 += dt * (*z2 + b0 * u + beta.0 * e);
    *z2 += dt * (beta.1 * e);
}

pub fn control_law(r: f64, z1: f64, z2: f64, k_p: f64, b0: f64) -> f64 {
    (k_p * (r - z1) - z2) / b0
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdrcTrace {
    pub t: Vec<f64>,
    pub pressure: Vec<[f64; NUM_CHAMBERS]>,
    pub command: Vec<[f64; NUM_CHAMBERS]>,
    /// Observer error kept growing for a full second.
    pub aborted: bool,
    /// Some command hit a pressure limit.
    pub saturated: [bool; NUM_CHAMBERS],
}

/// Seconds of monotone observer-error growth before the run is aborted.
const DIVERGENCE_WINDOW: f64 = 1.0;
const DIVERGENCE_FLOOR: f64 = 0.5;

/// Drives the plant toward `q_ref` for `duration` seconds.
pub fn adrc_track(
    q_ref: &ActuationVector,
    plant: &mut Plant,
    state: &mut AdrcState,
    cfg: &AdrcConfig,
    duration: f64,
) -> Result<AdrcTrace> {
    cfg.validate()?;
    let plant_dt = plant.dt();
    let ratio = plant_dt / cfg.dt;
    let sub = ratio.round();
    if cfg.dt > plant_dt * (1.0 + 1e-9) || (ratio - sub).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "observer step {} must divide plant step {plant_dt}",
            cfg.dt
        )));
    }
    let sub = sub as usize;
    let b0 = cfg.input_gain(plant.config().dynamics.time_constant);
    let beta = cfg.gains();
    let steps = (duration / plant_dt).round().max(1.0) as usize;

    let mut trace = AdrcTrace::default();
    let mut last_err = [0.0; NUM_CHAMBERS];
    let mut growing = [0usize; NUM_CHAMBERS];
    let window = (DIVERGENCE_WINDOW / plant_dt).ceil() as usize;

    for _ in 0..steps {
        let p = plant.state().pressures;
        let mut u = [0.0; NUM_CHAMBERS];
        for k in 0..NUM_CHAMBERS {
            for _ in 0..sub {
                eso_update(&mut state.z1[k], &mut state.z2[k], p.0[k], state.u[k], b0, beta, cfg.dt);
            }
            let err = (p.0[k] - state.z1[k]).abs();
            if err > last_err[k] && err > DIVERGENCE_FLOOR {
                growing[k] += 1;
            } else {
                growing[k] = 0;
            }
            last_err[k] = err;
            if growing[k] >= window {
                trace.aborted = true;
            }
            let raw = control_law(q_ref.0[k], state.z1[k], state.z2[k], cfg.k_p, b0);
            // the observer must see the command the plant actually receives
            u[k] = raw.clamp(PRESSURE_MIN, PRESSURE_MAX);
            if u[k] != raw {
                trace.saturated[k] = true;
            }
        }
        if trace.aborted || !state.is_finite() {
            trace.aborted = true;
            break;
        }
        state.u = u;
        plant.step(&ActuationVector(u))?;
        trace.t.push(plant.time());
        trace.pressure.push(plant.state().pressures.0);
        trace.command.push(u);
    }
    Ok(trace)
}
