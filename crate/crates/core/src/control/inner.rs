//! Inner loop: pressure references from sensor-space errors.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::adrc::AdrcConfig;
use crate::error::{Error, Result};
use crate::plant::{ActuationVector, Plant, NUM_CHAMBERS, PRESSURE_MAX, PRESSURE_MIN};
use crate::sensing::{read_sensors, NUM_IMU_CHANNELS, NUM_SPRINGS, SensorModel, SensorNoise, SensorVector, SENSOR_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerConfig {
    /// Levenberg damping in normalized sensor units.
    pub mu: f64,
    /// Finite-difference step per chamber (kPa).
    pub fd_step: f64,
    /// Broyden updates only for pressure moves longer than this (kPa).
    pub broyden_threshold: f64,
    /// Relative O_inner improvement below which a window counts as stalled.
    pub stall_tolerance: f64,
    pub stall_window: usize,
    /// Control period: ADRC runs this long between sensor reads (s).
    pub period: f64,
    pub max_periods: usize,
    /// Sensor samples averaged into each read at the end of a period.
    pub reads_per_period: usize,
    pub adrc: AdrcConfig,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            mu: 1e-3,
            fd_step: 1.0,
            broyden_threshold: 1.0,
            stall_tolerance: 1e-3,
            stall_window: 5,
            period: 0.5,
            max_periods: 40,
            reads_per_period: 8,
            adrc: AdrcConfig::default(),
        }
    }
}

impl InnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.fd_step > 0.0 && self.period > 0.0) {
            return Err(Error::Config("need mu, fd_step and period > 0".into()));
        }
        if !(self.broyden_threshold >= 0.0 && self.stall_tolerance >= 0.0) {
            return Err(Error::Config("thresholds must be non-negative".into()));
        }
        if self.stall_window == 0 || self.max_periods == 0 || self.reads_per_period == 0 {
            return Err(Error::Config(
                "stall_window, max_periods and reads_per_period must be >= 1".into(),
            ));
        }
        self.adrc.validate()
    }
}

/// Plant plus the sensor hardware reading it.
#[derive(Debug, Clone)]
pub struct Manipulator {
    pub plant: Plant,
    pub sensors: SensorModel,
    pub noise: SensorNoise,
    rng: ChaCha8Rng,
}

impl Manipulator {
    pub fn new(plant: Plant, sensors: SensorModel, noise: SensorNoise, seed: u64) -> Result<Self> {
        sensors.validate()?;
        noise.validate()?;
        Ok(Self {
            plant,
            sensors,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Noisy read of the current state.
    pub fn read(&mut self) -> SensorVector {
        read_sensors(
            self.plant.state(),
            &self.plant.config().geometry,
            &self.sensors,
            &self.noise,
            self.plant.gap(),
            &mut self.rng,
        )
    }

    /// Mean of `n` noisy reads of the current state.
    pub fn read_mean(&mut self, n: usize) -> SensorVector {
        let n = n.max(1);
        let mut acc = SensorVector {
            spring: [0.0; NUM_SPRINGS],
            imu: [0.0; NUM_IMU_CHANNELS],
        };
        for _ in 0..n {
            let s = self.read();
            acc.spring.iter_mut().zip(s.spring).for_each(|(a, v)| *a += v);
            acc.imu.iter_mut().zip(s.imu).for_each(|(a, v)| *a += v);
        }
        acc.spring.iter_mut().chain(acc.imu.iter_mut()).for_each(|a| *a /= n as f64);
        acc
    }

    /// Exact read of the equilibrium at `q`; the plant is left untouched.
    pub fn read_noiseless(&self, q: &ActuationVector) -> Result<SensorVector> {
        let state = self.plant.probe(q)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(read_sensors(
            &state,
            &self.plant.config().geometry,
            &self.sensors,
            &SensorNoise::none(),
            self.plant.gap(),
            &mut rng,
        ))
    }
}

/// Central-difference sensor Jacobian (24 x 6) of any map q -> s.
pub fn finite_difference_jacobian<F>(mut read: F, q: &ActuationVector, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&ActuationVector) -> Result<[f64; SENSOR_DIM]>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let mut j = DMatrix::zeros(SENSOR_DIM, NUM_CHAMBERS);
    for c in 0..NUM_CHAMBERS {
        let mut hi = *q;
        let mut lo = *q;
        hi.0[c] += step;
        lo.0[c] -= step;
        let (a, b) = (read(&hi)?, read(&lo)?);
        for r in 0..SENSOR_DIM {
            j[(r, c)] = (a[r] - b[r]) / (2.0 * step);
        }
    }
    Ok(j)
}

/// Jacobian of the noiseless sensor read at `q` under the plant's own load.
///
/// The stencil is shifted inward near the pressure limits so no probe clips.
pub fn estimate_jacobian(m: &Manipulator, q: &ActuationVector, step: f64) -> Result<DMatrix<f64>> {
    let mut centre = *q;
    for p in centre.0.iter_mut() {
        *p = p.clamp(PRESSURE_MIN + step, PRESSURE_MAX - step);
    }
    finite_difference_jacobian(|x| Ok(m.read_noiseless(x)?.to_array()), &centre, step)
}

/// Rank-one secant update; returns false when the step is too short.
pub fn broyden_update(j: &mut DMatrix<f64>, dq: &[f64; NUM_CHAMBERS], ds: &[f64; SENSOR_DIM], threshold: f64) -> bool {
    let dq = DVector::from_column_slice(dq);
    let nn = dq.norm_squared();
    if !(nn.sqrt() > threshold) || !nn.is_finite() {
        return false;
    }
    let ds = DVector::from_column_slice(ds);
    let r = ds - &*j * &dq;
    if r.iter().any(|v| !v.is_finite()) {
        return false;
    }
    *j += r * dq.transpose() / nn;
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerStep {
    pub q_ref: ActuationVector,
    pub saturated: [bool; NUM_CHAMBERS],
}

/// Damped least-squares pressure update toward `s_ref`, clamped to the
/// pressure range.
pub fn inner_step(s_ref: &[f64], s_curr: &[f64], q_curr: &ActuationVector, j: &DMatrix<f64>, mu: f64) -> Result<InnerStep> {
    if s_ref.len() != j.nrows() || s_curr.len() != j.nrows() || j.ncols() != NUM_CHAMBERS {
        return Err(Error::Dimension {
            expected: j.nrows(),
            actual: s_ref.len(),
        });
    }
    let r = DVector::from_iterator(j.nrows(), s_ref.iter().zip(s_curr).map(|(a, b)| a - b));
    let jt = j.transpose();
    let mut a = &jt * j;
    for k in 0..NUM_CHAMBERS {
        a[(k, k)] += mu;
    }
    let dq = a
        .cholesky()
        .ok_or_else(|| Error::Numerical("damped normal matrix not positive definite".into()))?
        .solve(&(jt * r));
    if dq.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite pressure update".into()));
    }
    let raw = ActuationVector(std::array::from_fn(|k| q_curr.0[k] + dq[k]));
    let (q_ref, saturated) = raw.clamped();
    Ok(InnerStep { q_ref, saturated })
}
