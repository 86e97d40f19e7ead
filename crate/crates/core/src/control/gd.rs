//! Outer loop: reference sensor signals from a target pose.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{wrap_deg, Pose};
use crate::plant::PRESSURE_MAX;
use crate::proprioception::{Dataset, PosePredictor};
use crate::sensing::{SensorVector, SENSOR_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdConfig {
    /// Stop once the weighted objective drops to this value.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Line-search shrink ratio.
    pub tau: f64,
    /// Initial step length, in normalized sensor units.
    pub h0: f64,
    /// mm per degree when mixing translation and angle errors.
    pub w_ang: f64,
    /// Cap on repeated steps in one expand phase.
    pub max_expand: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            lambda: 8.0,
            max_iterations: 500,
            tau: 0.2,
            h0: 0.1,
            w_ang: 1.0,
            max_expand: 2000,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.lambda > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config("need lambda > 0 and max_iterations >= 1".into()));
        }
        if !(self.h0 > 0.0 && self.w_ang >= 0.0) || self.max_expand == 0 {
            return Err(Error::Config("need h0 > 0, w_ang >= 0, max_expand >= 1".into()));
        }
        Ok(())
    }
}

/// Weighted residual `p_ref - p` with wrapped angles scaled by `w_ang`.
pub fn weighted_residual(p_ref: &Pose, p: &Pose, w_ang: f64) -> [f64; 6] {
    let a = p_ref.to_array();
    let b = p.to_array();
    std::array::from_fn(|k| {
        if k < 3 {
            a[k] - b[k]
        } else {
            w_ang * wrap_deg(a[k] - b[k])
        }
    })
}

pub fn pose_objective(p_ref: &Pose, p: &Pose, w_ang: f64) -> f64 {
    weighted_residual(p_ref, p, w_ang).iter().map(|r| r * r).sum()
}

pub fn objective(p_ref: &Pose, s: &SensorVector, pred: &PosePredictor, w_ang: f64) -> Result<f64> {
    Ok(pose_objective(p_ref, &pred.predict(s)?, w_ang))
}

/// d objective / d s over all 24 sensor channels.
pub fn objective_gradient(
    p_ref: &Pose,
    s: &SensorVector,
    pred: &PosePredictor,
    w_ang: f64,
) -> Result<[f64; SENSOR_DIM]> {
    let r = weighted_residual(p_ref, &pred.predict(s)?, w_ang);
    let back: [f64; 6] = std::array::from_fn(|k| {
        let w = if k < 3 { 1.0 } else { w_ang };
        -2.0 * w * r[k]
    });
    pred.input_gradient(s, &back)
}

/// Per-channel scale of the predictor's input normalizer; 1 on unused channels.
pub fn sensor_scale(pred: &PosePredictor) -> [f64; SENSOR_DIM] {
    let mut scale = [1.0; SENSOR_DIM];
    let std = &pred.smap.input_normalizer().std;
    for (k, &sd) in pred.channels.indices().zip(std) {
        scale[k] = sd;
    }
    scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdSolution {
    pub s_ref: SensorVector,
    pub iterations: usize,
    /// Objective at the start and after every iteration.
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl GdSolution {
    pub fn final_objective(&self) -> f64 {
        *self.objective.last().expect("objective log starts non-empty")
    }
}

fn offset(s: &[f64; SENSOR_DIM], d: &[f64; SENSOR_DIM], h: f64) -> SensorVector {
    let v: [f64; SENSOR_DIM] = std::array::from_fn(|k| s[k] + h * d[k]);
    SensorVector::from_slice(&v).expect("fixed length")
}

/// Gradient descent with shrink/expand line search.
///
/// Steps are taken in normalized sensor coordinates along the unit descent
/// direction; `h` restarts from `h0` every iteration. The search direction is
/// held fixed through the expand phase.
pub fn solve_sensor_target(
    p_ref: &Pose,
    pred: &PosePredictor,
    s0: &SensorVector,
    cfg: &GdConfig,
) -> Result<GdSolution> {
    cfg.validate()?;
    let scale = sensor_scale(pred);
    let mut s = s0.to_array();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite initial sensor vector".into()));
    }
    let eval = |v: &SensorVector| objective(p_ref, v, pred, cfg.w_ang);
    let mut o = eval(s0)?;
    let mut log = vec![o];
    let mut i = 0;
    while o > cfg.lambda && i < cfg.max_iterations {
        let sv = SensorVector::from_slice(&s)?;
        let g = objective_gradient(p_ref, &sv, pred, cfg.w_ang)?;
        // descent direction in normalized units, mapped back to raw units
        let gn: [f64; SENSOR_DIM] = std::array::from_fn(|k| g[k] * scale[k]);
        let norm = gn.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            break;
        }
        let d: [f64; SENSOR_DIM] = std::array::from_fn(|k| -gn[k] / norm * scale[k]);

        let mut h = cfg.h0;
        let mut o_shrink = eval(&offset(&s, &d, h))?;
        while !(o_shrink < o) {
            h *= cfg.tau;
            if h < cfg.h0 * 1e-12 {
                break;
            }
            o_shrink = eval(&offset(&s, &d, h))?;
        }
        if !(o_shrink < o) {
            // stationary to working precision
            break;
        }

        let mut o_new = o_shrink;
        let mut expands = 0;
        loop {
            s = offset(&s, &d, h).to_array();
            let o_next = eval(&offset(&s, &d, h))?;
            expands += 1;
            if !(o_next < o_new) || expands >= cfg.max_expand {
                break;
            }
            o_new = o_next;
        }
        o = o_new;
        i += 1;
        log.push(o);
    }
    Ok(GdSolution {
        s_ref: SensorVector::from_slice(&s)?,
        iterations: i,
        objective: log,
        converged: o <= cfg.lambda,
    })
}

/// Starting sensor signal picked from stored samples.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialGuess {
    pub s: SensorVector,
    pub index: usize,
    /// No interior sample existed; the guess may sit on a pressure limit.
    pub saturated_fallback: bool,
}

/// Fraction of the pressure range a warm-start sample must stay within.
pub const INTERIOR_MARGIN: f64 = 0.9;

/// Stored sample whose pose is closest to `p_ref`, preferring samples with
/// every chamber inside the interior margin.
pub fn initial_guess(p_ref: &Pose, data: &Dataset, w_ang: f64) -> Result<InitialGuess> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let limit = INTERIOR_MARGIN * PRESSURE_MAX;
    let mut best: Option<(f64, usize)> = None;
    let mut best_any: Option<(f64, usize)> = None;
    for (i, smp) in data.samples.iter().enumerate() {
        let d = pose_objective(p_ref, &smp.pose, w_ang);
        if best_any.is_none_or(|(b, _)| d < b) {
            best_any = Some((d, i));
        }
        if smp.q.0.iter().all(|p| p.abs() <= limit) && best.is_none_or(|(b, _)| d < b) {
            best = Some((d, i));
        }
    }
    let (index, saturated_fallback) = match best {
        Some((_, i)) => (i, false),
        None => (best_any.expect("dataset is non-empty").1, true),
    };
    Ok(InitialGuess {
        s: data.samples[index].s,
        index,
        saturated_fallback,
    })
}
