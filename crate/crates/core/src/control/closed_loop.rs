//! Two-loop orchestration: outer sensor-reference solve, inner pressure loop.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::adrc::{adrc_track, AdrcState};
use crate::control::gd::{initial_guess, pose_objective, sensor_scale, solve_sensor_target, GdConfig};
use crate::control::inner::{broyden_update, estimate_jacobian, inner_step, InnerConfig, Manipulator};
use crate::error::{Error, Result};
use crate::kinematics::{wrap_deg, Pose};
use crate::plant::NUM_CHAMBERS;
use crate::proprioception::{Dataset, PosePredictor};
use crate::sensing::{SensorVector, SENSOR_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub gd: GdConfig,
    pub inner: InnerConfig,
    /// Task tolerance on the predicted pose: translation (mm).
    pub tol_mm: f64,
    /// Task tolerance on the predicted pose: angle norm (deg).
    pub tol_deg: f64,
    pub max_outer: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            gd: GdConfig::default(),
            inner: InnerConfig::default(),
            tol_mm: 2.0,
            tol_deg: 2.0,
            max_outer: 30,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        self.gd.validate()?;
        self.inner.validate()?;
        if !(self.tol_mm > 0.0 && self.tol_deg > 0.0) || self.max_outer == 0 {
            return Err(Error::Config("need positive tolerances and max_outer >= 1".into()));
        }
        Ok(())
    }

    pub fn within_tolerance(&self, p_ref: &Pose, p: &Pose) -> bool {
        let ang = (0..3)
            .map(|k| wrap_deg(p_ref.to_array()[3 + k] - p.to_array()[3 + k]).powi(2))
            .sum::<f64>()
            .sqrt();
        p_ref.translation_error(p) <= self.tol_mm && ang <= self.tol_deg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub outer_iter: usize,
    pub q: [f64; NUM_CHAMBERS],
    pub s: [f64; SENSOR_DIM],
    pub estimated: Pose,
    pub truth: Pose,
    pub o_outer: f64,
    pub o_inner: f64,
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlTrace {
    pub rows: Vec<TraceRow>,
}

pub fn trace_header() -> Vec<String> {
    let mut h = vec!["t".to_string(), "outer_iter".to_string()];
    h.extend((1..=6).map(|i| format!("q{i}")));
    h.extend((1..=12).map(|i| format!("sp{i}")));
    h.extend((1..=12).map(|i| format!("imu{i}")));
    for prefix in ["p", "t"] {
        h.extend(["x", "y", "z", "yaw", "pitch", "roll"].iter().map(|c| format!("{prefix}{c}")));
    }
    h.extend(["O_outer", "O_inner", "saturated"].map(String::from));
    h
}

impl ControlTrace {
    pub fn is_time_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].t > w[0].t)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: &[String]) -> Result<()> {
        let io = |e| Error::io("<trace>", e);
        for c in comment {
            writeln!(out, "# {c}").map_err(io)?;
        }
        writeln!(out, "{}", trace_header().join(",")).map_err(io)?;
        for r in &self.rows {
            let mut f: Vec<String> = vec![r.t.to_string(), r.outer_iter.to_string()];
            f.extend(r.q.iter().map(f64::to_string));
            f.extend(r.s.iter().map(f64::to_string));
            f.extend(r.estimated.to_array().iter().map(f64::to_string));
            f.extend(r.truth.to_array().iter().map(f64::to_string));
            f.push(r.o_outer.to_string());
            f.push(r.o_inner.to_string());
            f.push(u8::from(r.saturated).to_string());
            writeln!(out, "{}", f.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, comment: &[String]) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), comment)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult {
    pub trace: ControlTrace,
    pub converged: bool,
    pub outer_iterations: usize,
    pub gd_iterations: usize,
    pub control_periods: usize,
    /// Some pressure reference was clamped at a limit.
    pub saturated: bool,
    pub final_sensors: SensorVector,
    pub final_estimate: Pose,
    pub final_truth: Pose,
}

impl ClosedLoopResult {
    pub fn translation_error(&self, p_ref: &Pose) -> f64 {
        self.final_truth.translation_error(p_ref)
    }
}

/// Owns the manipulator and observer state across successive targets.
#[derive(Debug, Clone)]
pub struct Controller<'a> {
    pub manipulator: Manipulator,
    pub predictor: &'a PosePredictor,
    pub config: ControlConfig,
    adrc: AdrcState,
    scale: [f64; SENSOR_DIM],
}

impl<'a> Controller<'a> {
    pub fn new(manipulator: Manipulator, predictor: &'a PosePredictor, config: ControlConfig) -> Result<Self> {
        config.validate()?;
        let b0 = config
            .inner
            .adrc
            .input_gain(manipulator.plant.config().dynamics.time_constant);
        let adrc = AdrcState::at_rest(&manipulator.plant.state().pressures, b0);
        let scale = sensor_scale(predictor);
        Ok(Self {
            manipulator,
            predictor,
            config,
            adrc,
            scale,
        })
    }

    fn normalized(&self, s: &[f64; SENSOR_DIM]) -> [f64; SENSOR_DIM] {
        std::array::from_fn(|k| s[k] / self.scale[k])
    }

    fn inner_objective(&self, s_ref: &SensorVector, s: &SensorVector) -> f64 {
        let (a, b) = (self.normalized(&s_ref.to_array()), self.normalized(&s.to_array()));
        a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum()
    }

    /// Drives the manipulator toward `p_ref`; `warm` seeds the first solve.
    pub fn closed_loop(&mut self, p_ref: &Pose, warm: Option<&SensorVector>) -> Result<ClosedLoopResult> {
        let cfg = self.config.clone();
        let w = cfg.gd.w_ang;
        let mut trace = ControlTrace::default();
        let mut s_curr = self.manipulator.read_mean(cfg.inner.reads_per_period);
        let mut est = self.predictor.predict(&s_curr)?;
        let result = |trace, converged, outer, gd, periods, sat, s: SensorVector, est: Pose, m: &Manipulator| ClosedLoopResult {
            trace,
            converged,
            outer_iterations: outer,
            gd_iterations: gd,
            control_periods: periods,
            saturated: sat,
            final_sensors: s,
            final_estimate: est,
            final_truth: m.plant.true_pose(),
        };
        if cfg.within_tolerance(p_ref, &est) {
            return Ok(result(trace, true, 0, 0, 0, false, s_curr, est, &self.manipulator));
        }

        let mut gd_total = 0;
        let mut periods = 0;
        let mut saturated = false;
        for outer in 0..cfg.max_outer {
            let s0 = match (outer, warm) {
                (0, Some(s)) => *s,
                _ => s_curr,
            };
            let gd = solve_sensor_target(p_ref, self.predictor, &s0, &cfg.gd)?;
            gd_total += gd.iterations;
            let s_ref = gd.s_ref;
            let s_ref_n = self.normalized(&s_ref.to_array());

            let mut q = self.manipulator.plant.state().pressures;
            let mut j = estimate_jacobian(&self.manipulator, &q, cfg.inner.fd_step)?;
            let mut history = vec![self.inner_objective(&s_ref, &s_curr)];
            for _ in 0..cfg.inner.max_periods {
                let jn = scale_rows(&j, &self.scale);
                let step = inner_step(&s_ref_n, &self.normalized(&s_curr.to_array()), &q, &jn, cfg.inner.mu)?;
                let sat = step.saturated.iter().any(|&b| b);
                saturated |= sat;
                let run = adrc_track(
                    &step.q_ref,
                    &mut self.manipulator.plant,
                    &mut self.adrc,
                    &cfg.inner.adrc,
                    cfg.inner.period,
                )?;
                if run.aborted {
                    return Err(Error::Numerical("pressure observer diverged".into()));
                }
                periods += 1;
                let s_new = self.manipulator.read_mean(cfg.inner.reads_per_period);
                let q_new = self.manipulator.plant.state().pressures;
                let dq: [f64; NUM_CHAMBERS] = std::array::from_fn(|k| q_new.0[k] - q.0[k]);
                let (a, b) = (s_new.to_array(), s_curr.to_array());
                let ds: [f64; SENSOR_DIM] = std::array::from_fn(|k| a[k] - b[k]);
                broyden_update(&mut j, &dq, &ds, cfg.inner.broyden_threshold);
                s_curr = s_new;
                q = q_new;
                est = self.predictor.predict(&s_curr)?;
                let o_inner = self.inner_objective(&s_ref, &s_curr);
                history.push(o_inner);
                trace.rows.push(TraceRow {
                    t: self.manipulator.plant.time(),
                    outer_iter: outer,
                    q: q.0,
                    s: s_curr.to_array(),
                    estimated: est,
                    truth: self.manipulator.plant.true_pose(),
                    o_outer: pose_objective(p_ref, &est, w),
                    o_inner,
                    saturated: sat,
                });
                if cfg.within_tolerance(p_ref, &est) {
                    return Ok(result(trace, true, outer + 1, gd_total, periods, saturated, s_curr, est, &self.manipulator));
                }
                if stalled(&history, cfg.inner.stall_window, cfg.inner.stall_tolerance) {
                    break;
                }
            }
        }
        Ok(result(trace, false, cfg.max_outer, gd_total, periods, saturated, s_curr, est, &self.manipulator))
    }

    /// Visits each waypoint in turn, warm-starting from the previous result.
    pub fn follow_path(&mut self, waypoints: &[Pose], first_guess: Option<&Dataset>) -> Result<PathResult> {
        if waypoints.is_empty() {
            return Err(Error::Empty("waypoint list"));
        }
        let mut trace = ControlTrace::default();
        let mut results = Vec::with_capacity(waypoints.len());
        let mut warm = match first_guess {
            Some(data) => Some(initial_guess(&waypoints[0], data, self.config.gd.w_ang)?.s),
            None => None,
        };
        for p in waypoints {
            let r = self.closed_loop(p, warm.as_ref())?;
            warm = Some(r.final_sensors);
            results.push(WaypointResult {
                target: *p,
                reached: r.final_truth,
                estimated: r.final_estimate,
                error_mm: r.translation_error(p),
                converged: r.converged,
                saturated: r.saturated,
                outer_iterations: r.outer_iterations,
            });
            trace.rows.extend(r.trace.rows);
        }
        let errs: Vec<f64> = results.iter().map(|r| r.error_mm).collect();
        Ok(PathResult {
            trace,
            mean_error_mm: errs.iter().sum::<f64>() / errs.len() as f64,
            max_error_mm: errs.iter().copied().fold(0.0, f64::max),
            waypoints: results,
        })
    }
}

fn scale_rows(j: &nalgebra::DMatrix<f64>, scale: &[f64; SENSOR_DIM]) -> nalgebra::DMatrix<f64> {
    let mut out = j.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        row /= scale[r];
    }
    out
}

/// True once the relative improvement over the last `window` entries falls
/// below `tol`.
pub fn stalled(history: &[f64], window: usize, tol: f64) -> bool {
    if history.len() <= window {
        return false;
    }
    let old = history[history.len() - 1 - window];
    let new = history[history.len() - 1];
    !(old > 0.0) || (old - new) / old < tol
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointResult {
    pub target: Pose,
    pub reached: Pose,
    pub estimated: Pose,
    pub error_mm: f64,
    pub converged: bool,
    pub saturated: bool,
    pub outer_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub trace: ControlTrace,
    pub waypoints: Vec<WaypointResult>,
    pub mean_error_mm: f64,
    pub max_error_mm: f64,
}

pub fn closed_loop(
    p_ref: &Pose,
    manipulator: Manipulator,
    pred: &PosePredictor,
    data: Option<&Dataset>,
    cfg: &ControlConfig,
) -> Result<(ClosedLoopResult, Manipulator)> {
    let warm = match data {
        Some(d) => Some(initial_guess(p_ref, d, cfg.gd.w_ang)?.s),
        None => None,
    };
    let mut c = Controller::new(manipulator, pred, cfg.clone())?;
    let r = c.closed_loop(p_ref, warm.as_ref())?;
    Ok((r, c.manipulator))
}

pub fn follow_path(
    waypoints: &[Pose],
    manipulator: Manipulator,
    pred: &PosePredictor,
    data: Option<&Dataset>,
    cfg: &ControlConfig,
) -> Result<(PathResult, Manipulator)> {
    let mut c = Controller::new(manipulator, pred, cfg.clone())?;
    let r = c.follow_path(waypoints, data)?;
    Ok((r, c.manipulator))
}
