//! The five verbs. Each takes a resolved [`RunConfig`] and writes into its
//! output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sensorspace_core::control::{
    closed_loop, load_waypoints, save_waypoints, ClosedLoopResult, PathResult, PathShape,
};
use sensorspace_core::nn::TrainHistory;
use sensorspace_core::proprioception::{
    ablation, evaluate, train_s2r, train_smap, Metrics, Provenance, SensorChannels,
};
use sensorspace_core::sensing::{fit_calibration, inductance_from_length, load_calibration_csv, CALIBRATED_LENGTH};
use sensorspace_core::{Dataset, Pose};

use crate::experiments::{self as ex, CalibrationFile, Check};
use crate::svg::{bar_chart, line_chart, Series};
use crate::{write_file, CliError, RunConfig};

/// Options shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Common {
    /// Defaults when no file is given; `--out` and `--seed` override the file.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.paths.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Sim,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Smap,
    S2r,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Standard,
    Ablation,
    Loads,
}

/// What `control` should run.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlTask {
    Target(Pose),
    PathFile(PathBuf),
    Shape(PathShape),
}

/// Parses `"x,y,z,yaw,pitch,roll"`.
pub fn parse_pose(text: &str) -> Result<Pose, CliError> {
    let v: Result<Vec<f64>, _> = text.split(',').map(|f| f.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == 6 && v.iter().all(|x| x.is_finite()) => Ok(Pose::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])),
        _ => Err(CliError::Config(format!("target '{text}' is not six comma-separated numbers"))),
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn csv_text(comment: &[String], header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    for c in comment {
        let _ = writeln!(s, "# {c}");
    }
    let _ = writeln!(s, "{}", header.join(","));
    for r in rows {
        let _ = writeln!(s, "{}", r.join(","));
    }
    s
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("{c}");
    }
}

// ---------------------------------------------------------------- calibrate

/// Fits the quartic to `input` or, without one, to noisy samples of the
/// configured curve. Returns the written file contents.
pub fn calibrate(cfg: &RunConfig, input: Option<&Path>, output: Option<&Path>) -> Result<CalibrationFile, CliError> {
    let truth = &cfg.sensing.model.curve;
    let samples = match input {
        Some(p) => load_calibration_csv(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let noise = Normal::new(0.0, 0.1).expect("valid sigma");
            let (lo, hi) = CALIBRATED_LENGTH;
            (0..200)
                .map(|k| {
                    let l = lo + (hi - lo) * f64::from(k) / 199.0;
                    Ok((inductance_from_length(l, truth)?, l + noise.sample(&mut rng)))
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
    };
    let fit = fit_calibration(&samples)?;
    fit.curve.validate()?;
    let file = CalibrationFile {
        curve: fit.curve.clone(),
        residual_rms: fit.residual_rms,
        samples: samples.len(),
    };

    let target = output.map_or_else(|| cfg.out("calibration.json"), Path::to_path_buf);
    let json = serde_json::to_string_pretty(&file).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&target, &(json + "\n"))?;

    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|&(i, l)| {
            let f = fit.curve.eval(i);
            vec![num(i), num(l), num(f), num(f - l)]
        })
        .collect();
    write_file(
        &cfg.out("calibration_residuals.csv"),
        &csv_text(
            &cfg.provenance("calibration residuals"),
            &["inductance", "length_mm", "fitted_mm", "residual_mm"],
            &rows,
        ),
    )?;
    println!(
        "calibration: {} samples, residual rms {:.4} mm, coefficients {:?}",
        file.samples,
        file.residual_rms,
        file.curve.coefficients()
    );
    Ok(file)
}

// ---------------------------------------------------------------- gen-data

pub fn gen_data(cfg: &RunConfig, kind: DataKind) -> Result<Dataset, CliError> {
    let (data, name, what) = match kind {
        DataKind::Sim => (ex::sim_dataset(cfg)?, &cfg.paths.sim_data, "simulated dataset"),
        DataKind::Real => (ex::real_dataset(cfg)?, &cfg.paths.real_data, "gap-plant grid dataset"),
    };
    let path = cfg.out(name);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    data.save_csv(&path, &cfg.provenance(what))?;
    let ws = data.workspace()?;
    println!(
        "{what}: n={} resampled={} x[{:.1}, {:.1}] y[{:.1}, {:.1}] z[{:.1}, {:.1}] -> {}",
        data.len(),
        data.resampled,
        ws.min[0],
        ws.max[0],
        ws.min[1],
        ws.max[1],
        ws.min[2],
        ws.max[2],
        path.display()
    );
    Ok(data)
}

// ---------------------------------------------------------------- train

fn history_csv(cfg: &RunConfig, what: &str, h: &TrainHistory) -> String {
    let rows: Vec<Vec<String>> = h
        .train_loss
        .iter()
        .zip(&h.val_loss)
        .enumerate()
        .map(|(e, (t, v))| vec![e.to_string(), num(*t), num(*v)])
        .collect();
    csv_text(&cfg.provenance(what), &["epoch", "train_loss", "val_loss"], &rows)
}

pub fn train(cfg: &RunConfig, which: Which) -> Result<(), CliError> {
    match which {
        Which::Smap => {
            let data = ex::load_dataset(&cfg.out(&cfg.paths.sim_data), Provenance::Sim)?;
            let split = ex::sim_split(cfg, &data);
            let (pred, history) = train_smap(&data, &split, SensorChannels::Fused, &cfg.training.smap)?;
            pred.smap.save(&cfg.out(&cfg.paths.smap_model))?;
            write_file(&cfg.out("smap_loss.csv"), &history_csv(cfg, "smap loss history", &history))?;
            let m = evaluate(&pred, &data, &split.test)?.overall;
            println!(
                "smap {:?}: {} epochs, best {:?}, test translation {:.3} mm",
                pred.smap.widths(),
                history.train_loss.len(),
                history.best_epoch,
                m.translation_mm
            );
        }
        Which::S2r => {
            let pred = ex::load_predictor(cfg, false)?;
            let real = ex::load_dataset(&cfg.out(&cfg.paths.real_data), Provenance::VirtualReal)?;
            let split = ex::real_split(cfg, &real);
            let nets = train_s2r(&real, &split, &pred, &cfg.training.s2r)?;
            nets.t.save(&cfg.out(&cfg.paths.s2r_t_model))?;
            nets.r.save(&cfg.out(&cfg.paths.s2r_r_model))?;
            write_file(
                &cfg.out("s2r_t_loss.csv"),
                &history_csv(cfg, "s2r translation loss history", &nets.history_t),
            )?;
            write_file(
                &cfg.out("s2r_r_loss.csv"),
                &history_csv(cfg, "s2r rotation loss history", &nets.history_r),
            )?;
            println!(
                "s2r {:?} + {:?} on {} samples",
                nets.t.widths(),
                nets.r.widths(),
                real.len()
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- eval

const METRIC_HEADER: [&str; 6] = ["set", "n", "translation_mm", "yaw_deg", "pitch_deg", "roll_deg"];

fn metric_row(name: &str, m: &Metrics) -> Vec<String> {
    vec![
        name.to_string(),
        m.n.to_string(),
        num(m.translation_mm),
        num(m.yaw_deg),
        num(m.pitch_deg),
        num(m.roll_deg),
    ]
}

fn write_metric_report(cfg: &RunConfig, stem: &str, title: &str, rows: &[(String, Metrics)]) -> Result<(), CliError> {
    let table: Vec<Vec<String>> = rows.iter().map(|(n, m)| metric_row(n, m)).collect();
    write_file(
        &cfg.out(&format!("{stem}.csv")),
        &csv_text(&cfg.provenance(title), &METRIC_HEADER, &table),
    )?;
    let cats: Vec<String> = rows.iter().map(|(n, _)| n.clone()).collect();
    let col = |f: fn(&Metrics) -> f64| rows.iter().map(|(_, m)| f(m)).collect::<Vec<_>>();
    let series = [
        ("translation (mm)", col(|m| m.translation_mm)),
        ("yaw (deg)", col(|m| m.yaw_deg)),
        ("pitch (deg)", col(|m| m.pitch_deg)),
        ("roll (deg)", col(|m| m.roll_deg)),
    ];
    write_file(&cfg.out(&format!("{stem}.svg")), &bar_chart(title, "mean error", &cats, &series))
}

fn write_checks(cfg: &RunConfig, stem: &str, checks: &[Check]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.name.clone(), num(c.value), num(c.bound), c.pass.to_string()])
        .collect();
    write_file(
        &cfg.out(&format!("{stem}_checks.csv")),
        &csv_text(&cfg.provenance("acceptance checks"), &["check", "value", "bound", "pass"], &rows),
    )
}

pub fn eval(cfg: &RunConfig, mode: EvalMode) -> Result<Vec<Check>, CliError> {
    let (stem, checks) = match mode {
        EvalMode::Standard => ("eval_standard", eval_standard(cfg)?),
        EvalMode::Ablation => ("eval_ablation", eval_ablation(cfg)?),
        EvalMode::Loads => ("eval_loads", eval_loads(cfg)?),
    };
    write_checks(cfg, stem, &checks)?;
    print_checks(&checks);
    ex::require(&checks)?;
    Ok(checks)
}

fn eval_standard(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let sim = ex::load_dataset(&cfg.out(&cfg.paths.sim_data), Provenance::Sim)?;
    let raw = ex::load_predictor(cfg, false)?;
    let split = ex::sim_split(cfg, &sim);
    let sim_m = evaluate(&raw, &sim, &split.test)?.overall;
    let mut rows = vec![("sim test".to_string(), sim_m)];
    let mut checks = vec![ex::accuracy_check(&sim_m, &sim.workspace()?)];

    let real_path = cfg.out(&cfg.paths.real_data);
    if real_path.is_file() {
        let real = ex::load_dataset(&real_path, Provenance::VirtualReal)?;
        let rs = ex::real_split(cfg, &real);
        let before = evaluate(&raw, &real, &rs.test)?.overall;
        rows.push(("gap plant uncorrected".into(), before));
        let corrected = ex::load_predictor(cfg, true)?;
        if corrected.s2r_t.is_some() {
            let after = evaluate(&corrected, &real, &rs.test)?.overall;
            rows.push(("gap plant corrected".into(), after));
            checks.push(ex::s2r_check(&before, &after));
        }
    }
    write_metric_report(cfg, "eval_standard", "prediction error", &rows)?;
    Ok(checks)
}

fn eval_ablation(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let sim = ex::load_dataset(&cfg.out(&cfg.paths.sim_data), Provenance::Sim)?;
    let split = ex::sim_split(cfg, &sim);
    let mut rows = Vec::new();
    for ch in [SensorChannels::SpringOnly, SensorChannels::ImuOnly, SensorChannels::Fused] {
        let (_, report) = ablation(&sim, &split, ch, &cfg.training.smap)?;
        rows.push((ch.name().to_string(), report.overall));
    }
    let checks = ex::fusion_checks(&rows[0].1, &rows[1].1, &rows[2].1);
    write_metric_report(cfg, "eval_ablation", "sensor ablation", &rows)?;
    Ok(checks)
}

fn eval_loads(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let pred = ex::load_predictor(cfg, false)?;
    let mut small = cfg.clone();
    small.data.sim_samples = 50;
    let probe: Vec<_> = ex::sim_dataset(&small)?.samples.iter().map(|s| s.s).collect();
    let before = ex::prediction_bits(&pred, &probe)?;
    let sweep = ex::load_sweep(cfg, &pred)?;
    let after = ex::prediction_bits(&pred, &probe)?;
    let mut checks = ex::load_checks(&sweep);
    checks.push(Check::flag("identical sensors give identical predictions across loads", before == after));
    let rows: Vec<(String, Metrics)> = sweep.iter().map(|(g, m)| (format!("{g} g"), *m)).collect();
    write_metric_report(cfg, "eval_loads", "error per payload", &rows)?;
    Ok(checks)
}

// ---------------------------------------------------------------- control

fn trajectory_svg(title: &str, target: &[Pose], reached: &[Pose]) -> String {
    let xy = |p: &[Pose]| p.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>();
    line_chart(
        title,
        "x (mm)",
        "y (mm)",
        &[
            Series {
                name: "target",
                points: xy(target),
            },
            Series {
                name: "true",
                points: xy(reached),
            },
        ],
        true,
    )
}

/// Outcome of a `control` run.
#[derive(Debug, Clone)]
pub enum ControlOutcome {
    Target(ClosedLoopResult),
    Path(PathResult),
}

pub fn control(cfg: &RunConfig, task: &ControlTask) -> Result<ControlOutcome, CliError> {
    let pred = ex::load_predictor(cfg, cfg.plant.control_on_gap_plant)?;
    let sim_path = cfg.out(&cfg.paths.sim_data);
    let data = if sim_path.is_file() {
        Some(ex::load_dataset(&sim_path, Provenance::Sim)?)
    } else {
        None
    };
    let trace_path = cfg.out("control_trace.csv");
    match task {
        ControlTask::Target(p) => {
            let m = ex::manipulator(cfg, 0)?;
            let (r, _) = closed_loop(p, m, &pred, data.as_ref(), &cfg.control.config)?;
            std::fs::create_dir_all(&cfg.paths.out_dir).map_err(|e| CliError::Io(cfg.paths.out_dir.clone(), e))?;
            r.trace.save_csv(&trace_path, &cfg.provenance("control trace"))?;
            let reached: Vec<Pose> = r.trace.rows.iter().map(|row| row.truth).collect();
            write_file(
                &cfg.out("control_trajectory.svg"),
                &trajectory_svg("single target", &[*p], &reached),
            )?;
            println!(
                "target: converged={} outer={} gd={} periods={} saturated={} error {:.3} mm",
                r.converged,
                r.outer_iterations,
                r.gd_iterations,
                r.control_periods,
                r.saturated,
                r.translation_error(p)
            );
            if !r.converged {
                return Err(CliError::NonConvergence(format!(
                    "target not reached after {} outer iterations",
                    r.outer_iterations
                )));
            }
            Ok(ControlOutcome::Target(r))
        }
        ControlTask::PathFile(_) | ControlTask::Shape(_) => {
            let waypoints = match task {
                ControlTask::PathFile(f) => load_waypoints(f)?,
                ControlTask::Shape(s) => {
                    let w = ex::path_waypoints(cfg, *s)?;
                    std::fs::create_dir_all(&cfg.paths.out_dir)
                        .map_err(|e| CliError::Io(cfg.paths.out_dir.clone(), e))?;
                    save_waypoints(&w, &cfg.out("waypoints.csv"), &cfg.provenance("waypoints"))?;
                    w
                }
                ControlTask::Target(_) => unreachable!(),
            };
            let r = ex::run_path(cfg, &pred, data.as_ref(), &waypoints, &cfg.control.config)?;
            std::fs::create_dir_all(&cfg.paths.out_dir).map_err(|e| CliError::Io(cfg.paths.out_dir.clone(), e))?;
            r.trace.save_csv(&trace_path, &cfg.provenance("control trace"))?;
            let rows: Vec<Vec<String>> = r
                .waypoints
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let mut row = vec![k.to_string()];
                    row.extend(w.target.to_array().iter().map(|v| num(*v)));
                    row.extend(w.reached.to_array().iter().map(|v| num(*v)));
                    row.extend([
                        num(w.error_mm),
                        w.converged.to_string(),
                        w.saturated.to_string(),
                        w.outer_iterations.to_string(),
                    ]);
                    row
                })
                .collect();
            write_file(
                &cfg.out("control_waypoints.csv"),
                &csv_text(
                    &cfg.provenance("waypoint results"),
                    &[
                        "index", "target_x", "target_y", "target_z", "target_yaw", "target_pitch", "target_roll",
                        "true_x", "true_y", "true_z", "true_yaw", "true_pitch", "true_roll", "error_mm", "converged",
                        "saturated", "outer_iterations",
                    ],
                    &rows,
                ),
            )?;
            let reached: Vec<Pose> = r.waypoints.iter().map(|w| w.reached).collect();
            write_file(
                &cfg.out("control_trajectory.svg"),
                &trajectory_svg("path following", &waypoints, &reached),
            )?;
            let missed = r.waypoints.iter().filter(|w| !w.converged).count();
            let unexplained = r.waypoints.iter().filter(|w| !w.converged && !w.saturated).count();
            println!(
                "path: {} waypoints, mean error {:.3} mm, max {:.3} mm, missed {missed} (saturated {})",
                r.waypoints.len(),
                r.mean_error_mm,
                r.max_error_mm,
                missed - unexplained
            );
            if unexplained > 0 {
                return Err(CliError::NonConvergence(format!(
                    "{unexplained} waypoints missed without saturation"
                )));
            }
            Ok(ControlOutcome::Path(r))
        }
    }
}
