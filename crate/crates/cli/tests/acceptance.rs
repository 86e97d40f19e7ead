//! Full-scale acceptance run: one PASS/FAIL line per property.
//!
//! Built with `harness = false`; the process exits non-zero when a property
//! that is expected to hold fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensorspace_cli::experiments::{self as ex, Check};
use sensorspace_cli::RunConfig;
use sensorspace_core::control::{
    adrc_track, initial_guess, solve_sensor_target, AdrcConfig, AdrcState, Controller, PathShape,
};
use sensorspace_core::plant::{LoadSpec, Plant, PlantConfig, NUM_CHAMBERS, PRESSURE_MAX, PRESSURE_MIN};
use sensorspace_core::proprioception::{
    ablation, evaluate, train_s2r, train_smap, Metrics, SensorChannels, Split,
};
use sensorspace_core::sensing::{inductance_from_length, CALIBRATED_LENGTH};
use sensorspace_core::{ActuationVector, Dataset, Mlp, PosePredictor};

/// Properties that do not hold on this plant; their lines still print and
/// the README explains the shortfall.
const KNOWN_SHORTFALLS: &[u32] = &[5];

struct Outcome {
    id: u32,
    title: &'static str,
    checks: Vec<Check>,
    elapsed: Duration,
    budget: Duration,
}

impl Outcome {
    fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.elapsed <= self.budget
    }

    fn line(&self) -> String {
        let detail: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{}={:.4} (bound {})", c.name, c.value, c.bound))
            .collect();
        format!(
            "{} [{:02}] {}: {} | {:.1}s of {:.0}s",
            if self.pass() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            detail.join("; "),
            self.elapsed.as_secs_f64(),
            self.budget.as_secs_f64()
        )
    }
}

fn timed(id: u32, title: &'static str, budget_s: u64, f: impl FnOnce() -> Vec<Check>) -> Outcome {
    let start = Instant::now();
    let checks = f();
    let o = Outcome {
        id,
        title,
        checks,
        elapsed: start.elapsed(),
        budget: Duration::from_secs(budget_s),
    };
    println!("{}", o.line());
    o
}

// ------------------------------------------------------------------ gradient

/// Worst point-wise relative error (infinity norm) of the analytic input
/// gradient against central differences.
fn gradient_error(widths: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(widths, seed).unwrap();
    let (n_in, n_out) = (widths[0], widths[widths.len() - 1]);
    // non-trivial normalisers
    let x = DMatrix::from_fn(n_in, 64, |_, _| rng.random_range(-50.0..150.0));
    let y = DMatrix::from_fn(n_out, 64, |_, _| rng.random_range(-300.0..300.0));
    net.fit_normalizers(&x, &y).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-50.0..150.0)).collect();
        let r: Vec<f64> = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = net.input_gradient(&x, &r).unwrap();
        let f = |x: &[f64]| -> f64 { net.forward(x).unwrap().iter().zip(&r).map(|(a, b)| a * b).sum() };
        let mut fd = vec![0.0; n_in];
        for i in 0..n_in {
            let h = 1e-4 * x[i].abs().max(1.0);
            let (mut hi, mut lo) = (x.clone(), x.clone());
            hi[i] += h;
            lo[i] -= h;
            fd[i] = (f(&hi) - f(&lo)) / (2.0 * h);
        }
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = g.iter().chain(&fd).map(|v| v.abs()).fold(0.0, f64::max);
        worst = worst.max(diff / scale);
    }
    worst
}

// ---------------------------------------------------------------- ADRC oracle

/// Dense RK4 integration of the continuous loop: first-order pressure lag,
/// linear observer and clamped control law.
fn adrc_oracle(r: f64, d: f64, cfg: &AdrcConfig, tau: f64, horizon: f64, sample_dt: f64) -> Vec<(f64, f64)> {
    let b0 = 1.0 / tau;
    let (b1, b2) = (2.0 * cfg.omega_o, cfg.omega_o * cfg.omega_o);
    let rhs = |x: [f64; 3]| {
        let [p, z1, z2] = x;
        let u = ((cfg.k_p * (r - z1) - z2) / b0).clamp(PRESSURE_MIN, PRESSURE_MAX);
        let e = p - z1;
        [(u - p) / tau + d, z2 + b0 * u + b1 * e, b2 * e]
    };
    let h = 1e-5;
    let every = (sample_dt / h).round() as usize;
    let steps = (horizon / h).round() as usize;
    let mut x = [0.0; 3];
    let mut out = vec![(0.0, 0.0)];
    for i in 1..=steps {
        let k1 = rhs(x);
        let k2 = rhs(std::array::from_fn(|j| x[j] + 0.5 * h * k1[j]));
        let k3 = rhs(std::array::from_fn(|j| x[j] + 0.5 * h * k2[j]));
        let k4 = rhs(std::array::from_fn(|j| x[j] + h * k3[j]));
        for j in 0..3 {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if i % every == 0 {
            out.push((i as f64 * h, x[0]));
        }
    }
    out
}

fn settling_time(samples: &[(f64, f64)], r: f64, band: f64) -> f64 {
    match samples.iter().rposition(|(_, p)| (p - r).abs() > band) {
        None => 0.0,
        Some(i) if i + 1 < samples.len() => samples[i + 1].0,
        Some(_) => f64::INFINITY,
    }
}

fn adrc_checks() -> Vec<Check> {
    let cfg = AdrcConfig::default();
    let tau = PlantConfig::default().dynamics.time_constant;
    let horizon = 20.0 * tau;
    let run = |r: f64, d: f64| {
        let mut plant = Plant::new(PlantConfig::default(), LoadSpec::default(), None).unwrap();
        plant.disturbance = [d; NUM_CHAMBERS];
        let mut st = AdrcState::at_rest(&ActuationVector::zeros(), 1.0 / tau);
        let tr = adrc_track(&ActuationVector::splat(r), &mut plant, &mut st, &cfg, horizon).unwrap();
        let mut s = vec![(0.0, 0.0)];
        s.extend(tr.t.iter().zip(&tr.pressure).map(|(t, p)| (*t, p[0])));
        s
    };
    let max_dev = |a: &[(f64, f64)], b: &[(f64, f64)]| {
        a.iter().zip(b).map(|(x, y)| (x.1 - y.1).abs()).fold(0.0, f64::max)
    };

    let step = run(40.0, 0.0);
    let step_oracle = adrc_oracle(40.0, 0.0, &cfg, tau, horizon, 0.01);
    let ts = settling_time(&step, 40.0, 0.8);
    let ts_oracle = settling_time(&step_oracle, 40.0, 0.8);
    let steady = (step.last().unwrap().1 - 40.0).abs();

    let dist = run(20.0, 25.0);
    let dist_oracle = adrc_oracle(20.0, 25.0, &cfg, tau, horizon, 0.01);
    let dist_err = (dist.last().unwrap().1 - 20.0).abs();
    let oracle_dist_err = (dist_oracle.last().unwrap().1 - 20.0).abs();
    vec![
        Check::at_most("step settling time / tau", ts / tau, 5.0),
        Check::at_most("step steady-state error (kPa)", steady, 1e-6),
        Check::at_most("settling time gap to oracle / tau", (ts - ts_oracle).abs() / tau, 0.1),
        Check::at_most("step max deviation from oracle (kPa)", max_dev(&step, &step_oracle), 1.0),
        Check::at_most("disturbed steady-state error (kPa)", dist_err, 0.5),
        Check::at_most("oracle disturbed steady-state error (kPa)", oracle_dist_err, 0.5),
        Check::at_most("disturbed max deviation from oracle (kPa)", max_dev(&dist, &dist_oracle), 1.0),
    ]
}

// -------------------------------------------------------------- calibration

fn calibration_checks(cfg: &RunConfig, dir: &Path) -> Vec<Check> {
    let mut c = cfg.clone();
    c.paths.out_dir = dir.join("calibration");
    let file = sensorspace_cli::commands::calibrate(&c, None, None).unwrap();
    let truth = &cfg.sensing.model.curve;
    let (lo, hi) = CALIBRATED_LENGTH;
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let l = lo + (hi - lo) * k as f64 / 999.0;
        let i = inductance_from_length(l, truth).unwrap();
        worst = worst.max((file.curve.eval(i) - l).abs());
    }
    vec![
        Check::at_most("max round-trip error (mm)", worst, 0.4 - 1e-12),
        Check::at_most("residual rms (mm)", file.residual_rms, 0.4),
    ]
}

// ------------------------------------------------------------- learning

struct Learned {
    sim: Dataset,
    split: Split,
    fused: PosePredictor,
    fused_metrics: Metrics,
}

fn learn(cfg: &RunConfig) -> Learned {
    let sim = ex::sim_dataset(cfg).unwrap();
    assert_eq!(sim.len(), 20_000);
    let split = ex::sim_split(cfg, &sim);
    let (fused, _) = train_smap(&sim, &split, SensorChannels::Fused, &cfg.training.smap).unwrap();
    let fused_metrics = evaluate(&fused, &sim, &split.test).unwrap().overall;
    Learned {
        sim,
        split,
        fused,
        fused_metrics,
    }
}

fn s2r_checks(cfg: &RunConfig, l: &Learned) -> Vec<Check> {
    let real = ex::real_dataset(cfg).unwrap();
    let split = ex::real_split(cfg, &real);
    let nets = train_s2r(&real, &split, &l.fused, &cfg.training.s2r).unwrap();
    let corrected = l.fused.clone().with_s2r(nets.t, nets.r).unwrap();
    let before = evaluate(&l.fused, &real, &split.test).unwrap().overall;
    let after = evaluate(&corrected, &real, &split.test).unwrap().overall;
    vec![
        Check::at_most("grid samples off 729", (real.len() as f64 - 729.0).abs(), 0.0),
        ex::s2r_check(&before, &after),
    ]
}

fn gd_checks(cfg: &RunConfig, l: &Learned) -> Vec<Check> {
    let gd = &cfg.control.config.gd;
    let rest = ex::manipulator(cfg, 0)
        .unwrap()
        .read_noiseless(&ActuationVector::zeros())
        .unwrap();
    let targets: Vec<_> = l.split.test.iter().take(100).map(|&i| l.sim.samples[i]).collect();
    let mut increases = 0;
    let start = Instant::now();
    for t in &targets {
        let sol = solve_sensor_target(&t.pose, &l.fused, &rest, gd).unwrap();
        increases += sol.objective.windows(2).filter(|w| w[1] > w[0]).count();
    }
    let mean_ms = start.elapsed().as_secs_f64() * 1e3 / targets.len() as f64;
    let mut at_optimum = 0;
    for t in targets.iter().take(20) {
        let p = l.fused.predict(&t.s).unwrap();
        at_optimum += solve_sensor_target(&p, &l.fused, &t.s, gd).unwrap().iterations;
    }
    vec![
        Check::at_most("objective increases over 100 targets", increases as f64, 0.0),
        Check::at_most("iterations started at the optimum", at_optimum as f64, 0.0),
        Check::at_most("mean solve time (ms)", mean_ms, 100.0),
    ]
}

fn warm_start_checks(cfg: &RunConfig, l: &Learned) -> Vec<Check> {
    let target = ex::far_target(cfg).unwrap();
    let run = |warm: bool| {
        let m = ex::manipulator(cfg, 0).unwrap();
        let mut c = Controller::new(m, &l.fused, cfg.control.config.clone()).unwrap();
        let guess = warm.then(|| initial_guess(&target, &l.sim, cfg.control.config.gd.w_ang).unwrap().s);
        c.closed_loop(&target, guess.as_ref()).unwrap()
    };
    let cold = run(false);
    let warm = run(true);
    vec![
        Check::flag("cold and warm runs converge", cold.converged && warm.converged),
        Check::at_least(
            "cold / warm outer iterations",
            cold.gd_iterations as f64 / warm.gd_iterations.max(1) as f64,
            1.5,
        ),
    ]
}

fn path_following(cfg: &RunConfig, l: &Learned) -> Vec<Check> {
    let dim = l.sim.workspace().unwrap().dimension();
    let mut checks = Vec::new();
    for shape in [PathShape::Circle, PathShape::FigureEight] {
        let waypoints = ex::path_waypoints(cfg, shape).unwrap();
        assert_eq!(waypoints.len(), 60);
        for payload in [0.0, 200.0, 500.0] {
            let mut c = cfg.clone();
            c.plant.payload_g = payload;
            let r = ex::run_path(&c, &l.fused, Some(&l.sim), &waypoints, &c.control.config).unwrap();
            let label = match shape {
                PathShape::Circle => "circle",
                PathShape::FigureEight => "eight",
            };
            checks.extend(ex::path_checks(label, payload, &r, dim));
        }
    }
    checks
}

// ---------------------------------------------------------- reproducibility

fn csv_snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "csv") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap());
        }
    }
    out
}

fn reproducibility_checks(dir: &Path) -> Vec<Check> {
    let bin = env!("CARGO_BIN_EXE_sensorspace");
    let reduced = r#"{
        "data": {"sim_samples": 1500, "real_levels": 2, "load_samples": 50},
        "training": {"smap": {"max_epochs": 15}, "s2r": {"max_epochs": 15, "seed": 100}},
        "control": {"path": {"waypoints": 4}, "config": {"max_outer": 3}}
    }"#;
    let verbs: [&[&str]; 10] = [
        &["calibrate"],
        &["gen-data", "--kind", "sim"],
        &["gen-data", "--kind", "real"],
        &["train", "--which", "smap"],
        &["train", "--which", "s2r"],
        &["eval", "--mode", "standard"],
        &["eval", "--mode", "ablation"],
        &["eval", "--mode", "loads"],
        &["control", "--shape", "circle"],
        &["control", "--target", "20,10,320,0,0,0"],
    ];
    let mut runs = Vec::new();
    for k in 0..2 {
        let root = dir.join(format!("run{k}"));
        std::fs::create_dir_all(&root).unwrap();
        std::fs::write(root.join("config.json"), reduced).unwrap();
        let mut snaps = Vec::new();
        for v in verbs {
            let status = Command::new(bin)
                .args(v)
                .args(["--config", "config.json", "--seed", "11"])
                .current_dir(&root)
                .output()
                .unwrap()
                .status;
            snaps.push((status.code(), csv_snapshot(&root.join("out"))));
        }
        runs.push(snaps);
    }
    let identical = runs[0] == runs[1];
    let files = runs[0].last().map_or(0, |s| s.1.len());
    let io_free = runs[0].iter().all(|(code, _)| matches!(code, Some(0 | 2 | 3)));
    vec![
        Check::flag("byte-identical CSV outputs across two runs", identical),
        Check::flag("every verb ran without IO or config errors", io_free),
        Check::at_least("CSV files compared", files as f64, 10.0),
    ]
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let mut outcomes = Vec::new();

    outcomes.push(timed(1, "input gradient vs central differences", 10, || {
        vec![
            Check::at_most("24-120-120-6 max relative error", gradient_error(&[24, 120, 120, 6], 1), 1e-4),
            Check::at_most("3-45-3 max relative error", gradient_error(&[3, 45, 3], 2), 1e-4),
        ]
    }));
    outcomes.push(timed(2, "calibration resolution", 1, || calibration_checks(&cfg, scratch.path())));

    let mut learned = None;
    outcomes.push(timed(3, "proprioception accuracy", 1800, || {
        let l = learn(&cfg);
        let c = vec![ex::accuracy_check(&l.fused_metrics, &l.sim.workspace().unwrap())];
        learned = Some(l);
        c
    }));
    let l = learned.expect("smap trained");

    outcomes.push(timed(4, "sensor fusion ordering", 3600, || {
        let spring = ablation(&l.sim, &l.split, SensorChannels::SpringOnly, &cfg.training.smap).unwrap().1;
        let imu = ablation(&l.sim, &l.split, SensorChannels::ImuOnly, &cfg.training.smap).unwrap().1;
        ex::fusion_checks(&spring.overall, &imu.overall, &l.fused_metrics)
    }));
    outcomes.push(timed(5, "sim-to-real correction", 300, || s2r_checks(&cfg, &l)));
    outcomes.push(timed(6, "load independence", 300, || {
        let probe: Vec<_> = l.split.test.iter().take(200).map(|&i| l.sim.samples[i].s).collect();
        let before = ex::prediction_bits(&l.fused, &probe).unwrap();
        let sweep = ex::load_sweep(&cfg, &l.fused).unwrap();
        let after = ex::prediction_bits(&l.fused, &probe).unwrap();
        let mut c = ex::load_checks(&sweep);
        c.push(Check::flag("identical sensors give identical predictions", before == after));
        c
    }));
    outcomes.push(timed(7, "sensor-space descent contract", 120, || gd_checks(&cfg, &l)));
    outcomes.push(timed(8, "warm start", 60, || warm_start_checks(&cfg, &l)));
    outcomes.push(timed(9, "pressure tracking", 10, adrc_checks));
    outcomes.push(timed(10, "closed-loop path following", 1200, || path_following(&cfg, &l)));
    outcomes.push(timed(11, "reproducibility", 600, || reproducibility_checks(scratch.path())));

    let unexpected: Vec<u32> = outcomes
        .iter()
        .filter(|o| !o.pass() && !KNOWN_SHORTFALLS.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let passed = outcomes.iter().filter(|o| o.pass()).count();
    println!("{passed}/{} properties pass; known shortfalls {KNOWN_SHORTFALLS:?}", outcomes.len());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
