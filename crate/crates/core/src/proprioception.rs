//! Datasets, the sensor-to-pose predictor with its sim-to-real correction,
//! error metrics and the sensor-fusion ablation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{wrap_deg, Pose};
use crate::nn::{train, Mlp, TrainConfig, TrainHistory};
use crate::plant::{
    forward, real_forward, ActuationVector, GapModel, LoadSpec, PlantConfig, NUM_CHAMBERS, PRESSURE_MAX,
    PRESSURE_MIN,
};
use crate::sensing::{read_sensors, SensorModel, SensorNoise, SensorVector, NUM_SPRINGS, SENSOR_DIM};

pub const SMAP_HIDDEN: [usize; 2] = [120, 120];
pub const S2R_HIDDEN: [usize; 1] = [45];
pub const SPLIT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

const MAX_RESAMPLE_PER_SAMPLE: usize = 100;

/// CSV column names in file order.
pub fn dataset_header() -> Vec<String> {
    let mut h = vec!["load_g".to_string()];
    h.extend((1..=6).map(|i| format!("q{i}")));
    h.extend((1..=12).map(|i| format!("sp{i}")));
    h.extend((1..=12).map(|i| format!("imu{i}")));
    h.extend(["x", "y", "z", "yaw", "pitch", "roll"].map(String::from));
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub q: ActuationVector,
    pub s: SensorVector,
    pub pose: Pose,
    pub load_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Sim,
    VirtualReal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
    pub seed: u64,
    /// Draws rejected and redrawn (or grid points skipped) during generation.
    pub resampled: usize,
}

/// Disjoint index partition of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Translation bounding box of a dataset (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Workspace {
    pub fn diagonal(&self) -> f64 {
        (0..3).map(|i| (self.max[i] - self.min[i]).powi(2)).sum::<f64>().sqrt()
    }

    /// Largest side of the bounding box.
    pub fn dimension(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).fold(0.0, f64::max)
    }
}

/// Which sensor channels a network sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorChannels {
    Fused,
    SpringOnly,
    ImuOnly,
}

impl SensorChannels {
    pub const ALL: [SensorChannels; 3] = [Self::SpringOnly, Self::ImuOnly, Self::Fused];

    pub fn indices(&self) -> std::ops::Range<usize> {
        match self {
            Self::Fused => 0..SENSOR_DIM,
            Self::SpringOnly => 0..NUM_SPRINGS,
            Self::ImuOnly => NUM_SPRINGS..SENSOR_DIM,
        }
    }

    pub fn width(&self) -> usize {
        self.indices().len()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Fused => "fused",
            Self::SpringOnly => "spring-only",
            Self::ImuOnly => "imu-only",
        }
    }
}

impl std::str::FromStr for SensorChannels {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown channel set `{s}`")))
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Seeded shuffle, then floor(0.2 n) validation and floor(0.1 n) test
    /// samples; the remainder trains.
    pub fn split(&self, seed: u64) -> Split {
        split_indices(self.len(), seed)
    }

    pub fn workspace(&self) -> Result<Workspace> {
        if self.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut w = Workspace {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        };
        for s in &self.samples {
            let t = [s.pose.x, s.pose.y, s.pose.z];
            for i in 0..3 {
                w.min[i] = w.min[i].min(t[i]);
                w.max[i] = w.max[i].max(t[i]);
            }
        }
        Ok(w)
    }

    /// Sensor inputs restricted to `channels`, one sample per column.
    pub fn inputs(&self, idx: &[usize], channels: SensorChannels) -> DMatrix<f64> {
        let range = channels.indices();
        let mut m = DMatrix::zeros(range.len(), idx.len());
        for (c, &i) in idx.iter().enumerate() {
            let s = self.samples[i].s.to_array();
            for (r, k) in range.clone().enumerate() {
                m[(r, c)] = s[k];
            }
        }
        m
    }

    /// Ground-truth poses, one sample per column.
    pub fn poses(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_iterator(6, idx.len(), idx.iter().flat_map(|&i| self.samples[i].pose.to_array()))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            samples: idx.iter().map(|&i| self.samples[i]).collect(),
            provenance: self.provenance,
            seed: self.seed,
            resampled: 0,
        }
    }

    /// Writes the dataset as CSV; `comment` lines are prefixed with `#`.
    pub fn write_csv<W: Write>(&self, out: W, comment: &[String]) -> Result<()> {
        let mut out = std::io::BufWriter::new(out);
        let io = |e: std::io::Error| Error::io("<dataset output>", e);
        for c in comment {
            writeln!(out, "# {c}").map_err(io)?;
        }
        writeln!(out, "{}", dataset_header().join(",")).map_err(io)?;
        for s in &self.samples {
            let mut row = vec![s.load_g];
            row.extend_from_slice(&s.q.0);
            row.extend_from_slice(&s.s.to_array());
            row.extend_from_slice(&s.pose.to_array());
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", line.join(",")).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn save_csv(&self, path: &Path, comment: &[String]) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f, comment).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn read_csv<R: Read>(input: R, source_name: &str, provenance: Provenance) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
            .clone();
        let expected = dataset_header();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::parse(source_name, 1, "unexpected dataset header"));
        }
        let mut samples = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(source_name, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let vals: Vec<f64> = rec
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(source_name, line, format!("column {}: {e}", expected[k])))
                })
                .collect::<Result<_>>()?;
            let mut q = [0.0; NUM_CHAMBERS];
            q.copy_from_slice(&vals[1..7]);
            samples.push(Sample {
                load_g: vals[0],
                q: ActuationVector(q),
                s: SensorVector::from_slice(&vals[7..31])?,
                pose: Pose::from_slice(&vals[31..37])?,
            });
        }
        Ok(Dataset {
            samples,
            provenance,
            seed: 0,
            resampled: 0,
        })
    }

    pub fn load_csv(path: &Path, provenance: Provenance) -> Result<Dataset> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f, &path.display().to_string(), provenance)
    }
}

pub fn split_indices(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n as f64 * SPLIT_RATIOS[1]).floor() as usize;
    let n_test = (n as f64 * SPLIT_RATIOS[2]).floor() as usize;
    let test = idx.split_off(n - n_test);
    let val = idx.split_off(n - n_test - n_val);
    Split { train: idx, val, test }
}

/// Everything needed to synthesise samples from the virtual rig.
#[derive(Debug, Clone, Copy)]
pub struct Rig<'a> {
    pub plant: &'a PlantConfig,
    pub sensors: &'a SensorModel,
    pub noise: &'a SensorNoise,
    /// `None` is the ideal plant.
    pub gap: Option<&'a GapModel>,
}

impl Rig<'_> {
    /// One sample, or `None` when the plant does not settle.
    pub fn sample<R: Rng + ?Sized>(&self, q: &ActuationVector, load: &LoadSpec, rng: &mut R) -> Result<Option<Sample>> {
        let solved = match self.gap {
            Some(g) => real_forward(self.plant, q, load, g),
            None => forward(self.plant, q, load),
        };
        let (state, pose) = match solved {
            Ok(v) => v,
            Err(Error::Domain { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !state.converged || pose.to_array().iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let s = read_sensors(&state, &self.plant.geometry, self.sensors, self.noise, self.gap, rng);
        Ok(Some(Sample {
            q: state.pressures,
            s,
            pose,
            load_g: load.payload_g,
        }))
    }

    /// Uniform random pressures; sample `i` uses its own stream of `seed`.
    pub fn random_dataset(&self, n: usize, load: &LoadSpec, seed: u64, provenance: Provenance) -> Result<Dataset> {
        let mut samples = Vec::with_capacity(n);
        let mut resampled = 0;
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut tries = 0;
            loop {
                let q = ActuationVector(std::array::from_fn(|_| rng.random_range(PRESSURE_MIN..=PRESSURE_MAX)));
                if let Some(s) = self.sample(&q, load, &mut rng)? {
                    samples.push(s);
                    break;
                }
                resampled += 1;
                tries += 1;
                if tries >= MAX_RESAMPLE_PER_SAMPLE {
                    return Err(Error::Numerical(format!(
                        "sample {i}: no valid draw in {MAX_RESAMPLE_PER_SAMPLE} attempts"
                    )));
                }
            }
        }
        Ok(Dataset {
            samples,
            provenance,
            seed,
            resampled,
        })
    }
}

/// Uniform pressure draws on the ideal plant, zero payload.
pub fn gen_sim_dataset(
    plant: &PlantConfig,
    sensors: &SensorModel,
    noise: &SensorNoise,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let rig = Rig {
        plant,
        sensors,
        noise,
        gap: None,
    };
    rig.random_dataset(n, &LoadSpec::default(), seed, Provenance::Sim)
}

/// Pressure levels of a full factorial grid.
pub fn grid_levels(levels: usize) -> Vec<f64> {
    match levels {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..levels)
            .map(|k| PRESSURE_MIN + (PRESSURE_MAX - PRESSURE_MIN) * k as f64 / (levels - 1) as f64)
            .collect(),
    }
}

/// Full factorial pressure grid on the gap plant.
pub fn gen_real_dataset(
    plant: &PlantConfig,
    sensors: &SensorModel,
    noise: &SensorNoise,
    gap: &GapModel,
    levels: usize,
    seed: u64,
) -> Result<Dataset> {
    if levels == 0 {
        return Err(Error::Config("grid needs at least one level".into()));
    }
    let rig = Rig {
        plant,
        sensors,
        noise,
        gap: Some(gap),
    };
    let lv = grid_levels(levels);
    let total = levels.pow(NUM_CHAMBERS as u32);
    let load = LoadSpec::default();
    let mut samples = Vec::with_capacity(total);
    let mut skipped = 0;
    for i in 0..total {
        let mut rem = i;
        let mut q = [0.0; NUM_CHAMBERS];
        for c in (0..NUM_CHAMBERS).rev() {
            q[c] = lv[rem % levels];
            rem /= levels;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        match rig.sample(&ActuationVector(q), &load, &mut rng)? {
            Some(s) => samples.push(s),
            None => skipped += 1,
        }
    }
    Ok(Dataset {
        samples,
        provenance: Provenance::VirtualReal,
        seed,
        resampled: skipped,
    })
}

/// Sensor-to-pose map, optionally followed by the pose-space correction.
#[derive(Debug, Clone, PartialEq)]
pub struct PosePredictor {
    pub smap: Mlp,
    pub s2r_t: Option<Mlp>,
    pub s2r_r: Option<Mlp>,
    pub s2r_enabled: bool,
    pub channels: SensorChannels,
}

impl PosePredictor {
    pub fn new(smap: Mlp, channels: SensorChannels) -> Result<Self> {
        if smap.input_dim() != channels.width() || smap.output_dim() != 6 {
            return Err(Error::Dimension {
                expected: channels.width(),
                actual: smap.input_dim(),
            });
        }
        Ok(Self {
            smap,
            s2r_t: None,
            s2r_r: None,
            s2r_enabled: false,
            channels,
        })
    }

    pub fn with_s2r(mut self, t: Mlp, r: Mlp) -> Result<Self> {
        for n in [&t, &r] {
            if n.input_dim() != 3 || n.output_dim() != 3 {
                return Err(Error::Dimension {
                    expected: 3,
                    actual: n.input_dim(),
                });
            }
        }
        self.s2r_t = Some(t);
        self.s2r_r = Some(r);
        self.s2r_enabled = true;
        Ok(self)
    }

    fn select(&self, s: &SensorVector) -> Vec<f64> {
        s.to_array()[self.channels.indices()].to_vec()
    }

    fn correction(&self) -> Option<(&Mlp, &Mlp)> {
        match (self.s2r_enabled, &self.s2r_t, &self.s2r_r) {
            (true, Some(t), Some(r)) => Some((t, r)),
            _ => None,
        }
    }

    /// Output of the sensor-to-pose network alone.
    pub fn predict_raw(&self, s: &SensorVector) -> Result<Pose> {
        Pose::from_slice(&self.smap.forward(&self.select(s))?)
    }

    pub fn predict(&self, s: &SensorVector) -> Result<Pose> {
        let raw = self.smap.forward(&self.select(s))?;
        match self.correction() {
            None => Pose::from_slice(&raw),
            Some((t, r)) => {
                let mut out = t.forward(&raw[..3])?;
                out.extend(r.forward(&raw[3..])?);
                Pose::from_slice(&out)
            }
        }
    }

    /// Batch prediction, one sample per column in and out.
    pub fn predict_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let raw = self.smap.predict_batch(inputs)?;
        match self.correction() {
            None => Ok(raw),
            Some((t, r)) => {
                let top = t.predict_batch(&raw.rows(0, 3).into_owned())?;
                let bottom = r.predict_batch(&raw.rows(3, 3).into_owned())?;
                let mut out = raw;
                out.rows_mut(0, 3).copy_from(&top);
                out.rows_mut(3, 3).copy_from(&bottom);
                Ok(out)
            }
        }
    }

    /// Gradient of `residual . predict(s)` with respect to all 24 sensor values.
    pub fn input_gradient(&self, s: &SensorVector, residual: &[f64; 6]) -> Result<[f64; SENSOR_DIM]> {
        let x = self.select(s);
        let back = match self.correction() {
            None => residual.to_vec(),
            Some((t, r)) => {
                let raw = self.smap.forward(&x)?;
                let mut g = t.input_gradient(&raw[..3], &residual[..3])?;
                g.extend(r.input_gradient(&raw[3..], &residual[3..])?);
                g
            }
        };
        let g = self.smap.input_gradient(&x, &back)?;
        let mut out = [0.0; SENSOR_DIM];
        for (k, v) in self.channels.indices().zip(g) {
            out[k] = v;
        }
        Ok(out)
    }
}

/// Mean errors over a set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// Mean Euclidean translation error (mm).
    pub translation_mm: f64,
    /// Mean absolute wrapped angle errors (deg).
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Metrics,
    /// (payload g, metrics) when the set mixes payloads.
    pub per_load: Vec<(f64, Metrics)>,
}

pub fn pose_metrics(predicted: &[Pose], truth: &[Pose]) -> Result<Metrics> {
    if predicted.len() != truth.len() {
        return Err(Error::Dimension {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let n = truth.len() as f64;
    let mut m = Metrics {
        n: truth.len(),
        ..Default::default()
    };
    for (p, t) in predicted.iter().zip(truth) {
        m.translation_mm += p.translation_error(t);
        m.yaw_deg += wrap_deg(p.yaw - t.yaw).abs();
        m.pitch_deg += wrap_deg(p.pitch - t.pitch).abs();
        m.roll_deg += wrap_deg(p.roll - t.roll).abs();
    }
    m.translation_mm /= n;
    m.yaw_deg /= n;
    m.pitch_deg /= n;
    m.roll_deg /= n;
    Ok(m)
}

fn columns_to_poses(m: &DMatrix<f64>) -> Vec<Pose> {
    m.column_iter()
        .map(|c| Pose::from_array(std::array::from_fn(|i| c[i])))
        .collect()
}

/// Errors of `pred` on the listed samples, stratified by payload.
pub fn evaluate(pred: &PosePredictor, data: &Dataset, idx: &[usize]) -> Result<EvalReport> {
    if idx.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let out = pred.predict_batch(&data.inputs(idx, pred.channels))?;
    let predicted = columns_to_poses(&out);
    let truth: Vec<Pose> = idx.iter().map(|&i| data.samples[i].pose).collect();
    let overall = pose_metrics(&predicted, &truth)?;

    let mut loads: Vec<f64> = idx.iter().map(|&i| data.samples[i].load_g).collect();
    loads.sort_by(f64::total_cmp);
    loads.dedup();
    let mut per_load = Vec::new();
    if loads.len() > 1 {
        for load in loads {
            let (p, t): (Vec<Pose>, Vec<Pose>) = idx
                .iter()
                .enumerate()
                .filter(|(_, &i)| data.samples[i].load_g == load)
                .map(|(k, &i)| (predicted[k], data.samples[i].pose))
                .unzip();
            per_load.push((load, pose_metrics(&p, &t)?));
        }
    }
    Ok(EvalReport { overall, per_load })
}

/// Mean translation shift the correction stage applies (mm).
pub fn correction_magnitude(pred: &PosePredictor, data: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let inputs = data.inputs(idx, pred.channels);
    let raw = pred.smap.predict_batch(&inputs)?;
    let corrected = pred.predict_batch(&inputs)?;
    let d = corrected - raw;
    Ok(d.column_iter().map(|c| c.rows(0, 3).norm()).sum::<f64>() / idx.len() as f64)
}

pub fn smap_widths(channels: SensorChannels) -> Vec<usize> {
    let mut w = vec![channels.width()];
    w.extend(SMAP_HIDDEN);
    w.push(6);
    w
}

pub fn s2r_widths() -> Vec<usize> {
    let mut w = vec![3];
    w.extend(S2R_HIDDEN);
    w.push(3);
    w
}

/// Trains a sensor-to-pose network on the train/validation parts of `split`.
pub fn train_smap(
    data: &Dataset,
    split: &Split,
    channels: SensorChannels,
    cfg: &TrainConfig,
) -> Result<(PosePredictor, TrainHistory)> {
    let mut net = Mlp::new(&smap_widths(channels), cfg.seed)?;
    let history = train(
        &mut net,
        &data.inputs(&split.train, channels),
        &data.poses(&split.train),
        &data.inputs(&split.val, channels),
        &data.poses(&split.val),
        cfg,
    )?;
    Ok((PosePredictor::new(net, channels)?, history))
}

/// Corrections for the translation and angle blocks of the raw prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct S2rNets {
    pub t: Mlp,
    pub r: Mlp,
    pub history_t: TrainHistory,
    pub history_r: TrainHistory,
}

/// Fits the pose-space correction from the raw predictions on real data.
///
/// Angle targets are unwrapped next to the raw prediction so a wrap across
/// +-180 degrees never shows up as a jump the network has to learn.
pub fn train_s2r(real: &Dataset, split: &Split, smap: &PosePredictor, cfg: &TrainConfig) -> Result<S2rNets> {
    let raw_pred = |idx: &[usize]| smap.smap.predict_batch(&real.inputs(idx, smap.channels));
    let targets = |idx: &[usize], raw: &DMatrix<f64>| {
        let mut t = real.poses(idx);
        for c in 0..t.ncols() {
            for r in 3..6 {
                t[(r, c)] = raw[(r, c)] + wrap_deg(t[(r, c)] - raw[(r, c)]);
            }
        }
        t
    };
    let raw_train = raw_pred(&split.train)?;
    let raw_val = raw_pred(&split.val)?;
    let y_train = targets(&split.train, &raw_train);
    let y_val = targets(&split.val, &raw_val);

    let fit = |rows: usize, seed_offset: u64| -> Result<(Mlp, TrainHistory)> {
        let cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(seed_offset),
            ..cfg.clone()
        };
        let mut net = Mlp::new(&s2r_widths(), cfg.seed)?;
        let h = train(
            &mut net,
            &raw_train.rows(rows, 3).into_owned(),
            &y_train.rows(rows, 3).into_owned(),
            &raw_val.rows(rows, 3).into_owned(),
            &y_val.rows(rows, 3).into_owned(),
            &cfg,
        )?;
        Ok((net, h))
    };
    let (t, history_t) = fit(0, 0)?;
    let (r, history_r) = fit(3, 1)?;
    Ok(S2rNets {
        t,
        r,
        history_t,
        history_r,
    })
}

/// Trains on the selected channels and evaluates on the shared test split.
pub fn ablation(
    data: &Dataset,
    split: &Split,
    channels: SensorChannels,
    cfg: &TrainConfig,
) -> Result<(PosePredictor, EvalReport)> {
    let (pred, _) = train_smap(data, split, channels, cfg)?;
    let report = evaluate(&pred, data, &split.test)?;
    Ok((pred, report))
}

/// Fresh random samples on the rig under each payload, evaluated with `pred`.
pub fn load_robustness(
    pred: &PosePredictor,
    rig: &Rig,
    loads: &[f64],
    n_per_load: usize,
    seed: u64,
) -> Result<Vec<(f64, Metrics)>> {
    loads
        .iter()
        .map(|&g| {
            // same pressure draws at every load
            let data = rig.random_dataset(n_per_load, &LoadSpec::with_payload(g), seed, rig_provenance(rig))?;
            let idx: Vec<usize> = (0..data.len()).collect();
            Ok((g, evaluate(pred, &data, &idx)?.overall))
        })
        .collect()
}

fn rig_provenance(rig: &Rig) -> Provenance {
    if rig.gap.is_some() {
        Provenance::VirtualReal
    } else {
        Provenance::Sim
    }
}
