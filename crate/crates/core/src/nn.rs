//! Dense feed-forward networks: tanh hidden layers, linear output, z-score
//! normalisation on both ends, exact input gradients and Adam training.
//!
//! Batches are stored column-wise: one column per sample.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;
const MIN_STD: f64 = 1e-9;

/// Per-feature z-score transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits mean and population standard deviation over the columns of `data`.
    pub fn fit(data: &DMatrix<f64>) -> Result<Self> {
        let n = data.ncols();
        if n == 0 {
            return Err(Error::Empty("normalizer data"));
        }
        let mut mean = vec![0.0; data.nrows()];
        let mut std = vec![0.0; data.nrows()];
        for r in 0..data.nrows() {
            let row = data.row(r);
            let m = row.sum() / n as f64;
            let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            mean[r] = m;
            std[r] = if s < MIN_STD { 1.0 } else { s };
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_matrix(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = (*v - self.mean[r]) / self.std[r];
            }
        }
        out
    }

    pub fn denormalize_matrix(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = *v * self.std[r] + self.mean[r];
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Dimension {
                expected: self.mean.len(),
                actual: self.std.len(),
            });
        }
        if self.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("normalizer needs finite mean and positive std".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out x in
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Multi-layer perceptron with tanh hidden units and identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    norm_in: Normalizer,
    norm_out: Normalizer,
}

impl Mlp {
    /// Symmetric uniform init in +-sqrt(6/(fan_in+fan_out)), zero biases.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-limit..=limit)),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            norm_in: Normalizer::identity(widths[0]),
            norm_out: Normalizer::identity(widths[widths.len() - 1]),
        })
    }

    pub fn from_parts(layers: Vec<Layer>, norm_in: Normalizer, norm_out: Normalizer) -> Result<Self> {
        let net = Self {
            layers,
            norm_in,
            norm_out,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let first = self.layers.first().ok_or(Error::Empty("layer list"))?;
        let mut width = first.weights.ncols();
        for l in &self.layers {
            if l.weights.ncols() != width {
                return Err(Error::Dimension {
                    expected: width,
                    actual: l.weights.ncols(),
                });
            }
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::Dimension {
                    expected: l.weights.nrows(),
                    actual: l.bias.len(),
                });
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite weight".into()));
            }
            width = l.weights.nrows();
        }
        self.norm_in.validate()?;
        self.norm_out.validate()?;
        if self.norm_in.dim() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: self.norm_in.dim(),
            });
        }
        if self.norm_out.dim() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                actual: self.norm_out.dim(),
            });
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_normalizer(&self) -> &Normalizer {
        &self.norm_in
    }

    pub fn output_normalizer(&self) -> &Normalizer {
        &self.norm_out
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weights.nrows()))
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Refits both normalisers; `x` and `y` hold one sample per column.
    pub fn fit_normalizers(&mut self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
        self.check_batch(x, y)?;
        self.norm_in = Normalizer::fit(x)?;
        self.norm_out = Normalizer::fit(y)?;
        Ok(())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: len,
            });
        }
        Ok(())
    }

    fn check_batch(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
        self.check_input(x.nrows())?;
        if y.nrows() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                actual: y.nrows(),
            });
        }
        if x.ncols() != y.ncols() {
            return Err(Error::Dimension {
                expected: x.ncols(),
                actual: y.ncols(),
            });
        }
        Ok(())
    }

    /// Network output in normalised space plus every layer activation.
    fn forward_normalized(&self, xn: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(xn.clone());
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = &l.weights * &acts[k];
            for mut col in z.column_iter_mut() {
                col += &l.bias;
            }
            if k < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let xm = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.predict_batch(&xm)?.as_slice().to_vec())
    }

    /// Raw-space outputs for a batch with one sample per column.
    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x.nrows())?;
        let xn = self.norm_in.normalize_matrix(x);
        let out = self.forward_normalized(&xn).pop().expect("at least one layer");
        Ok(self.norm_out.denormalize_matrix(&out))
    }

    /// Gradient of `residual . f(x)` with respect to the raw input `x`.
    pub fn input_gradient(&self, x: &[f64], residual: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        if residual.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                actual: residual.len(),
            });
        }
        let xm = DMatrix::from_column_slice(x.len(), 1, x);
        let acts = self.forward_normalized(&self.norm_in.normalize_matrix(&xm));
        let mut delta = DVector::from_iterator(
            residual.len(),
            residual.iter().zip(&self.norm_out.std).map(|(r, s)| r * s),
        );
        for k in (0..self.layers.len()).rev() {
            delta = self.layers[k].weights.tr_mul(&delta);
            if k > 0 {
                for (d, a) in delta.iter_mut().zip(acts[k].iter()) {
                    *d *= 1.0 - a * a;
                }
            }
        }
        Ok(delta.iter().zip(&self.norm_in.std).map(|(d, s)| d / s).collect())
    }

    /// Full Jacobian of the raw output with respect to the raw input (out x in).
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.output_dim();
        let mut jac = DMatrix::zeros(m, self.input_dim());
        let mut e = vec![0.0; m];
        for i in 0..m {
            e[i] = 1.0;
            let g = self.input_gradient(x, &e)?;
            jac.row_mut(i).copy_from(&DVector::from_vec(g).transpose());
            e[i] = 0.0;
        }
        Ok(jac)
    }

    /// Mean squared error in normalised output space.
    pub fn normalized_mse(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        self.check_batch(x, y)?;
        let xn = self.norm_in.normalize_matrix(x);
        let yn = self.norm_out.normalize_matrix(y);
        Ok(self.mse_on_normalized(&xn, &yn))
    }

    fn mse_on_normalized(&self, xn: &DMatrix<f64>, yn: &DMatrix<f64>) -> f64 {
        let out = self.forward_normalized(xn).pop().expect("at least one layer");
        (out - yn).norm_squared() / yn.len() as f64
    }

    /// Loss and parameter gradients on a normalised batch.
    fn backprop(&self, xn: &DMatrix<f64>, yn: &DMatrix<f64>) -> (f64, Vec<Layer>) {
        let acts = self.forward_normalized(xn);
        let out = &acts[acts.len() - 1];
        let diff = out - yn;
        let loss = diff.norm_squared() / yn.len() as f64;
        let mut delta = diff * (2.0 / yn.len() as f64);
        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let gw = &delta * acts[k].transpose();
            let gb = delta.column_sum();
            if k > 0 {
                let mut next = self.layers[k].weights.tr_mul(&delta);
                next.zip_apply(&acts[k], |d, a| *d *= 1.0 - a * a);
                delta = next;
            }
            grads.push(Layer {
                weights: gw,
                bias: gb,
            });
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = WeightFile {
            version: WEIGHT_FORMAT_VERSION,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.transpose().as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
            activation: "tanh".into(),
            normalizer_in: self.norm_in.clone(),
            normalizer_out: self.norm_out.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| json_error(source_name, &e))?;
        let found = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::parse(source_name, 1, "missing integer `version`"))?;
        if found != u64::from(WEIGHT_FORMAT_VERSION) {
            return Err(Error::Version {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: WEIGHT_FORMAT_VERSION,
            });
        }
        // reparse from text so structural errors keep their position
        let doc: WeightFile = serde_json::from_str(text).map_err(|e| json_error(source_name, &e))?;
        if doc.activation != "tanh" {
            return Err(Error::Config(format!("unsupported activation `{}`", doc.activation)));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (k, l) in doc.layers.into_iter().enumerate() {
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(Error::Config(format!(
                    "layer {k}: {}x{} needs {} weights and {} biases, found {} and {}",
                    l.rows,
                    l.cols,
                    l.rows * l.cols,
                    l.rows,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
            layers.push(Layer {
                weights: DMatrix::from_row_slice(l.rows, l.cols, &l.weights),
                bias: DVector::from_vec(l.bias),
            });
        }
        Self::from_parts(layers, doc.normalizer_in, doc.normalizer_out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

fn json_error(source_name: &str, e: &serde_json::Error) -> Error {
    Error::parse(source_name, e.line(), format!("column {}: {e}", e.column()))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightFile {
    version: u32,
    layers: Vec<LayerRecord>,
    activation: String,
    normalizer_in: Normalizer,
    normalizer_out: Normalizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Learning-rate multiplier applied after `lr_decay_patience` stalled
    /// epochs; 1 disables the schedule.
    pub lr_decay: f64,
    pub lr_decay_patience: usize,
    pub min_learning_rate: f64,
    pub seed: u64,
    /// Refit normalisers on the training split before the first epoch.
    pub fit_normalizers: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 2000,
            patience: 50,
            lr_decay: 0.3,
            lr_decay_patience: 10,
            min_learning_rate: 1e-5,
            seed: 0,
            fit_normalizers: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("training needs lr > 0 and batch >= 1".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || !(self.min_learning_rate > 0.0) {
            return Err(Error::Config("lr decay must lie in (0, 1] with a positive floor".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam needs betas in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses (normalised MSE) and where the kept snapshot came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub final_learning_rate: f64,
}

struct AdamState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl AdamState {
    fn new(net: &Mlp) -> Self {
        let zeros: Vec<Layer> = net
            .layers
            .iter()
            .map(|l| Layer {
                weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                bias: DVector::zeros(l.bias.len()),
            })
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Mlp, grads: &[Layer], cfg: &TrainConfig, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + cfg.epsilon);
            }
        };
        for k in 0..net.layers.len() {
            update(
                net.layers[k].weights.as_mut_slice(),
                grads[k].weights.as_slice(),
                self.m[k].weights.as_mut_slice(),
                self.v[k].weights.as_mut_slice(),
            );
            update(
                net.layers[k].bias.as_mut_slice(),
                grads[k].bias.as_slice(),
                self.m[k].bias.as_mut_slice(),
                self.v[k].bias.as_mut_slice(),
            );
        }
    }
}

fn gather_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let rows = m.nrows();
    let mut data = Vec::with_capacity(rows * idx.len());
    for &i in idx {
        data.extend_from_slice(m.column(i).as_slice());
    }
    DMatrix::from_vec(rows, idx.len(), data)
}

/// Mini-batch Adam on normalised MSE; keeps the best-validation weights.
///
/// `x_*` and `y_*` hold one sample per column. With `max_epochs == 0` the
/// network is returned untouched.
pub fn train(
    net: &mut Mlp,
    x_train: &DMatrix<f64>,
    y_train: &DMatrix<f64>,
    x_val: &DMatrix<f64>,
    y_val: &DMatrix<f64>,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    net.check_batch(x_train, y_train)?;
    net.check_batch(x_val, y_val)?;
    if x_train.ncols() == 0 {
        return Err(Error::Empty("training split"));
    }
    if x_val.ncols() == 0 {
        return Err(Error::Empty("validation split"));
    }
    let mut history = TrainHistory {
        best_val_loss: f64::INFINITY,
        final_learning_rate: cfg.learning_rate,
        ..Default::default()
    };
    if cfg.max_epochs == 0 {
        return Ok(history);
    }
    if cfg.fit_normalizers {
        net.fit_normalizers(x_train, y_train)?;
    }
    let xt = net.norm_in.normalize_matrix(x_train);
    let yt = net.norm_out.normalize_matrix(y_train);
    let xv = net.norm_in.normalize_matrix(x_val);
    let yv = net.norm_out.normalize_matrix(y_val);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(net);
    let mut order: Vec<usize> = (0..xt.ncols()).collect();
    let mut best = net.clone();
    let mut since_best = 0;
    let mut stall = 0;
    let mut lr = cfg.learning_rate;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = gather_columns(&xt, chunk);
            let yb = gather_columns(&yt, chunk);
            let (loss, grads) = net.backprop(&xb, &yb);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    detail: format!("batch loss {loss} with {} samples", chunk.len()),
                });
            }
            adam.step(net, &grads, cfg, lr);
        }
        let train_loss = net.mse_on_normalized(&xt, &yt);
        let val_loss = net.mse_on_normalized(&xv, &yv);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                detail: format!("train loss {train_loss}, validation loss {val_loss}"),
            });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = Some(epoch);
            best.clone_from(net);
            since_best = 0;
            stall = 0;
        } else {
            since_best += 1;
            stall += 1;
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
            if stall >= cfg.lr_decay_patience && cfg.lr_decay < 1.0 && lr > cfg.min_learning_rate {
                lr = (lr * cfg.lr_decay).max(cfg.min_learning_rate);
                stall = 0;
            }
        }
    }
    history.final_learning_rate = lr;
    *net = best;
    Ok(history)
}
