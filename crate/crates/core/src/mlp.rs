//! Fully connected regression network trained with minibatch SGD.
//!
//! Hidden layers use Leaky ReLU; the output layer is affine. The loss is the
//! mean squared error over every entry of a batch, and its gradient is
//! computed by hand-written reverse accumulation.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("invalid layer dims {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("leak must lie in (0, 1), got {0}")]
    InvalidLeak(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRecord", into = "MlpRecord")]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    leak: f64,
    /// `weights[l]` maps layer `l` to layer `l + 1`; shape `(out, in)`.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Serialized form: each weight matrix flattened row-major (`out × in`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpRecord {
    pub layer_dims: Vec<usize>,
    pub leak: f64,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<MlpModel> for MlpRecord {
    fn from(m: MlpModel) -> Self {
        MlpRecord {
            weights: m
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
            layer_dims: m.layer_dims,
            leak: m.leak,
        }
    }
}

impl TryFrom<MlpRecord> for MlpModel {
    type Error = MlpError;
    fn try_from(r: MlpRecord) -> Result<Self, Self::Error> {
        let bad = || MlpError::InvalidDims(r.layer_dims.clone());
        if r.layer_dims.len() < 2 || r.weights.len() + 1 != r.layer_dims.len() {
            return Err(bad());
        }
        let mut weights = Vec::with_capacity(r.weights.len());
        for (l, w) in r.weights.iter().enumerate() {
            let shape = (r.layer_dims[l + 1], r.layer_dims[l]);
            weights.push(Array2::from_shape_vec(shape, w.clone()).map_err(|_| bad())?);
        }
        let biases = r.biases.iter().map(|b| Array1::from(b.clone())).collect();
        let model = MlpModel::from_parts(weights, biases, r.leak)?;
        if model.layer_dims != r.layer_dims {
            return Err(bad());
        }
        Ok(model)
    }
}

pub fn init_model(layer_dims: &[usize], leak: f64, seed: u64) -> Result<MlpModel, MlpError> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(MlpError::InvalidDims(layer_dims.to_vec()));
    }
    if !(leak > 0.0 && leak < 1.0) {
        return Err(MlpError::InvalidLeak(leak));
    }
    let mut rng = seeds::stream_rng(seed, seeds::INIT);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for pair in layer_dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let w =
            Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..=bound));
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
    }
    Ok(MlpModel {
        layer_dims: layer_dims.to_vec(),
        leak,
        weights,
        biases,
    })
}

/// Per-layer gradients, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpModel {
    /// Builds a model from explicit parameters.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        leak: f64,
    ) -> Result<MlpModel, MlpError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(MlpError::InvalidDims(vec![]));
        }
        if !(leak > 0.0 && leak < 1.0) {
            return Err(MlpError::InvalidLeak(leak));
        }
        let mut dims = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.ncols() != *dims.last().unwrap() || w.nrows() != b.len() || w.nrows() == 0 {
                return Err(MlpError::InvalidDims(dims));
            }
            dims.push(w.nrows());
        }
        Ok(MlpModel {
            layer_dims: dims,
            leak,
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn leak(&self) -> f64 {
        self.leak
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn check_input(&self, cols: usize) -> Result<(), MlpError> {
        if cols != self.input_dim() {
            return Err(MlpError::DimensionMismatch {
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    fn activate(&self, z: &mut Array2<f64>) {
        let leak = self.leak;
        z.mapv_inplace(|v| if v > 0.0 { v } else { leak * v });
    }

    /// Forward pass for a batch laid out one sample per row.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, MlpError> {
        self.check_input(x.ncols())?;
        let last = self.weights.len() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&w.t()) + b;
            if l < last {
                self.activate(&mut z);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("contiguous slice");
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Batch MSE and its exact gradient with respect to every parameter.
    pub fn gradients(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
    ) -> Result<(f64, Gradients), MlpError> {
        self.check_input(x.ncols())?;
        if x.nrows() == 0 {
            return Err(MlpError::EmptyInput);
        }
        if y.dim() != (x.nrows(), self.output_dim()) {
            return Err(MlpError::DimensionMismatch {
                expected: x.nrows() * self.output_dim(),
                got: y.len(),
            });
        }
        let n_layers = self.weights.len();
        // activations[l] is the input to layer l; pre[l] its affine output
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        activations.push(x.to_owned());
        for l in 0..n_layers {
            let z = activations[l].dot(&self.weights[l].t()) + &self.biases[l];
            let mut a = z.clone();
            if l + 1 < n_layers {
                self.activate(&mut a);
            }
            pre.push(z);
            activations.push(a);
        }

        let residual = &activations[n_layers] - &y;
        let n = residual.len() as f64;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / n;
        let mut delta = residual * (2.0 / n);

        let mut gw = vec![Array2::zeros((0, 0)); n_layers];
        let mut gb = vec![Array1::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            gw[l] = delta.t().dot(&activations[l]);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                let leak = self.leak;
                Zip::from(&mut back).and(&pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d *= leak;
                    }
                });
                delta = back;
            }
        }
        Ok((
            loss,
            Gradients {
                weights: gw,
                biases: gb,
            },
        ))
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-lr, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-lr, g);
        }
    }
}

pub fn loss_mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MlpError> {
    if y_true.is_empty() {
        return Err(MlpError::EmptyInput);
    }
    if y_true.len() != y_pred.len() {
        return Err(MlpError::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 64,
            epochs: 600,
            seed: 1,
        }
    }
}

/// One row of the training history. Losses are in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// sample-weighted mean of the minibatch losses seen during the epoch
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_mse: Option<f64>,
}

impl TrainTrace {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Trace as CSV with header `epoch,train_mse,val_mse,val_mae`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,val_mse,val_mae\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch,
                r.train_mse,
                opt(r.val_mse),
                opt(r.val_mae)
            ));
        }
        out
    }
}

/// Mean squared and mean absolute error of `model` over a dataset.
pub fn evaluate(
    model: &MlpModel,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Result<(f64, f64), MlpError> {
    if x.nrows() == 0 {
        return Err(MlpError::EmptyInput);
    }
    let pred = model.forward_batch(x)?;
    if pred.dim() != y.dim() {
        return Err(MlpError::DimensionMismatch {
            expected: pred.len(),
            got: y.len(),
        });
    }
    let diff = pred - y;
    let n = diff.len() as f64;
    Ok((
        diff.iter().map(|d| d * d).sum::<f64>() / n,
        diff.iter().map(|d| d.abs()).sum::<f64>() / n,
    ))
}

fn gather(m: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    m.select(Axis(0), idx)
}

/// Minibatch SGD. Returns the final-epoch model and the per-epoch history.
pub fn train(
    mut model: MlpModel,
    train_x: ArrayView2<f64>,
    train_y: ArrayView2<f64>,
    val_x: ArrayView2<f64>,
    val_y: ArrayView2<f64>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(MlpModel, TrainTrace), MlpError> {
    if !(cfg.learning_rate >= 0.0) || cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(MlpError::InvalidConfig(format!("{cfg:?}")));
    }
    let n = train_x.nrows();
    if n == 0 {
        return Err(MlpError::EmptyInput);
    }
    if train_y.nrows() != n || val_x.nrows() != val_y.nrows() {
        return Err(MlpError::DimensionMismatch {
            expected: n,
            got: train_y.nrows(),
        });
    }
    let mut rng = seeds::stream_rng(cfg.seed, seeds::SHUFFLE);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = TrainTrace::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let bx = gather(&train_x, batch);
            let by = gather(&train_y, batch);
            let (loss, grads) = model.gradients(bx.view(), by.view())?;
            if !loss.is_finite() {
                return Err(MlpError::DivergedLoss { epoch });
            }
            total += loss * batch.len() as f64;
            model.apply(&grads, cfg.learning_rate);
        }
        let (val_mse, val_mae) = if val_x.nrows() > 0 {
            let (mse, mae) = evaluate(&model, val_x, val_y)?;
            if !mse.is_finite() {
                return Err(MlpError::DivergedLoss { epoch });
            }
            (Some(mse), Some(mae))
        } else {
            (None, None)
        };
        let record = EpochRecord {
            epoch,
            train_mse: total / n as f64,
            val_mse,
            val_mae,
        };
        if let Some(v) = val_mse {
            if trace.best_val_mse.is_none_or(|b| v < b) {
                trace.best_val_mse = Some(v);
                trace.best_epoch = Some(epoch);
            }
        }
        on_epoch(&record);
        trace.records.push(record);
    }
    Ok((model, trace))
}

/// Row-major `rows × cols` matrix from a sequence of equal-length rows.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, cols: usize) -> Array2<f64> {
    let flat: Vec<f64> = rows.into_iter().flatten().copied().collect();
    let n = flat.len() / cols.max(1);
    Array2::from_shape_vec((n, cols), flat).expect("rows share a length")
}

/// Column slice `[range]` of `m`, as an owned matrix.
pub fn columns(m: &Array2<f64>, range: std::ops::Range<usize>) -> Array2<f64> {
    m.slice(s![.., range]).to_owned()
}
