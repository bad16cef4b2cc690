//! Fully connected regression network trained by minibatch Adam.
//!
//! The network maps inputs to basis coordinates; its last layer is affine
//! with no activation. A configuration with no hidden layer
//! (`layer_dims = [d_in, p]`) is a single-layer perceptron.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::random;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" | "none" => Ok(Activation::Identity),
            other => Err(invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelRecord", try_from = "ModelRecord")]
pub struct MlpRegressor {
    layer_dims: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
    seed: u64,
}

/// Per-layer gradients, same shapes as [`Layer`].
/// Input and pre-activation of one layer over a batch.
type LayerCache = (DMatrix<f64>, DMatrix<f64>);

pub type Gradients = Vec<Layer>;

impl MlpRegressor {
    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(invalid("a network needs at least an input and an output dimension"));
        }
        if layer_dims.contains(&0) {
            return Err(invalid(format!("layer dimensions must be positive: {layer_dims:?}")));
        }
        let mut rng = random::rng(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data: Vec<f64> =
                    (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
                Layer {
                    weights: DMatrix::from_row_slice(fan_out, fan_in, &data),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(MlpRegressor { layer_dims: layer_dims.to_vec(), activation, layers, seed })
    }

    /// Builds a network from explicit layers.
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        let first = layers.first().ok_or_else(|| invalid("a network needs at least one layer"))?;
        let mut dims = vec![first.weights.ncols()];
        for l in &layers {
            if l.weights.ncols() != *dims.last().expect("nonempty") {
                return Err(Error::DimensionMismatch {
                    expected: *dims.last().expect("nonempty"),
                    found: l.weights.ncols(),
                });
            }
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::DimensionMismatch { expected: l.weights.nrows(), found: l.bias.len() });
            }
            dims.push(l.weights.nrows());
        }
        Ok(MlpRegressor { layer_dims: dims, activation, layers, seed: 0 })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &l.weights * &a + &l.bias;
            if i < last {
                z.apply(|v| *v = self.activation.apply(*v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Batch forward pass; rows of `xs` are samples.
    pub fn predict(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: xs.ncols() });
        }
        let (out, _) = self.forward_cached(xs);
        Ok(out)
    }

    /// Returns the network output and the pre-activations of every layer.
    fn forward_cached(&self, xs: &DMatrix<f64>) -> (DMatrix<f64>, Vec<LayerCache>) {
        let last = self.layers.len() - 1;
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut a = xs.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = &a * l.weights.transpose();
            for mut row in z.row_iter_mut() {
                row += l.bias.transpose();
            }
            let next = if i < last { z.map(|v| self.activation.apply(v)) } else { z.clone() };
            cache.push((a, z));
            a = next;
        }
        (a, cache)
    }

    /// Mean squared error (averaged over rows and output coordinates) and
    /// its gradient with respect to every weight and bias.
    pub fn loss_and_gradients(
        &self,
        xs: &DMatrix<f64>,
        targets: &DMatrix<f64>,
    ) -> Result<(f64, Gradients)> {
        self.check_shapes(xs, targets)?;
        let (out, cache) = self.forward_cached(xs);
        let diff = out - targets;
        let denom = (diff.nrows() * diff.ncols()).max(1) as f64;
        let loss = diff.norm_squared() / denom;
        let mut delta = diff * (2.0 / denom);
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, (l, (a_prev, z))) in self.layers.iter().zip(&cache).enumerate().rev() {
            if i < last {
                delta.zip_apply(z, |d, zv| *d *= self.activation.derivative(zv));
            }
            let gw = delta.transpose() * a_prev;
            let gb = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            let next_delta = &delta * &l.weights;
            grads.push(Layer { weights: gw, bias: gb });
            delta = next_delta;
        }
        grads.reverse();
        Ok((loss, grads))
    }

    /// Mean squared error averaged over rows and output coordinates.
    pub fn mse(&self, xs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
        self.check_shapes(xs, targets)?;
        let out = self.predict(xs)?;
        let denom = (out.nrows() * out.ncols()).max(1) as f64;
        Ok((out - targets).norm_squared() / denom)
    }

    fn check_shapes(&self, xs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<()> {
        if xs.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: xs.ncols() });
        }
        if targets.ncols() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), found: targets.ncols() });
        }
        if targets.nrows() != xs.nrows() {
            return Err(Error::DimensionMismatch { expected: xs.nrows(), found: targets.nrows() });
        }
        Ok(())
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning rate", self.learning_rate)?;
        positive("epsilon", self.epsilon)?;
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(invalid("batch size, epoch count and patience must be positive"));
        }
        if self.patience > self.max_epochs {
            return Err(invalid(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(invalid(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    /// CSV with header `epoch,train_mse,val_mse`; `val_mse` is empty when
    /// no validation set was given.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_mse,val_mse")?;
        for r in &self.epochs {
            match r.val_mse {
                Some(v) => writeln!(w, "{},{:e},{:e}", r.epoch, r.train_mse, v)?,
                None => writeln!(w, "{},{:e},", r.epoch, r.train_mse)?,
            }
        }
        Ok(())
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == self.best_epoch)
    }
}

struct AdamState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl AdamState {
    fn new(model: &MlpRegressor) -> Self {
        let zeros: Vec<Layer> = model
            .layers
            .iter()
            .map(|l| Layer {
                weights: DMatrix::zeros(l.weights.nrows(), l.weights.ncols()),
                bias: DVector::zeros(l.bias.len()),
            })
            .collect();
        AdamState { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, model: &mut MlpRegressor, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        };
        for (((layer, m), v), g) in
            model.layers.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(grads)
        {
            update(
                layer.weights.as_mut_slice(),
                m.weights.as_mut_slice(),
                v.weights.as_mut_slice(),
                g.weights.as_slice(),
            );
            update(layer.bias.as_mut_slice(), m.bias.as_mut_slice(), v.bias.as_mut_slice(), g.bias.as_slice());
        }
    }
}

/// Trains `model` with minibatch Adam on the mean squared error.
///
/// Each epoch visits the training rows in a fresh seeded shuffle. After
/// every epoch the train and validation MSE are recorded; the returned model
/// is the snapshot with the lowest validation MSE (training MSE when no
/// validation set is given), and training stops once `patience` epochs pass
/// without improvement.
pub fn train(
    model: &MlpRegressor,
    xs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    validation: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    cfg: &TrainConfig,
) -> Result<(MlpRegressor, TrainHistory)> {
    cfg.validate()?;
    model.check_shapes(xs, targets)?;
    if let Some((vx, vt)) = validation {
        model.check_shapes(vx, vt)?;
    }
    let n = xs.nrows();
    if n == 0 {
        return Err(invalid("training set is empty"));
    }
    let mut rng = random::rng(cfg.seed);
    let mut current = model.clone();
    let mut adam = AdamState::new(&current);
    let mut best = (f64::INFINITY, current.clone());
    let mut history = TrainHistory::default();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..n).collect();
    let full_batch = cfg.batch_size >= n;

    for epoch in 1..=cfg.max_epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            let (bx, bt) = if full_batch {
                (xs.clone(), targets.clone())
            } else {
                (xs.select_rows(chunk), targets.select_rows(chunk))
            };
            let (loss, grads) = current.loss_and_gradients(&bx, &bt)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss_kind: "minibatch", value: loss });
            }
            adam.step(&mut current, &grads, cfg);
        }
        let train_mse = current.mse(xs, targets)?;
        if !train_mse.is_finite() {
            return Err(Error::Divergence { epoch, loss_kind: "training", value: train_mse });
        }
        let val_mse = match validation {
            Some((vx, vt)) if vx.nrows() > 0 => {
                let v = current.mse(vx, vt)?;
                if !v.is_finite() {
                    return Err(Error::Divergence { epoch, loss_kind: "validation", value: v });
                }
                Some(v)
            }
            _ => None,
        };
        history.epochs.push(EpochRecord { epoch, train_mse, val_mse });
        let score = val_mse.unwrap_or(train_mse);
        if score < best.0 {
            best = (score, current.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, history))
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    /// Row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    layer_dims: Vec<usize>,
    activation: Activation,
    seed: u64,
    layers: Vec<LayerRecord>,
}

impl From<MlpRegressor> for ModelRecord {
    fn from(m: MlpRegressor) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|l| LayerRecord {
                rows: l.weights.nrows(),
                cols: l.weights.ncols(),
                weights: l.weights.transpose().as_slice().to_vec(),
                bias: l.bias.as_slice().to_vec(),
            })
            .collect();
        ModelRecord { layer_dims: m.layer_dims, activation: m.activation, seed: m.seed, layers }
    }
}

impl TryFrom<ModelRecord> for MlpRegressor {
    type Error = Error;

    fn try_from(rec: ModelRecord) -> Result<Self> {
        let layers = rec
            .layers
            .into_iter()
            .map(|l| {
                if l.weights.len() != l.rows * l.cols {
                    return Err(Error::DimensionMismatch { expected: l.rows * l.cols, found: l.weights.len() });
                }
                Ok(Layer {
                    weights: DMatrix::from_row_slice(l.rows, l.cols, &l.weights),
                    bias: DVector::from_vec(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = MlpRegressor::from_layers(layers, rec.activation)?;
        if model.layer_dims != rec.layer_dims {
            return Err(invalid(format!(
                "checkpoint declares dims {:?} but its layers have {:?}",
                rec.layer_dims, model.layer_dims
            )));
        }
        model.seed = rec.seed;
        Ok(model)
    }
}
