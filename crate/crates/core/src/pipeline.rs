//! Training and inference for a full model: a sketched basis plus a network
//! predicting coordinates in it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{fit_basis, SketchedBasis, DEFAULT_RANK_TOL};
use crate::decode::{decode_batch, CandidateSet, DecodeRecord};
use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::output::StructuredOutput;
use crate::regressor::{train, Activation, MlpRegressor, TrainConfig, TrainHistory};
use crate::sketch::SketchMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Hidden layer widths; empty for a single-layer perceptron.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden: Vec::new(), activation: Activation::Relu, seed: 0 }
    }
}

impl NetConfig {
    pub fn layer_dims(&self, d_in: usize, d_out: usize) -> Vec<usize> {
        let mut dims = vec![d_in];
        dims.extend(&self.hidden);
        dims.push(d_out);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DsokrModel {
    pub basis: SketchedBasis,
    pub net: MlpRegressor,
}

/// Fits the basis on the training outputs, then trains the network on
/// `ψ̃` targets with early stopping on the validation pairs.
#[allow(clippy::too_many_arguments)]
pub fn fit_dsokr(
    kernel: &KernelSpec,
    sketch: &SketchMatrix,
    xs: &DMatrix<f64>,
    ys: &[StructuredOutput],
    val: Option<(&DMatrix<f64>, &[StructuredOutput])>,
    net: &NetConfig,
    cfg: &TrainConfig,
) -> Result<(DsokrModel, TrainHistory)> {
    let basis = fit_basis(kernel, ys, sketch, DEFAULT_RANK_TOL)?;
    let targets = basis.feature_matrix(ys)?;
    let val_targets = val.map(|(_, vy)| basis.feature_matrix(vy)).transpose()?;
    let model = MlpRegressor::init(&net.layer_dims(xs.ncols(), basis.rank()), net.activation, net.seed)?;
    let validation = val.zip(val_targets.as_ref()).map(|((vx, _), vt)| (vx, vt));
    let (net, history) = train(&model, xs, &targets, validation, cfg)?;
    Ok((DsokrModel { basis, net }, history))
}

impl DsokrModel {
    /// Predicted coefficients, one row per input.
    pub fn coefficients(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.net.predict(xs)
    }

    /// Output-space predictions for a linear output kernel.
    pub fn predict_linear(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.basis.reconstruct_linear_rows(&self.coefficients(xs)?)
    }

    pub fn decode(&self, xs: &DMatrix<f64>, cands: &CandidateSet, truth: Option<&[usize]>) -> Result<Vec<DecodeRecord>> {
        decode_batch(&self.coefficients(xs)?, cands, truth)
    }
}
