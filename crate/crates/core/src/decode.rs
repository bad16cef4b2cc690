//! Candidate-set pre-image.
//!
//! For a normalized output kernel, minimizing `‖z - ψ̃(y)‖²`-type losses over
//! candidates reduces to maximizing `zᵀψ̃(y)`. Bases built on kernels without
//! a unit diagonal are refused unless explicitly allowed, in which case the
//! score is `2 zᵀψ̃(y) - k(y, y)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::SketchedBasis;
use crate::error::{Error, Result};
use crate::kernels;
use crate::metrics;
use crate::output::StructuredOutput;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    outputs: Vec<StructuredOutput>,
    /// `n_c × p`, row `i` is `ψ̃(outputs[i])`.
    features: DMatrix<f64>,
    /// `k(y, y)` per candidate when decoding with an unnormalized kernel.
    self_kernel: Option<Vec<f64>>,
}

impl CandidateSet {
    pub fn new(basis: &SketchedBasis, outputs: Vec<StructuredOutput>) -> Result<Self> {
        Self::build(basis, outputs, false)
    }

    /// Accepts bases whose kernel lacks a unit diagonal.
    pub fn new_allow_unnormalized(basis: &SketchedBasis, outputs: Vec<StructuredOutput>) -> Result<Self> {
        Self::build(basis, outputs, true)
    }

    fn build(basis: &SketchedBasis, outputs: Vec<StructuredOutput>, allow: bool) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let normalized = basis.kernel().has_unit_diagonal();
        if !normalized && !allow {
            return Err(Error::UnnormalizedKernel);
        }
        let features = basis.feature_matrix(&outputs)?;
        let self_kernel =
            if normalized { None } else { Some(kernels::diagonal(basis.kernel(), &outputs)?) };
        Ok(CandidateSet { outputs, features, self_kernel })
    }

    /// Candidate set from precomputed features; `self_kernel = None` means
    /// the kernel is normalized.
    pub fn from_features(
        outputs: Vec<StructuredOutput>,
        features: DMatrix<f64>,
        self_kernel: Option<Vec<f64>>,
    ) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if features.nrows() != outputs.len() {
            return Err(Error::DimensionMismatch { expected: outputs.len(), found: features.nrows() });
        }
        if let Some(d) = &self_kernel {
            if d.len() != outputs.len() {
                return Err(Error::DimensionMismatch { expected: outputs.len(), found: d.len() });
            }
        }
        Ok(CandidateSet { outputs, features, self_kernel })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn outputs(&self) -> &[StructuredOutput] {
        &self.outputs
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Score of every candidate; higher is better.
    pub fn scores(&self, z: &DVector<f64>) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: z.len() });
        }
        let inner = &self.features * z;
        Ok(match &self.self_kernel {
            None => inner.iter().copied().collect(),
            Some(d) => inner.iter().zip(d).map(|(s, k)| 2.0 * s - k).collect(),
        })
    }

    /// `N × n_c` scores for the rows of `z`.
    pub fn score_matrix(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: z.ncols() });
        }
        let mut s = z * self.features.transpose();
        if let Some(d) = &self.self_kernel {
            for (j, mut col) in s.column_iter_mut().enumerate() {
                col.apply(|v| *v = 2.0 * *v - d[j]);
            }
        }
        Ok(s)
    }
}

/// Index of the best candidate (lowest index on ties) and its score.
pub fn decode(z: &DVector<f64>, cands: &CandidateSet) -> Result<(usize, f64)> {
    Ok(argmax(&cands.scores(z)?))
}

/// Candidate indices by descending score, stable on ties.
pub fn rank_candidates(z: &DVector<f64>, cands: &CandidateSet) -> Result<Vec<usize>> {
    Ok(descending_order(&cands.scores(z)?))
}

pub(crate) fn argmax(scores: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    (best, scores[best])
}

pub(crate) fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeRecord {
    pub test_id: usize,
    pub predicted: usize,
    pub score: f64,
    pub rank_of_true: Option<usize>,
}

/// Decodes every row of `z`. With `truth`, also records the pessimistic rank
/// of each true candidate.
pub fn decode_batch(
    z: &DMatrix<f64>,
    cands: &CandidateSet,
    truth: Option<&[usize]>,
) -> Result<Vec<DecodeRecord>> {
    if let Some(t) = truth {
        if t.len() != z.nrows() {
            return Err(Error::DimensionMismatch { expected: z.nrows(), found: t.len() });
        }
    }
    let scores = cands.score_matrix(z)?;
    (0..z.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = scores.row(i).iter().copied().collect();
            let (predicted, score) = argmax(&row);
            let rank_of_true = truth.map(|t| metrics::rank_of_truth(&row, t[i])).transpose()?;
            Ok(DecodeRecord { test_id: i, predicted, score, rank_of_true })
        })
        .collect()
}

/// CSV with header `test_id,predicted_candidate_id,score,rank_of_true`.
pub fn write_decode_csv<W: Write>(records: &[DecodeRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["test_id", "predicted_candidate_id", "score", "rank_of_true"])?;
    for r in records {
        out.write_record([
            r.test_id.to_string(),
            r.predicted.to_string(),
            format!("{:e}", r.score),
            r.rank_of_true.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
