//! Sketch-size selection.
//!
//! Two tools: approximate ridge leverage scores of the output Gram matrix,
//! whose sorted curve shows the effective dimension of the outputs, and the
//! "Perfect h" sweep, which scores each candidate sketch size with the
//! oracle predictor `h(x) = ψ̃(y)` on validation data.
//!
//! The leverage estimator is the Nyström form. With `S` a uniform sample of
//! `n_s` indices, `D = diag(1/√(n_s p_j))` (`p_j = 1/n`) and the
//! eigendecomposition `D K_SS D = V Λ Vᵀ` restricted to `Λ > 0`,
//!
//! ```text
//! B = K_{:,S} D V Λ^{-1/2},    ℓ_i = b_iᵀ (BᵀB + nλ I)^{-1} b_i
//! ```
//!
//! `B Bᵀ` is the Nyström approximation of `K`, so `n_s = n` recovers the
//! exact scores `diag(K (K + nλI)^{-1})`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{fit_basis_with_gram, DEFAULT_RANK_TOL};
use crate::decode::CandidateSet;
use crate::error::{invalid, Error, Result};
use crate::kernels::{self, GramMatrix, KernelSpec};
use crate::linalg::sorted_symmetric_eigen;
use crate::metrics;
use crate::output::StructuredOutput;
use crate::random;
use crate::sketch::{SketchKind, SketchMatrix};

pub const DEFAULT_REPLICATES: usize = 5;
pub const DEFAULT_SUGGEST_TOL: f64 = 0.05;

/// Eigenvalues of `D K_SS D` below this fraction of the largest are dropped.
const NYSTROM_RANK_TOL: f64 = 1e-12;

/// Approximate ridge leverage scores, sorted descending.
pub fn approximate_leverage_scores(
    kernel: &KernelSpec,
    ys: &[StructuredOutput],
    lambda: f64,
    n_s: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let k = kernels::gram(kernel, ys)?;
    leverage_scores_from_gram(&k, lambda, n_s, seed)
}

pub fn leverage_scores_from_gram(k: &GramMatrix, lambda: f64, n_s: usize, seed: u64) -> Result<Vec<f64>> {
    let n = k.n();
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("ridge penalty must be positive, got {lambda}")));
    }
    if n_s == 0 || n_s > n {
        return Err(invalid(format!("sample size n_s must lie in 1..={n}, got {n_s}")));
    }
    let mut sample: Vec<usize> = if n_s == n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut random::rng(seed), n, n_s).into_vec()
    };
    sample.sort_unstable();
    // uniform p_j = 1/n
    let d = (n as f64 / n_s as f64).sqrt();
    let k = k.matrix();
    let k_cols = k.select_columns(&sample);
    let w = k_cols.select_rows(&sample) * (d * d);
    let (values, vectors) = sorted_symmetric_eigen(w);
    let top = values.first().copied().unwrap_or(0.0);
    let r = values.iter().take_while(|&&v| v > NYSTROM_RANK_TOL * top && v > 0.0).count();
    if r == 0 {
        return Ok(vec![0.0; n]);
    }
    let mut proj = vectors.columns(0, r).into_owned();
    for (j, &v) in values[..r].iter().enumerate() {
        proj.column_mut(j).scale_mut(d / v.sqrt());
    }
    let b = k_cols * proj;
    let mut inner = b.tr_mul(&b);
    for i in 0..r {
        inner[(i, i)] += n as f64 * lambda;
    }
    let chol = inner
        .cholesky()
        .ok_or_else(|| Error::DegenerateInput("leverage inner system is not positive definite".into()))?;
    let solved = chol.solve(&b.transpose());
    let mut scores: Vec<f64> =
        (0..n).map(|i| b.row(i).iter().zip(solved.column(i).iter()).map(|(x, y)| x * y).sum()).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepTask {
    /// MSE of the linear reconstruction; needs an unnormalized linear kernel.
    LinearMse,
    /// MRR of decoding `ψ̃(y_true)` among `candidates`; `truth[i]` is the
    /// candidate index of validation output `i`.
    CandidateRanking { candidates: Vec<StructuredOutput>, truth: Vec<usize> },
}

impl SweepTask {
    pub fn higher_is_better(&self) -> bool {
        matches!(self, SweepTask::CandidateRanking { .. })
    }

    pub fn metric_name(&self) -> &'static str {
        match self {
            SweepTask::LinearMse => "mse",
            SweepTask::CandidateRanking { .. } => "mrr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub mean: f64,
    /// Sample standard deviation across replicates (0 for one replicate).
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub metric: String,
    pub higher_is_better: bool,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// CSV with header `m,replicate,<metric>`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "m,replicate,{}", self.metric)?;
        for row in &self.rows {
            for (r, v) in row.values.iter().enumerate() {
                writeln!(w, "{},{},{:e}", row.m, r, v)?;
            }
        }
        Ok(())
    }

    pub fn row(&self, m: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.m == m)
    }
}

/// Perfect-h sweep over sketch sizes `ms` (ascending).
///
/// Replicate `r` uses seed `substream(seed, r)`. For sub-sampling, every
/// replicate draws one random permutation and each `m` takes its first `m`
/// indices, so samples are nested across `m`.
#[allow(clippy::too_many_arguments)]
pub fn perfect_h_sweep(
    kernel: &KernelSpec,
    ys_train: &[StructuredOutput],
    val: &[StructuredOutput],
    ms: &[usize],
    sketch_kind: SketchKind,
    seed: u64,
    replicates: usize,
    task: &SweepTask,
) -> Result<SweepTable> {
    let n = ys_train.len();
    if ms.is_empty() {
        return Err(invalid("no sketch sizes given"));
    }
    if ms.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid(format!("sketch sizes must be strictly ascending, got {ms:?}")));
    }
    if ms[0] == 0 {
        return Err(invalid("sketch size m must be at least 1"));
    }
    if sketch_kind.is_subsampling() && *ms.last().expect("nonempty") > n {
        return Err(invalid(format!(
            "sub-sampling sketch sizes must not exceed n = {n}, got {}",
            ms.last().expect("nonempty")
        )));
    }
    if replicates == 0 {
        return Err(invalid("replicates must be at least 1"));
    }
    if val.is_empty() {
        return Err(invalid("validation set is empty"));
    }
    if let SweepTask::CandidateRanking { candidates, truth } = task {
        if truth.len() != val.len() {
            return Err(Error::DimensionMismatch { expected: val.len(), found: truth.len() });
        }
        if let Some(&t) = truth.iter().find(|&&t| t >= candidates.len()) {
            return Err(invalid(format!("truth index {t} outside {} candidates", candidates.len())));
        }
    }

    let k_train = kernels::gram(kernel, ys_train)?;
    let k_val = kernels::cross_gram(kernel, ys_train, val)?;
    let y_val = match task {
        SweepTask::LinearMse => Some(dense_rows(val)?),
        SweepTask::CandidateRanking { .. } => None,
    };
    let cand_data = match task {
        SweepTask::CandidateRanking { candidates, .. } => {
            let k_c = kernels::cross_gram(kernel, ys_train, candidates)?;
            let diag = if kernel.has_unit_diagonal() {
                None
            } else {
                Some(kernels::diagonal(kernel, candidates)?)
            };
            Some((k_c, diag))
        }
        SweepTask::LinearMse => None,
    };

    let evaluate = |sketch: &SketchMatrix| -> Result<f64> {
        let basis = fit_basis_with_gram(kernel, ys_train, sketch, &k_train, DEFAULT_RANK_TOL)?;
        let z = basis.feature_matrix_from_training_kernel(&k_val)?;
        match task {
            SweepTask::LinearMse => {
                let recon = basis.reconstruct_linear_rows(&z)?;
                metrics::mse(&recon, y_val.as_ref().expect("dense validation outputs"))
            }
            SweepTask::CandidateRanking { candidates, truth } => {
                let (k_c, diag) = cand_data.as_ref().expect("candidate kernel");
                let feats = basis.feature_matrix_from_training_kernel(k_c)?;
                let set = CandidateSet::from_features(candidates.clone(), feats, diag.clone())?;
                let scores = set.score_matrix(&z)?;
                let ranks = (0..z.nrows())
                    .map(|i| {
                        let row: Vec<f64> = scores.row(i).iter().copied().collect();
                        metrics::rank_of_truth(&row, truth[i])
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(metrics::retrieval_metrics(&ranks)?.mrr)
            }
        }
    };

    let per_replicate: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = random::substream(seed, r as u64);
            let perm = sketch_kind.is_subsampling().then(|| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut random::rng(rep_seed));
                p
            });
            ms.iter()
                .map(|&m| {
                    let sketch = match &perm {
                        Some(p) => SketchMatrix::subsample(p[..m].to_vec(), n)?,
                        None => SketchMatrix::draw(sketch_kind, n, m, random::substream(rep_seed, m as u64))?,
                    };
                    evaluate(&sketch)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let rows = ms
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let values: Vec<f64> = per_replicate.iter().map(|rep| rep[i]).collect();
            let (mean, std) = mean_std(&values);
            SweepRow { m, mean, std, values }
        })
        .collect();
    Ok(SweepTable { metric: task.metric_name().to_string(), higher_is_better: task.higher_is_better(), rows })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn dense_rows(ys: &[StructuredOutput]) -> Result<DMatrix<f64>> {
    let dim = ys.first().and_then(|y| y.as_dense()).map_or(0, <[f64]>::len);
    let mut out = DMatrix::zeros(ys.len(), dim);
    for (i, y) in ys.iter().enumerate() {
        let v = y
            .as_dense()
            .ok_or(Error::VariantMismatch { kernel: "linear", found: y.variant_name() })?;
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
        }
        out.row_mut(i).copy_from_slice(v);
    }
    Ok(out)
}

/// Smallest `m` whose mean metric is within relative `tol` of the best.
pub fn suggest_m(table: &SweepTable, tol: f64) -> Result<usize> {
    if table.rows.is_empty() {
        return Err(invalid("empty sweep table"));
    }
    if !(tol >= 0.0) {
        return Err(invalid(format!("tolerance must be non-negative, got {tol}")));
    }
    let means = table.rows.iter().map(|r| r.mean);
    let chosen = if table.higher_is_better {
        let best = means.fold(f64::NEG_INFINITY, f64::max);
        table.rows.iter().find(|r| r.mean >= best * (1.0 - tol))
    } else {
        let best = means.fold(f64::INFINITY, f64::min);
        table.rows.iter().find(|r| r.mean <= best * (1.0 + tol))
    };
    chosen.map(|r| r.m).ok_or_else(|| invalid("sweep table has no finite metric"))
}

/// `ψ̃(y)` of the outputs behind `k_val` (`n × N` block against training).
pub fn perfect_coefficients(
    kernel: &KernelSpec,
    ys_train: &[StructuredOutput],
    sketch: &SketchMatrix,
    k_train: &GramMatrix,
    k_val: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    fit_basis_with_gram(kernel, ys_train, sketch, k_train, DEFAULT_RANK_TOL)?
        .feature_matrix_from_training_kernel(k_val)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(points: &[(usize, f64)], higher: bool) -> SweepTable {
        SweepTable {
            metric: "x".into(),
            higher_is_better: higher,
            rows: points.iter().map(|&(m, v)| SweepRow { m, mean: v, std: 0.0, values: vec![v] }).collect(),
        }
    }

    #[test]
    fn suggest_first_flat_point() {
        let t = table(&[(1, 10.0), (2, 3.0), (4, 1.02), (8, 1.0), (16, 1.01)], false);
        assert_eq!(suggest_m(&t, 0.05).unwrap(), 4);
        assert_eq!(suggest_m(&t, 0.0).unwrap(), 8);
        let t = table(&[(5, 0.2), (10, 0.97), (20, 1.0)], true);
        assert_eq!(suggest_m(&t, 0.05).unwrap(), 10);
        assert_eq!(suggest_m(&table(&[(7, 3.0)], false), 0.05).unwrap(), 7);
        assert!(suggest_m(&table(&[], false), 0.05).is_err());
    }

    #[test]
    fn identity_gram_scores() {
        let k = GramMatrix::from_matrix(DMatrix::identity(10, 10)).unwrap();
        let s = leverage_scores_from_gram(&k, 0.01, 10, 0).unwrap();
        for v in s {
            assert!((v - 1.0 / 1.1).abs() < 1e-12);
        }
        assert!(leverage_scores_from_gram(&k, 0.0, 10, 0).is_err());
        assert!(leverage_scores_from_gram(&k, 0.1, 11, 0).is_err());
    }

    #[test]
    fn sweep_csv_rows() {
        let t = SweepTable {
            metric: "mse".into(),
            higher_is_better: false,
            rows: vec![SweepRow { m: 3, mean: 0.5, std: 0.0, values: vec![0.5] }],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "m,replicate,mse\n3,0,5e-1\n");
    }
}
