//! Regression and retrieval metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{kernel_loss, KernelSpec};
use crate::output::StructuredOutput;

/// Mean over rows of the squared Euclidean distance.
pub fn mse(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != truth.shape() {
        let (expected, found) = if pred.nrows() != truth.nrows() {
            (truth.nrows(), pred.nrows())
        } else {
            (truth.ncols(), pred.ncols())
        };
        return Err(Error::DimensionMismatch { expected, found });
    }
    if pred.nrows() == 0 {
        return Err(invalid("mse of an empty set"));
    }
    Ok((pred - truth).norm_squared() / pred.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub mrr: f64,
    #[serde(rename = "hits@1")]
    pub hits_at_1: f64,
    #[serde(rename = "hits@10")]
    pub hits_at_10: f64,
    pub mean_rank: f64,
    pub count: usize,
}

/// Hits are fractions in `[0, 1]`.
pub fn retrieval_metrics(ranks_of_truth: &[usize]) -> Result<RetrievalMetrics> {
    if ranks_of_truth.is_empty() {
        return Err(invalid("retrieval metrics of an empty set"));
    }
    if ranks_of_truth.contains(&0) {
        return Err(invalid("ranks are 1-based"));
    }
    let n = ranks_of_truth.len() as f64;
    let hits = |k: usize| ranks_of_truth.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(RetrievalMetrics {
        mrr: ranks_of_truth.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hits_at_1: hits(1),
        hits_at_10: hits(10),
        mean_rank: ranks_of_truth.iter().map(|&r| r as f64).sum::<f64>() / n,
        count: ranks_of_truth.len(),
    })
}

/// 1-based rank of candidate `truth` when `scores` are sorted descending.
/// Candidates tied with the truth are counted ahead of it.
pub fn rank_of_truth(scores: &[f64], truth: usize) -> Result<usize> {
    let t = *scores
        .get(truth)
        .ok_or_else(|| invalid(format!("truth index {truth} outside {} candidates", scores.len())))?;
    let ahead = scores.iter().enumerate().filter(|&(j, &s)| j != truth && s >= t).count();
    Ok(ahead + 1)
}

pub fn mean_kernel_loss(
    spec: &KernelSpec,
    preds: &[StructuredOutput],
    truths: &[StructuredOutput],
) -> Result<f64> {
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch { expected: truths.len(), found: preds.len() });
    }
    if preds.is_empty() {
        return Err(invalid("kernel loss of an empty set"));
    }
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        total += kernel_loss(spec, p, t)?;
    }
    Ok(total / preds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_cases() {
        let a = DMatrix::from_row_slice(1, 1, &[0.0]);
        let b = DMatrix::from_row_slice(1, 1, &[2.0]);
        assert_eq!(mse(&a, &b).unwrap(), 4.0);
        assert_eq!(mse(&b, &b).unwrap(), 0.0);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(mse(&c, &DMatrix::zeros(2, 2)).unwrap(), 1.0);
        assert!(mse(&a, &DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn retrieval_cases() {
        let all_one = retrieval_metrics(&[1, 1, 1]).unwrap();
        assert_eq!((all_one.mrr, all_one.hits_at_1, all_one.mean_rank), (1.0, 1.0, 1.0));
        let two = retrieval_metrics(&[1, 2]).unwrap();
        assert_eq!((two.mrr, two.hits_at_1), (0.75, 0.5));
        let three = retrieval_metrics(&[1, 10, 100]).unwrap();
        assert!((three.mrr - 1.11 / 3.0).abs() < 1e-15);
        assert!((three.hits_at_10 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(three.mean_rank, 37.0);
        assert!(retrieval_metrics(&[0]).is_err());
        assert!(retrieval_metrics(&[]).is_err());
    }

    #[test]
    fn ties_rank_pessimistically() {
        assert_eq!(rank_of_truth(&[0.5, 0.9, 0.5, 0.1], 0).unwrap(), 3);
        assert_eq!(rank_of_truth(&[0.5, 0.9, 0.5, 0.1], 1).unwrap(), 1);
        assert_eq!(rank_of_truth(&[0.5, 0.9, 0.5, 0.1], 3).unwrap(), 4);
        assert!(rank_of_truth(&[1.0], 1).is_err());
    }

    #[test]
    fn json_keys() {
        let m = retrieval_metrics(&[1]).unwrap();
        let v = serde_json::to_value(m).unwrap();
        assert!(v.get("hits@1").is_some() && v.get("mean_rank").is_some());
    }

    #[test]
    fn kernel_loss_cases() {
        let ys: Vec<StructuredOutput> =
            vec![vec![1.0, 0.0].into(), vec![0.0, 3.0].into()];
        let lin = KernelSpec::linear();
        assert_eq!(mean_kernel_loss(&lin, &ys, &ys).unwrap(), 0.0);
        let swapped = [ys[1].clone(), ys[0].clone()];
        assert!((mean_kernel_loss(&lin, &swapped, &ys).unwrap() - 10.0).abs() < 1e-12);
        let cos = KernelSpec::new(crate::kernels::KernelKind::Cosine);
        assert!((mean_kernel_loss(&cos, &swapped, &ys).unwrap() - 2.0).abs() < 1e-12);
    }
}
