//! Aggregation of several models' candidate scores.

use serde::{Deserialize, Serialize};

use crate::decode::descending_order;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Weighted sum of per-model ranks, lower is better.
    RankSum,
    ScoreAverage,
    /// Elementwise maximum; weights are ignored.
    ScoreMax,
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rank_sum" | "ranksum" => Ok(AggregationMode::RankSum),
            "score_average" | "average" | "mean" => Ok(AggregationMode::ScoreAverage),
            "score_max" | "max" => Ok(AggregationMode::ScoreMax),
            other => Err(invalid(format!("unknown aggregation mode `{other}`"))),
        }
    }
}

/// 1-based ranks by descending score; tied scores share their mean rank.
pub fn fractional_ranks(scores: &[f64]) -> Vec<f64> {
    let order = descending_order(scores);
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

pub fn uniform_weights(t: usize) -> Vec<f64> {
    vec![1.0 / t as f64; t]
}

/// Combined per-candidate value: the weighted rank sum for
/// [`AggregationMode::RankSum`], otherwise the combined score.
pub fn aggregate_values(
    mode: AggregationMode,
    weights: Option<&[f64]>,
    per_model: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let t = per_model.len();
    if t == 0 {
        return Err(invalid("aggregation needs at least one model"));
    }
    let n_c = per_model[0].len();
    if let Some(bad) = per_model.iter().find(|s| s.len() != n_c) {
        return Err(Error::DimensionMismatch { expected: n_c, found: bad.len() });
    }
    let uniform = uniform_weights(t);
    let w = weights.unwrap_or(&uniform);
    check_weights(w, t)?;
    Ok(match mode {
        AggregationMode::RankSum => {
            let mut total = vec![0.0; n_c];
            for (wt, s) in w.iter().zip(per_model) {
                for (acc, r) in total.iter_mut().zip(fractional_ranks(s)) {
                    *acc += wt * r;
                }
            }
            total
        }
        AggregationMode::ScoreAverage => {
            let mut total = vec![0.0; n_c];
            for (wt, s) in w.iter().zip(per_model) {
                for (acc, v) in total.iter_mut().zip(s) {
                    *acc += wt * v;
                }
            }
            total
        }
        AggregationMode::ScoreMax => (0..n_c)
            .map(|j| per_model.iter().map(|s| s[j]).fold(f64::NEG_INFINITY, f64::max))
            .collect(),
    })
}

/// Final candidate ranking, best first; ties go to the lowest index.
pub fn aggregate(
    mode: AggregationMode,
    weights: Option<&[f64]>,
    per_model: &[Vec<f64>],
) -> Result<Vec<usize>> {
    let values = aggregate_values(mode, weights, per_model)?;
    Ok(match mode {
        AggregationMode::RankSum => {
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            order
        }
        _ => descending_order(&values),
    })
}

/// Value per candidate where higher is better, for ranking the truth.
pub fn aggregate_scores(
    mode: AggregationMode,
    weights: Option<&[f64]>,
    per_model: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut values = aggregate_values(mode, weights, per_model)?;
    if mode == AggregationMode::RankSum {
        values.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(values)
}

fn check_weights(w: &[f64], t: usize) -> Result<()> {
    if w.len() != t {
        return Err(Error::DimensionMismatch { expected: t, found: w.len() });
    }
    if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(invalid(format!("ensemble weights must be non-negative, got {w:?}")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("ensemble weights must sum to 1, got {sum}")));
    }
    Ok(())
}
