//! Graph kernel feature extraction: vertex label histograms,
//! Weisfeiler-Lehman relabeling and shortest-path triples.
//!
//! Every graph kernel here is an inner product of sparse count vectors, so
//! the extractors return sorted `(key, count)` lists and the kernel value is
//! a merge-join dot product.

use std::collections::{HashMap, VecDeque};

use crate::output::LabeledGraph;

/// Key of one sparse feature coordinate.
///
/// * vertex histogram: `(label, 0, 0)`
/// * WL subtree: `(iteration, label, 0)`
/// * shortest path: `(min endpoint label, max endpoint label, distance)`
pub(crate) type FeatureKey = (i64, i64, i64);

pub(crate) type SparseCounts = Vec<(FeatureKey, f64)>;

fn to_sorted(map: HashMap<FeatureKey, f64>) -> SparseCounts {
    let mut v: SparseCounts = map.into_iter().collect();
    v.sort_unstable_by_key(|&(k, _)| k);
    v
}

pub(crate) fn sparse_dot(a: &SparseCounts, b: &SparseCounts) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

pub(crate) fn vertex_histogram(g: &LabeledGraph) -> SparseCounts {
    let mut map = HashMap::new();
    for &l in g.labels() {
        *map.entry((l, 0, 0)).or_insert(0.0) += 1.0;
    }
    to_sorted(map)
}

/// Weisfeiler-Lehman relabeling of a batch of graphs with a shared
/// compression dictionary.
///
/// Returns `labels[iteration][graph][node]` for iterations `0..=h`.
/// Iteration 0 holds the original labels. At iteration `i`, each node gets a
/// compressed integer identifying its iteration-`i-1` label together with
/// the sorted multiset of its neighbours' iteration-`i-1` labels. New labels
/// are handed out from 0 in first-encounter order (graphs in input order,
/// nodes in index order), so the output is fully deterministic.
pub fn wl_relabel(graphs: &[&LabeledGraph], h: usize) -> Vec<Vec<Vec<i64>>> {
    let mut out = Vec::with_capacity(h + 1);
    out.push(graphs.iter().map(|g| g.labels().to_vec()).collect::<Vec<_>>());
    for _ in 0..h {
        let prev = out.last().expect("iteration 0 present");
        let mut dict: HashMap<(i64, Vec<i64>), i64> = HashMap::new();
        let mut next = Vec::with_capacity(graphs.len());
        for (g, labels) in graphs.iter().zip(prev) {
            let relabeled = (0..g.num_nodes())
                .map(|v| {
                    let mut nbrs: Vec<i64> = g.neighbors(v).iter().map(|&u| labels[u]).collect();
                    nbrs.sort_unstable();
                    let fresh = dict.len() as i64;
                    *dict.entry((labels[v], nbrs)).or_insert(fresh)
                })
                .collect();
            next.push(relabeled);
        }
        out.push(next);
    }
    out
}

/// Per-graph WL subtree feature vectors: vertex histograms of every
/// relabeled graph for iterations `0..=h`, stacked under distinct keys.
pub(crate) fn wl_features(graphs: &[&LabeledGraph], h: usize) -> Vec<SparseCounts> {
    let labels = wl_relabel(graphs, h);
    (0..graphs.len())
        .map(|gi| {
            let mut map = HashMap::new();
            for (it, per_graph) in labels.iter().enumerate() {
                for &l in &per_graph[gi] {
                    *map.entry((it as i64, l, 0)).or_insert(0.0) += 1.0;
                }
            }
            to_sorted(map)
        })
        .collect()
}

/// Unweighted all-pairs shortest-path lengths by BFS from every node.
/// Unreachable pairs are `None`.
pub fn shortest_path_lengths(g: &LabeledGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.num_nodes();
    let mut dist = vec![vec![None; n]; n];
    let mut queue = VecDeque::new();
    for (s, row) in dist.iter_mut().enumerate() {
        row[s] = Some(0);
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = row[u].expect("queued nodes are reached");
            for &v in g.neighbors(u) {
                if row[v].is_none() {
                    row[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}

/// Shortest-path kernel features under a Dirac walk kernel: one count per
/// (endpoint labels, path length) over unordered connected node pairs.
pub(crate) fn shortest_path_features(g: &LabeledGraph) -> SparseCounts {
    let dist = shortest_path_lengths(g);
    let labels = g.labels();
    let mut map = HashMap::new();
    for u in 0..g.num_nodes() {
        for v in (u + 1)..g.num_nodes() {
            if let Some(d) = dist[u][v] {
                let (a, b) = (labels[u].min(labels[v]), labels[u].max(labels[v]));
                *map.entry((a, b, d as i64)).or_insert(0.0) += 1.0;
            }
        }
    }
    to_sorted(map)
}
