#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use dsokr::{Fingerprint, KernelKind, KernelSpec, LabeledGraph, StructuredOutput};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller, kept independent of the library's sampler
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_matrix(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(r))
}

pub fn random_vectors(n: usize, dim: usize, r: &mut ChaCha8Rng) -> Vec<StructuredOutput> {
    (0..n).map(|_| StructuredOutput::Dense((0..dim).map(|_| normal(r)).collect())).collect()
}

pub fn random_fingerprints(n: usize, len: usize, density: f64, r: &mut ChaCha8Rng) -> Vec<StructuredOutput> {
    (0..n)
        .map(|_| {
            let mut bits: Vec<bool> = (0..len).map(|_| r.random_bool(density)).collect();
            if !bits.iter().any(|&b| b) {
                bits[r.random_range(0..len)] = true;
            }
            StructuredOutput::Fingerprint(Fingerprint::new(bits))
        })
        .collect()
}

pub fn random_graph(min_nodes: usize, max_nodes: usize, labels: i64, p_edge: f64, r: &mut ChaCha8Rng) -> LabeledGraph {
    let n = r.random_range(min_nodes..=max_nodes);
    let node_labels: Vec<i64> = (0..n).map(|_| r.random_range(0..labels)).collect();
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p_edge) {
                pairs.push((u, v));
            }
        }
    }
    LabeledGraph::from_pairs(node_labels, &pairs).unwrap()
}

pub fn random_graphs(n: usize, min_nodes: usize, max_nodes: usize, r: &mut ChaCha8Rng) -> Vec<StructuredOutput> {
    (0..n).map(|_| StructuredOutput::Graph(random_graph(min_nodes, max_nodes, 4, 0.4, r))).collect()
}

pub type Sampler = fn(usize, &mut ChaCha8Rng) -> Vec<StructuredOutput>;

/// Kernels exercised across the suite, paired with an output sampler.
pub fn kernel_zoo() -> Vec<(KernelSpec, Sampler)> {
    fn vecs(n: usize, r: &mut ChaCha8Rng) -> Vec<StructuredOutput> {
        random_vectors(n, 8, r)
    }
    fn fps(n: usize, r: &mut ChaCha8Rng) -> Vec<StructuredOutput> {
        random_fingerprints(n, 32, 0.3, r)
    }
    fn graphs(n: usize, r: &mut ChaCha8Rng) -> Vec<StructuredOutput> {
        random_graphs(n, 3, 8, r)
    }
    vec![
        (KernelSpec::linear(), vecs as Sampler),
        (KernelSpec::gaussian(0.1), vecs),
        (KernelSpec::new(KernelKind::Cosine), vecs),
        (KernelSpec::new(KernelKind::Tanimoto), fps),
        (KernelSpec::new(KernelKind::VertexHistogram), graphs),
        (KernelSpec::new(KernelKind::WlSubtree { iterations: 2 }), graphs),
        (KernelSpec::new(KernelKind::ShortestPath), graphs),
    ]
}

/// Cyclic Jacobi eigensolver: (eigenvalues descending, eigenvectors as columns).
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off.sqrt() < 1e-15 * a.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Pseudo-inverse of a symmetric PSD matrix through the Jacobi oracle,
/// dropping eigenvalues below `tol · λ_max`.
pub fn psd_pinv(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (vals, vecs) = jacobi_eigen(a);
    let top = vals[0];
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (j, &s) in vals.iter().enumerate() {
        if s > tol * top {
            let v = vecs.column(j);
            out += (v * v.transpose()) / s;
        }
    }
    out
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
        m.swap_rows(col, pivot);
        x.swap_rows(col, pivot);
        for row in col + 1..n {
            let f = m[(row, col)] / m[(col, col)];
            for k in col..n {
                m[(row, k)] -= f * m[(col, k)];
            }
            for k in 0..x.ncols() {
                x[(row, k)] -= f * x[(col, k)];
            }
        }
    }
    for col in (0..n).rev() {
        for k in 0..x.ncols() {
            let mut s = x[(col, k)];
            for j in col + 1..n {
                s -= m[(col, j)] * x[(j, k)];
            }
            x[(col, k)] = s / m[(col, col)];
        }
    }
    x
}

/// All-pairs shortest path lengths by Floyd-Warshall.
pub fn floyd_warshall(g: &LabeledGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.num_nodes();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for e in g.edges() {
        d[e.u][e.v] = Some(1);
        d[e.v][e.u] = Some(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Shortest-path kernel by enumerating every pair of shortest-path triples
/// `(label_u, label_v, distance)` over unordered connected node pairs.
pub fn shortest_path_oracle(a: &LabeledGraph, b: &LabeledGraph) -> f64 {
    let triples = |g: &LabeledGraph| {
        let d = floyd_warshall(g);
        let l = g.labels();
        let mut out = Vec::new();
        for u in 0..g.num_nodes() {
            for v in u + 1..g.num_nodes() {
                if let Some(dist) = d[u][v] {
                    out.push((l[u].min(l[v]), l[u].max(l[v]), dist));
                }
            }
        }
        out
    };
    let (ta, tb) = (triples(a), triples(b));
    let mut count = 0.0;
    for x in &ta {
        for y in &tb {
            if x == y {
                count += 1.0;
            }
        }
    }
    count
}

/// Weisfeiler-Lehman relabeling written from scratch: labels are signature
/// strings, so equality of refined labels is checked without any compression
/// dictionary.
pub fn wl_signatures(g: &LabeledGraph, h: usize) -> Vec<Vec<String>> {
    let mut current: Vec<String> = g.labels().iter().map(|l| l.to_string()).collect();
    let mut all = vec![current.clone()];
    for _ in 0..h {
        let next: Vec<String> = (0..g.num_nodes())
            .map(|v| {
                let mut nb: Vec<&String> = g.neighbors(v).iter().map(|&u| &current[u]).collect();
                nb.sort();
                format!("({}|{})", current[v], nb.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","))
            })
            .collect();
        all.push(next.clone());
        current = next;
    }
    all
}

pub fn wl_oracle(a: &LabeledGraph, b: &LabeledGraph, h: usize) -> f64 {
    let (sa, sb) = (wl_signatures(a, h), wl_signatures(b, h));
    let mut total = 0.0;
    for it in 0..=h {
        let mut hist: HashMap<&String, f64> = HashMap::new();
        for s in &sa[it] {
            *hist.entry(s).or_default() += 1.0;
        }
        for s in &sb[it] {
            total += hist.get(s).copied().unwrap_or(0.0);
        }
    }
    total
}

pub fn bfs(g: &LabeledGraph, s: usize) -> Vec<Option<usize>> {
    let mut d = vec![None; g.num_nodes()];
    d[s] = Some(0);
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for &v in g.neighbors(u) {
            if d[v].is_none() {
                d[v] = Some(d[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    d
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}
