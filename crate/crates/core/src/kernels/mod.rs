//! Output kernels, Gram matrices and the kernel-induced loss.
//!
//! A kernel is described by a [`KernelSpec`]: a kind plus an optional cosine
//! normalization `k(y, y') / sqrt(k(y, y) k(y', y'))`. Feature maps are never
//! materialized; everything downstream works through [`gram`] and
//! [`cross_gram`].

pub mod graph;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::output::{Fingerprint, LabeledGraph, StructuredOutput};

pub use graph::{shortest_path_lengths, wl_relabel};
use graph::SparseCounts;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Gaussian { gamma: f64 },
    Cosine,
    Tanimoto,
    VertexHistogram,
    WlSubtree { iterations: usize },
    ShortestPath,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Gaussian { .. } => "gaussian",
            KernelKind::Cosine => "cosine",
            KernelKind::Tanimoto => "tanimoto",
            KernelKind::VertexHistogram => "vertex-histogram",
            KernelKind::WlSubtree { .. } => "wl-subtree",
            KernelKind::ShortestPath => "shortest-path",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    #[serde(default)]
    pub normalize: bool,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        KernelSpec { kind, normalize: false }
    }

    pub fn normalized(kind: KernelKind) -> Self {
        KernelSpec { kind, normalize: true }
    }

    pub fn linear() -> Self {
        Self::new(KernelKind::Linear)
    }

    pub fn gaussian(gamma: f64) -> Self {
        Self::new(KernelKind::Gaussian { gamma })
    }

    pub fn validate(&self) -> Result<()> {
        if let KernelKind::Gaussian { gamma } = self.kind {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(invalid(format!("gaussian kernel needs gamma > 0, got {gamma}")));
            }
        }
        Ok(())
    }

    /// True when `k(y, y) = 1` for every admissible `y`.
    pub fn has_unit_diagonal(&self) -> bool {
        self.normalize
            || matches!(
                self.kind,
                KernelKind::Gaussian { .. } | KernelKind::Cosine | KernelKind::Tanimoto
            )
    }

    fn check_variant(&self, y: &StructuredOutput) -> Result<()> {
        let ok = match self.kind {
            KernelKind::Linear | KernelKind::Gaussian { .. } | KernelKind::Cosine => {
                matches!(y, StructuredOutput::Dense(_))
            }
            KernelKind::Tanimoto => matches!(y, StructuredOutput::Fingerprint(_)),
            KernelKind::VertexHistogram
            | KernelKind::WlSubtree { .. }
            | KernelKind::ShortestPath => matches!(y, StructuredOutput::Graph(_)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::VariantMismatch { kernel: self.kind.name(), found: y.variant_name() })
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            KernelKind::Linear => f.write_str("linear")?,
            KernelKind::Gaussian { gamma } => write!(f, "gaussian:{gamma}")?,
            KernelKind::Cosine => f.write_str("cosine")?,
            KernelKind::Tanimoto => f.write_str("tanimoto")?,
            KernelKind::VertexHistogram => f.write_str("vh")?,
            KernelKind::WlSubtree { iterations } => write!(f, "wl:{iterations}")?,
            KernelKind::ShortestPath => f.write_str("sp")?,
        }
        if self.normalize {
            f.write_str("+norm")?;
        }
        Ok(())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Parses `linear`, `gaussian:<gamma>`, `cosine`, `tanimoto`, `vh`,
    /// `wl:<h>`, `sp`, each optionally suffixed with `+norm`.
    fn from_str(s: &str) -> Result<Self> {
        let (body, normalize) = match s.strip_suffix("+norm") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let (name, arg) = match body.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (body, None),
        };
        let parse_arg = |what: &str| -> Result<&str> {
            arg.ok_or_else(|| invalid(format!("kernel `{name}` needs a {what} argument")))
        };
        let kind = match name.to_ascii_lowercase().as_str() {
            "linear" => KernelKind::Linear,
            "gaussian" | "rbf" => {
                let gamma = parse_arg("gamma")?
                    .parse()
                    .map_err(|_| invalid(format!("bad gaussian gamma in `{s}`")))?;
                KernelKind::Gaussian { gamma }
            }
            "cosine" => KernelKind::Cosine,
            "tanimoto" => KernelKind::Tanimoto,
            "vh" | "vertex-histogram" => KernelKind::VertexHistogram,
            "wl" | "wl-vh" | "wl-subtree" => {
                let iterations = parse_arg("iteration count")?
                    .parse()
                    .map_err(|_| invalid(format!("bad WL iteration count in `{s}`")))?;
                KernelKind::WlSubtree { iterations }
            }
            "sp" | "shortest-path" => KernelKind::ShortestPath,
            other => return Err(invalid(format!("unknown kernel `{other}`"))),
        };
        let spec = KernelSpec { kind, normalize };
        spec.validate()?;
        Ok(spec)
    }
}

/// A symmetric positive semi-definite kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// Wraps a matrix, checking symmetry to 1e-12 relative tolerance.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(invalid(format!("Gram matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(GramMatrix(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Smallest eigenvalue divided by the largest one; PSD up to roundoff
    /// means this is above `-1e-8`.
    pub fn relative_min_eigenvalue(&self) -> f64 {
        let eig = self.0.clone().symmetric_eigenvalues();
        let max = eig.max();
        if max <= 0.0 {
            return if eig.min() < 0.0 { f64::NEG_INFINITY } else { 0.0 };
        }
        eig.min() / max
    }
}

enum Prepared<'a> {
    Dense(&'a [f64]),
    Bits(&'a Fingerprint),
    Sparse(SparseCounts),
}

fn prepare<'a>(spec: &KernelSpec, ys: &[&'a StructuredOutput]) -> Result<Vec<Prepared<'a>>> {
    spec.validate()?;
    for y in ys {
        spec.check_variant(y)?;
    }
    Ok(match spec.kind {
        KernelKind::Linear | KernelKind::Gaussian { .. } | KernelKind::Cosine => ys
            .iter()
            .map(|y| Prepared::Dense(y.as_dense().expect("checked")))
            .collect(),
        KernelKind::Tanimoto => ys
            .iter()
            .map(|y| Prepared::Bits(y.as_fingerprint().expect("checked")))
            .collect(),
        KernelKind::VertexHistogram => ys
            .iter()
            .map(|y| Prepared::Sparse(graph::vertex_histogram(y.as_graph().expect("checked"))))
            .collect(),
        KernelKind::ShortestPath => ys
            .iter()
            .map(|y| {
                Prepared::Sparse(graph::shortest_path_features(y.as_graph().expect("checked")))
            })
            .collect(),
        KernelKind::WlSubtree { iterations } => {
            let graphs: Vec<&LabeledGraph> =
                ys.iter().map(|y| y.as_graph().expect("checked")).collect();
            graph::wl_features(&graphs, iterations)
                .into_iter()
                .map(Prepared::Sparse)
                .collect()
        }
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn raw_pair(spec: &KernelSpec, a: &Prepared, b: &Prepared) -> Result<f64> {
    match (a, b) {
        (Prepared::Dense(x), Prepared::Dense(y)) => {
            if x.len() != y.len() {
                return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
            }
            Ok(match spec.kind {
                KernelKind::Linear => dot(x, y),
                KernelKind::Gaussian { gamma } => {
                    let d2: f64 = x.iter().zip(*y).map(|(p, q)| (p - q) * (p - q)).sum();
                    (-gamma * d2).exp()
                }
                KernelKind::Cosine => {
                    let (nx, ny) = (dot(x, x), dot(y, y));
                    if nx <= 0.0 || ny <= 0.0 {
                        return Err(Error::DegenerateInput(
                            "zero-norm vector under the cosine kernel".into(),
                        ));
                    }
                    dot(x, y) / (nx * ny).sqrt()
                }
                _ => unreachable!("dense data only reaches vector kernels"),
            })
        }
        (Prepared::Bits(x), Prepared::Bits(y)) => {
            if x.len() != y.len() {
                return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
            }
            let (mut inter, mut union) = (0usize, 0usize);
            for (&p, &q) in x.bits().iter().zip(y.bits()) {
                inter += (p && q) as usize;
                union += (p || q) as usize;
            }
            // two empty fingerprints are identical
            Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
        }
        (Prepared::Sparse(x), Prepared::Sparse(y)) => Ok(graph::sparse_dot(x, y)),
        _ => unreachable!("prepare yields one representation per kernel"),
    }
}

fn self_values(spec: &KernelSpec, prepared: &[Prepared]) -> Result<Vec<f64>> {
    prepared
        .iter()
        .map(|p| {
            let v = raw_pair(spec, p, p)?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::DegenerateInput(format!(
                    "output with self-kernel {v} cannot be normalized"
                )))
            }
        })
        .collect()
}

/// Kernel matrix between `left` and `right`, computed with one joint
/// preparation pass so WL labels share a dictionary.
fn kernel_block(
    spec: &KernelSpec,
    left: &[StructuredOutput],
    right: Option<&[StructuredOutput]>,
) -> Result<DMatrix<f64>> {
    let mut all: Vec<&StructuredOutput> = left.iter().collect();
    if let Some(r) = right {
        all.extend(r.iter());
    }
    let prepared = prepare(spec, &all)?;
    let (lp, rp) = match right {
        Some(_) => prepared.split_at(left.len()),
        None => (&prepared[..], &prepared[..]),
    };
    let norms = if spec.normalize {
        Some((self_values(spec, lp)?, if right.is_some() { self_values(spec, rp)? } else { vec![] }))
    } else {
        None
    };
    let symmetric = right.is_none();
    let rows: Vec<Vec<f64>> = (0..lp.len())
        .into_par_iter()
        .map(|i| {
            let start = if symmetric { i } else { 0 };
            (start..rp.len())
                .map(|j| {
                    let raw = raw_pair(spec, &lp[i], &rp[j])?;
                    Ok(match &norms {
                        Some((ln, rn)) => {
                            let dj = if symmetric { ln[j] } else { rn[j] };
                            raw / (ln[i] * dj).sqrt()
                        }
                        None => raw,
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(lp.len(), rp.len());
    for (i, row) in rows.into_iter().enumerate() {
        let start = if symmetric { i } else { 0 };
        for (off, v) in row.into_iter().enumerate() {
            let j = start + off;
            m[(i, j)] = v;
            if symmetric {
                m[(j, i)] = v;
            }
        }
    }
    Ok(m)
}

/// Evaluates `k(y, y2)`.
pub fn eval(spec: &KernelSpec, y: &StructuredOutput, y2: &StructuredOutput) -> Result<f64> {
    let m = kernel_block(spec, std::slice::from_ref(y), Some(std::slice::from_ref(y2)))?;
    Ok(m[(0, 0)])
}

/// Gram matrix `K_ij = k(ys[i], ys[j])`.
pub fn gram(spec: &KernelSpec, ys: &[StructuredOutput]) -> Result<GramMatrix> {
    kernel_block(spec, ys, None).map(GramMatrix)
}

/// Rectangular kernel matrix with entry `(i, j) = k(ys[i], ys2[j])`.
pub fn cross_gram(
    spec: &KernelSpec,
    ys: &[StructuredOutput],
    ys2: &[StructuredOutput],
) -> Result<DMatrix<f64>> {
    kernel_block(spec, ys, Some(ys2))
}

/// Kernel-induced squared loss `‖ψ(y) − ψ(y2)‖² = k(y,y) − 2k(y,y2) + k(y2,y2)`.
pub fn kernel_loss(spec: &KernelSpec, y: &StructuredOutput, y2: &StructuredOutput) -> Result<f64> {
    let m = gram(spec, &[y.clone(), y2.clone()])?;
    let m = m.matrix();
    Ok(m[(0, 0)] - 2.0 * m[(0, 1)] + m[(1, 1)])
}

/// Self-kernel values `k(y, y)` for each output.
pub fn diagonal(spec: &KernelSpec, ys: &[StructuredOutput]) -> Result<Vec<f64>> {
    ys.iter().map(|y| eval(spec, y, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(v: &[f64]) -> StructuredOutput {
        StructuredOutput::Dense(v.to_vec())
    }

    fn fp(s: &str) -> StructuredOutput {
        StructuredOutput::Fingerprint(s.parse().unwrap())
    }

    fn g(labels: &[i64], edges: &[(usize, usize)]) -> StructuredOutput {
        StructuredOutput::Graph(LabeledGraph::from_pairs(labels.to_vec(), edges).unwrap())
    }

    #[test]
    fn linear_dot_product() {
        let k = eval(&KernelSpec::linear(), &dense(&[1.0, 2.0]), &dense(&[3.0, 4.0])).unwrap();
        assert_eq!(k, 11.0);
    }

    #[test]
    fn gaussian_identity_and_unit_distance() {
        let y = dense(&[0.3, -1.2]);
        assert_eq!(eval(&KernelSpec::gaussian(0.7), &y, &y).unwrap(), 1.0);
        let m = cross_gram(&KernelSpec::gaussian(1.0), &[dense(&[0.0, 0.0])], &[dense(&[1.0, 0.0])])
            .unwrap();
        assert!((m[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tanimoto_intersection_over_union() {
        let spec = KernelSpec::new(KernelKind::Tanimoto);
        let k = eval(&spec, &fp("1100"), &fp("1010")).unwrap();
        assert!((k - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(eval(&spec, &fp("0000"), &fp("0000")).unwrap(), 1.0);
        assert_eq!(eval(&spec, &fp("0000"), &fp("0100")).unwrap(), 0.0);
    }

    #[test]
    fn vertex_histogram_hand_count() {
        // A = 0, B = 1; path (A,A,B) vs triangle (A,B,B): f = (2,1), f' = (1,2)
        let path = g(&[0, 0, 1], &[(0, 1), (1, 2)]);
        let tri = g(&[0, 1, 1], &[(0, 1), (1, 2), (0, 2)]);
        let k = eval(&KernelSpec::new(KernelKind::VertexHistogram), &path, &tri).unwrap();
        assert_eq!(k, 4.0);
    }

    #[test]
    fn errors() {
        let lin = KernelSpec::linear();
        assert!(matches!(
            eval(&lin, &dense(&[1.0]), &fp("1")),
            Err(Error::VariantMismatch { .. })
        ));
        assert!(matches!(
            eval(&KernelSpec::gaussian(0.0), &dense(&[1.0]), &dense(&[1.0])),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            eval(&KernelSpec::new(KernelKind::Cosine), &dense(&[0.0]), &dense(&[1.0])),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            eval(&KernelSpec::normalized(KernelKind::Linear), &dense(&[0.0]), &dense(&[1.0])),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            eval(&lin, &dense(&[1.0]), &dense(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_small_cases() {
        let lin = KernelSpec::linear();
        let k = gram(&lin, &[dense(&[1.0, 0.0]), dense(&[0.0, 1.0])]).unwrap();
        assert_eq!(k.matrix(), &DMatrix::identity(2, 2));
        let k = gram(&lin, &[dense(&[2.0, 1.0])]).unwrap();
        assert_eq!(k.matrix()[(0, 0)], 5.0);
    }

    #[test]
    fn cross_gram_of_self_is_gram() {
        let ys = vec![dense(&[1.0, 2.0]), dense(&[-1.0, 0.5]), dense(&[0.0, 3.0])];
        let spec = KernelSpec::gaussian(0.3);
        assert_eq!(&cross_gram(&spec, &ys, &ys).unwrap(), gram(&spec, &ys).unwrap().matrix());
    }

    #[test]
    fn kernel_loss_cases() {
        let lin = KernelSpec::linear();
        let y = dense(&[1.0, 0.0]);
        assert_eq!(kernel_loss(&lin, &y, &y).unwrap(), 0.0);
        assert_eq!(kernel_loss(&lin, &y, &dense(&[0.0, 1.0])).unwrap(), 2.0);
        let norm = KernelSpec::normalized(KernelKind::Linear);
        let (a, b) = (dense(&[1.0, 2.0]), dense(&[3.0, -1.0]));
        let k = eval(&norm, &a, &b).unwrap();
        assert!((kernel_loss(&norm, &a, &b).unwrap() - (2.0 - 2.0 * k)).abs() < 1e-14);
    }

    #[test]
    fn normalized_diagonal_is_one() {
        let spec = KernelSpec::normalized(KernelKind::WlSubtree { iterations: 2 });
        let ys = vec![g(&[0, 1, 1], &[(0, 1), (1, 2)]), g(&[2, 2], &[(0, 1)])];
        let k = gram(&spec, &ys).unwrap();
        for i in 0..2 {
            assert!((k.matrix()[(i, i)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_and_display() {
        for s in ["linear", "gaussian:0.5", "cosine", "tanimoto", "vh", "wl:3+norm", "sp"] {
            let spec: KernelSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("gaussian:-1".parse::<KernelSpec>().is_err());
        assert!("wl".parse::<KernelSpec>().is_err());
        assert!("poly".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = KernelSpec::normalized(KernelKind::WlSubtree { iterations: 2 });
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"wl_subtree","iterations":2,"normalize":true}"#);
        assert_eq!(serde_json::from_str::<KernelSpec>(&json).unwrap(), spec);
    }
}
