//! Random sketch matrices `R ∈ ℝ^{m×n}`.
//!
//! Three families are supported:
//!
//! * **sub-sampling**: each row is a distinct row of the identity, drawn
//!   without replacement. Applied by gathering, never by multiplying.
//! * **Gaussian**: i.i.d. `N(0, 1/m)` entries, so that `E[RᵀR] = I_n`.
//! * **p-sparsified**: each entry is nonzero with probability `q`, with
//!   nonzero values `N(0, 1/(m q))`. Empty rows are redrawn.
//!
//! A sketch serializes to its kind, shape, seed and scale (plus the index
//! list for sub-sampling); dense draws are regenerated from the seed.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::GramMatrix;
use crate::random::{self, Rng};

pub const DEFAULT_DENSITY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SketchKind {
    SubSample,
    Gaussian,
    PSparsified { q: f64 },
}

impl std::str::FromStr for SketchKind {
    type Err = Error;

    /// `subsample`, `gaussian`, or `sparse[:q]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        match name.to_ascii_lowercase().as_str() {
            "subsample" | "sub-sample" | "nystrom" => Ok(SketchKind::SubSample),
            "gaussian" => Ok(SketchKind::Gaussian),
            "sparse" | "p-sparsified" | "psparsified" => {
                let q = match arg {
                    Some(a) => a.parse().map_err(|_| invalid(format!("bad density in `{s}`")))?,
                    None => DEFAULT_DENSITY,
                };
                Ok(SketchKind::PSparsified { q })
            }
            other => Err(invalid(format!("unknown sketch kind `{other}`"))),
        }
    }
}

impl SketchKind {
    /// Whether a basis over this sketch only needs the sampled outputs.
    pub fn is_subsampling(&self) -> bool {
        matches!(self, SketchKind::SubSample)
    }
}

impl std::fmt::Display for SketchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SketchKind::SubSample => f.write_str("subsample"),
            SketchKind::Gaussian => f.write_str("gaussian"),
            SketchKind::PSparsified { q } => write!(f, "sparse:{q}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SketchData {
    SubSample(Vec<usize>),
    Dense(DMatrix<f64>),
    /// Per-row `(column, value)` lists, columns strictly increasing.
    Sparse(Vec<Vec<(usize, f64)>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "SketchRecord", try_from = "SketchRecord")]
pub struct SketchMatrix {
    kind: SketchKind,
    m: usize,
    n: usize,
    seed: u64,
    scale: f64,
    data: SketchData,
}

#[derive(Serialize, Deserialize)]
struct SketchRecord {
    #[serde(flatten)]
    kind: SketchKind,
    m: usize,
    n: usize,
    seed: u64,
    #[serde(default = "one")]
    scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    indices: Option<Vec<usize>>,
}

fn one() -> f64 {
    1.0
}

impl SketchMatrix {
    /// Draws a sketch. Deterministic in `(kind, n, m, seed)`.
    pub fn draw(kind: SketchKind, n: usize, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(invalid("sketch size m must be at least 1"));
        }
        let mut rng = random::rng(seed);
        let data = match kind {
            SketchKind::SubSample => {
                if m > n {
                    return Err(invalid(format!(
                        "sub-sampling sketch needs m <= n, got m = {m}, n = {n}"
                    )));
                }
                SketchData::SubSample(index::sample(&mut rng, n, m).into_vec())
            }
            SketchKind::Gaussian => {
                let sd = 1.0 / (m as f64).sqrt();
                SketchData::Dense(random::gaussian_matrix(m, n, &mut rng) * sd)
            }
            SketchKind::PSparsified { q } => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(invalid(format!("sparsity density q must lie in (0, 1], got {q}")));
                }
                if n == 0 {
                    return Err(invalid("p-sparsified sketch needs n >= 1"));
                }
                SketchData::Sparse(draw_sparse_rows(m, n, q, &mut rng))
            }
        };
        Ok(SketchMatrix { kind, m, n, seed, scale: 1.0, data })
    }

    /// Sub-sampling sketch with explicit row indices.
    pub fn subsample(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("sketch size m must be at least 1"));
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(invalid(format!("sub-sample index {i} outside 0..{n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!("sub-sample index {i} repeated")));
            }
        }
        Ok(SketchMatrix {
            kind: SketchKind::SubSample,
            m: indices.len(),
            n,
            seed: 0,
            scale: 1.0,
            data: SketchData::SubSample(indices),
        })
    }

    /// The same sketch multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        SketchMatrix { scale: self.scale * c, ..self.clone() }
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Global multiplier applied on top of the drawn entries.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Selected rows of a sub-sampling sketch.
    pub fn indices(&self) -> Option<&[usize]> {
        match &self.data {
            SketchData::SubSample(idx) => Some(idx),
            _ => None,
        }
    }

    /// Nonzero entries as `(row, col, value)` triplets.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        match &self.data {
            SketchData::SubSample(idx) => {
                idx.iter().enumerate().map(|(r, &c)| (r, c, self.scale)).collect()
            }
            SketchData::Dense(d) => {
                let mut t = Vec::with_capacity(d.len());
                for r in 0..d.nrows() {
                    for c in 0..d.ncols() {
                        if d[(r, c)] != 0.0 {
                            t.push((r, c, d[(r, c)] * self.scale));
                        }
                    }
                }
                t
            }
            SketchData::Sparse(rows) => rows
                .iter()
                .enumerate()
                .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v * self.scale)))
                .collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.m, self.n);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    /// `R v`.
    pub fn apply_to_vector(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: v.len() });
        }
        Ok(match &self.data {
            SketchData::SubSample(idx) => {
                DVector::from_iterator(self.m, idx.iter().map(|&i| v[i] * self.scale))
            }
            SketchData::Dense(d) => (d * v) * self.scale,
            SketchData::Sparse(rows) => DVector::from_iterator(
                self.m,
                rows.iter().map(|row| row.iter().map(|&(c, x)| x * v[c]).sum::<f64>() * self.scale),
            ),
        })
    }

    /// `R A` for an `n × k` matrix `A`.
    pub fn apply_left(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.nrows() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: a.nrows() });
        }
        let k = a.ncols();
        Ok(match &self.data {
            SketchData::SubSample(idx) => {
                DMatrix::from_fn(self.m, k, |r, c| a[(idx[r], c)] * self.scale)
            }
            SketchData::Dense(d) => (d * a) * self.scale,
            SketchData::Sparse(rows) => DMatrix::from_fn(self.m, k, |r, c| {
                rows[r].iter().map(|&(j, x)| x * a[(j, c)]).sum::<f64>() * self.scale
            }),
        })
    }

    /// The sketched Gram matrix `R K Rᵀ`.
    pub fn sketch_gram(&self, k: &GramMatrix) -> Result<DMatrix<f64>> {
        if k.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: k.n() });
        }
        let k = k.matrix();
        let out = match &self.data {
            SketchData::SubSample(idx) => {
                let s2 = self.scale * self.scale;
                DMatrix::from_fn(self.m, self.m, |r, c| k[(idx[r], idx[c])] * s2)
            }
            _ => {
                let rk = self.apply_left(k)?;
                let rkrt = self.apply_left(&rk.transpose())?;
                symmetrize(rkrt)
            }
        };
        Ok(out)
    }

    fn from_record(rec: SketchRecord) -> Result<Self> {
        let mut sketch = match (rec.kind, rec.indices) {
            (SketchKind::SubSample, Some(idx)) => {
                if idx.len() != rec.m {
                    return Err(invalid(format!(
                        "sketch record lists {} indices for m = {}",
                        idx.len(),
                        rec.m
                    )));
                }
                let mut s = SketchMatrix::subsample(idx, rec.n)?;
                s.seed = rec.seed;
                s
            }
            (kind, _) => SketchMatrix::draw(kind, rec.n, rec.m, rec.seed)?,
        };
        sketch.scale = rec.scale;
        Ok(sketch)
    }
}

fn symmetrize(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

fn draw_sparse_rows(m: usize, n: usize, q: f64, rng: &mut Rng) -> Vec<Vec<(usize, f64)>> {
    let sd = 1.0 / (m as f64 * q).sqrt();
    (0..m)
        .map(|_| loop {
            let row: Vec<(usize, f64)> = (0..n)
                .filter_map(|c| {
                    if rng.random::<f64>() < q {
                        let v = random::normal(rng) * sd;
                        (v != 0.0).then_some((c, v))
                    } else {
                        None
                    }
                })
                .collect();
            if !row.is_empty() {
                break row;
            }
        })
        .collect()
}

impl From<SketchMatrix> for SketchRecord {
    fn from(s: SketchMatrix) -> Self {
        let indices = match s.data {
            SketchData::SubSample(idx) => Some(idx),
            _ => None,
        };
        SketchRecord { kind: s.kind, m: s.m, n: s.n, seed: s.seed, scale: s.scale, indices }
    }
}

impl TryFrom<SketchRecord> for SketchMatrix {
    type Error = Error;

    fn try_from(rec: SketchRecord) -> Result<Self> {
        SketchMatrix::from_record(rec)
    }
}
