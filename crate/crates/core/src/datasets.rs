//! Synthetic data, string featurization and dataset files.
//!
//! # File formats
//!
//! | format         | content                                              |
//! |----------------|------------------------------------------------------|
//! | `vectors`      | CSV without header, one row per sample               |
//! | `fingerprints` | one line of `0`/`1` characters per sample            |
//! | `graphs`       | JSON array of `{"nodes": [..], "edges": [[u, v], ..]}` (an edge may carry a third label entry) |
//! | `strings`      | one string per line                                  |
//!
//! A [`Manifest`] (JSON) names the input and output file of each split, their
//! formats and an optional candidate file. Relative paths are resolved
//! against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::output::{Fingerprint, LabeledGraph, StructuredOutput};
use crate::random;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub d_x: usize,
    pub d_y: usize,
    /// Dimension of the output subspace.
    pub d: usize,
    pub noise_variance: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_train: 2000,
            n_val: 500,
            n_test: 1000,
            d_x: 100,
            d_y: 50,
            d: 10,
            noise_variance: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn paper_scale() -> Self {
        SyntheticSpec {
            n_train: 50_000,
            n_val: 5_000,
            n_test: 10_000,
            d_x: 2000,
            d_y: 1000,
            d: 50,
            noise_variance: 0.01,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_x == 0 || self.d_y == 0 {
            return Err(invalid("synthetic dimensions must be positive"));
        }
        if self.d >= self.d_y {
            return Err(invalid(format!(
                "latent dimension d = {} must be smaller than d_Y = {}",
                self.d, self.d_y
            )));
        }
        if self.n_train == 0 {
            return Err(invalid("n_train must be positive"));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(invalid(format!("noise variance must be >= 0, got {}", self.noise_variance)));
        }
        Ok(())
    }
}

/// The fixed maps shared by all splits: `y = U H x + ε` with
/// `x = input_map · g`, `g ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFactors {
    /// `d_Y × d`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// `d × d_X`.
    pub h: DMatrix<f64>,
    /// `d_X × d_X` square root of the input covariance.
    pub input_map: DMatrix<f64>,
}

impl SyntheticFactors {
    /// Random orthonormal `U`, standard normal `H`, and input covariance
    /// with random orthonormal eigenvectors and eigenvalues `j^{-1/2}`.
    pub fn draw(spec: &SyntheticSpec, rng: &mut random::Rng) -> Self {
        let u = random::orthonormal_columns(spec.d_y, spec.d, rng);
        let h = random::gaussian_matrix(spec.d, spec.d_x, rng);
        let mut input_map = random::orthonormal_columns(spec.d_x, spec.d_x, rng);
        for j in 0..spec.d_x {
            input_map.column_mut(j).scale_mut(((j + 1) as f64).powf(-0.25));
        }
        SyntheticFactors { u, h, input_map }
    }

    /// `U = H = I_dim` and identity input covariance.
    pub fn identity(dim: usize) -> Self {
        SyntheticFactors {
            u: DMatrix::identity(dim, dim),
            h: DMatrix::identity(dim, dim),
            input_map: DMatrix::identity(dim, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSplit {
    /// `n × d_X`
    pub x: DMatrix<f64>,
    /// `n × d_Y`
    pub y: DMatrix<f64>,
}

impl VectorSplit {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn outputs(&self) -> Vec<StructuredOutput> {
        matrix_rows(&self.y)
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<StructuredOutput> {
    m.row_iter().map(|r| StructuredOutput::Dense(r.iter().copied().collect())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: VectorSplit,
    pub val: VectorSplit,
    pub test: VectorSplit,
    pub factors: SyntheticFactors,
}

/// Deterministic in `spec.seed`. Factors are drawn first, then the train,
/// validation and test samples in that order.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = random::rng(spec.seed);
    let factors = SyntheticFactors::draw(spec, &mut rng);
    sample_splits(spec, factors, &mut rng)
}

/// Samples splits from given factors. Only the factor shapes are checked, so
/// degenerate cases such as `d = d_Y` with identity factors are allowed.
pub fn gen_synthetic_with_factors(spec: &SyntheticSpec, factors: SyntheticFactors) -> Result<SyntheticData> {
    let d_x = factors.input_map.nrows();
    if factors.input_map.ncols() != d_x || factors.h.ncols() != d_x {
        return Err(Error::DimensionMismatch { expected: d_x, found: factors.h.ncols() });
    }
    if factors.u.ncols() != factors.h.nrows() {
        return Err(Error::DimensionMismatch { expected: factors.h.nrows(), found: factors.u.ncols() });
    }
    if !(spec.noise_variance >= 0.0) {
        return Err(invalid("noise variance must be >= 0"));
    }
    let spec = SyntheticSpec { d_x, d_y: factors.u.nrows(), d: factors.h.nrows(), ..*spec };
    let mut rng = random::rng(spec.seed);
    sample_splits(&spec, factors, &mut rng)
}

fn sample_splits(spec: &SyntheticSpec, factors: SyntheticFactors, rng: &mut random::Rng) -> Result<SyntheticData> {
    let sigma = spec.noise_variance.sqrt();
    let map = &factors.u * &factors.h;
    let mut draw = |n: usize| {
        let g = random::gaussian_matrix(n, spec.d_x, rng);
        let x = g * factors.input_map.transpose();
        let noise = random::gaussian_matrix(n, spec.d_y, rng);
        let y = &x * map.transpose() + noise * sigma;
        VectorSplit { x, y }
    };
    let train = draw(spec.n_train);
    let val = draw(spec.n_val);
    let test = draw(spec.n_test);
    Ok(SyntheticData { train, val, test, factors })
}

/// Character n-gram vocabulary in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub n: usize,
    pub grams: IndexMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }
}

fn char_ngrams(s: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    let chars: Vec<char> = s.chars().collect();
    let count = chars.len().saturating_sub(n - 1);
    (0..count).map(move |i| chars[i..i + n].iter().collect())
}

/// Count matrix (`strings × vocabulary`). Without a vocabulary one is built
/// from `strings`; with one, unknown n-grams are dropped.
pub fn ngram_featurize<S: AsRef<str>>(
    strings: &[S],
    n: usize,
    vocabulary: Option<&Vocabulary>,
) -> Result<(DMatrix<f64>, Vocabulary)> {
    if n == 0 {
        return Err(invalid("n-gram length must be at least 1"));
    }
    let vocab = match vocabulary {
        Some(v) => {
            if v.n != n {
                return Err(invalid(format!("vocabulary holds {}-grams, asked for {n}-grams", v.n)));
            }
            v.clone()
        }
        None => {
            let mut grams = IndexMap::new();
            for s in strings {
                for g in char_ngrams(s.as_ref(), n) {
                    let next = grams.len();
                    grams.entry(g).or_insert(next);
                }
            }
            Vocabulary { n, grams }
        }
    };
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let mut counts = DMatrix::zeros(strings.len(), vocab.len());
    for (i, s) in strings.iter().enumerate() {
        for g in char_ngrams(s.as_ref(), n) {
            if let Some(&j) = vocab.grams.get(&g) {
                counts[(i, j)] += 1.0;
            }
        }
    }
    Ok((counts, vocab))
}

const ATOMS: [&str; 4] = ["C", "N", "O", "S"];

/// Toy molecule-like pairs: a SMILES-flavoured string and the labeled graph
/// it spells. Chains of 4 to 10 atoms (labels `C=0, N=1, O=2, S=3`), an
/// optional one-atom branch written `(X)`, and with probability 0.3 a ring
/// closure marked by a pair of `1` digits. All returned strings are distinct.
pub fn gen_toy_molecules(n: usize, seed: u64) -> Vec<(String, LabeledGraph)> {
    let mut rng = random::rng(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (s, g) = toy_molecule(&mut rng);
        if seen.insert(s.clone()) {
            out.push((s, g));
        }
    }
    out
}

fn toy_molecule(rng: &mut random::Rng) -> (String, LabeledGraph) {
    let len = rng.random_range(4..=10usize);
    let mut labels: Vec<i64> = (0..len).map(|_| rng.random_range(0..4)).collect();
    let mut pairs: Vec<(usize, usize)> = (1..len).map(|i| (i - 1, i)).collect();
    let ring = rng.random_bool(0.3).then(|| {
        let start = rng.random_range(0..len - 2);
        let end = rng.random_range(start + 2..len);
        (start, end)
    });
    if let Some((a, b)) = ring {
        pairs.push((a, b));
    }
    let branch = rng.random_bool(0.5).then(|| (rng.random_range(0..len), rng.random_range(0..4i64)));
    if let Some((at, label)) = branch {
        labels.push(label);
        pairs.push((at, len));
    }
    let mut s = String::new();
    for (i, &l) in labels[..len].iter().enumerate() {
        s.push_str(ATOMS[l as usize]);
        if ring.is_some_and(|(a, b)| i == a || i == b) {
            s.push('1');
        }
        if let Some((at, bl)) = branch {
            if at == i {
                s.push('(');
                s.push_str(ATOMS[bl as usize]);
                s.push(')');
            }
        }
    }
    let g = LabeledGraph::from_pairs(labels, &pairs).expect("generated graph is simple");
    (s, g)
}

/// Index of every `query` in `candidates` (first match) by equality.
pub fn truth_indices(queries: &[StructuredOutput], candidates: &[StructuredOutput]) -> Result<Vec<usize>> {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            candidates
                .iter()
                .position(|c| c == q)
                .ok_or_else(|| invalid(format!("item {i} has no matching candidate")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Vectors,
    Fingerprints,
    Graphs,
    Strings,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vectors" => Ok(DataFormat::Vectors),
            "fingerprints" => Ok(DataFormat::Fingerprints),
            "graphs" => Ok(DataFormat::Graphs),
            "strings" => Ok(DataFormat::Strings),
            other => Err(invalid(format!("unknown data format `{other}`"))),
        }
    }
}

/// Inputs of one split.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Vectors(DMatrix<f64>),
    Strings(Vec<String>),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Vectors(m) => m.nrows(),
            Inputs::Strings(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), line, message: message.into() }
}

/// Header-less CSV of numbers; every row must have the same length.
pub fn load_vectors(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(open(path)?);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if cols.is_some_and(|c| c != record.len()) {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", cols.unwrap_or(0), record.len()),
            ));
        }
        cols = Some(record.len());
        for (f, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                parse_error(path, line, format!("field {}: `{field}` is not a number", f + 1))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &data))
}

pub fn save_vectors(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let reader = BufReader::new(open(path)?);
    let mut lines = Vec::new();
    for line in reader.lines() {
        lines.push(line?.trim_end_matches('\r').to_string());
    }
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

pub fn load_strings(path: &Path) -> Result<Vec<String>> {
    read_lines(path)
}

pub fn save_strings<S: AsRef<str>>(path: &Path, strings: &[S]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for s in strings {
        let s = s.as_ref();
        if s.contains('\n') {
            return Err(invalid("strings saved one per line cannot contain newlines"));
        }
        writeln!(w, "{s}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_inputs(path: &Path, format: DataFormat) -> Result<Inputs> {
    match format {
        DataFormat::Vectors => Ok(Inputs::Vectors(load_vectors(path)?)),
        DataFormat::Strings => Ok(Inputs::Strings(load_strings(path)?)),
        other => Err(invalid(format!("{other:?} files cannot hold inputs"))),
    }
}

pub fn save_inputs(path: &Path, inputs: &Inputs) -> Result<()> {
    match inputs {
        Inputs::Vectors(m) => save_vectors(path, m),
        Inputs::Strings(s) => save_strings(path, s),
    }
}

pub fn load_outputs(path: &Path, format: DataFormat) -> Result<Vec<StructuredOutput>> {
    match format {
        DataFormat::Vectors => Ok(matrix_rows(&load_vectors(path)?)),
        DataFormat::Fingerprints => read_lines(path)?
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                l.trim()
                    .parse::<Fingerprint>()
                    .map(StructuredOutput::Fingerprint)
                    .map_err(|e| parse_error(path, i + 1, e.to_string()))
            })
            .collect(),
        DataFormat::Graphs => {
            let text = fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
                _ => Error::Io(e),
            })?;
            let graphs: Vec<LabeledGraph> =
                serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e.to_string()))?;
            Ok(graphs.into_iter().map(StructuredOutput::Graph).collect())
        }
        DataFormat::Strings => Err(invalid("strings are not an output format")),
    }
}

pub fn save_outputs(path: &Path, outputs: &[StructuredOutput], format: DataFormat) -> Result<()> {
    let mismatch = |y: &StructuredOutput| invalid(format!("cannot write a {} as {format:?}", y.variant_name()));
    match format {
        DataFormat::Vectors => {
            let dim = outputs.first().and_then(|y| y.as_dense()).map_or(0, <[f64]>::len);
            let mut m = DMatrix::zeros(outputs.len(), dim);
            for (i, y) in outputs.iter().enumerate() {
                let v = y.as_dense().ok_or_else(|| mismatch(y))?;
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: v.len() });
                }
                m.row_mut(i).copy_from_slice(v);
            }
            save_vectors(path, &m)
        }
        DataFormat::Fingerprints => {
            let lines = outputs
                .iter()
                .map(|y| y.as_fingerprint().map(|f| f.to_string()).ok_or_else(|| mismatch(y)))
                .collect::<Result<Vec<_>>>()?;
            save_strings(path, &lines)
        }
        DataFormat::Graphs => {
            let graphs = outputs
                .iter()
                .map(|y| y.as_graph().ok_or_else(|| mismatch(y)))
                .collect::<Result<Vec<_>>>()?;
            fs::write(path, serde_json::to_string(&graphs)?)?;
            Ok(())
        }
        DataFormat::Strings => Err(invalid("strings are not an output format")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFiles {
    pub inputs: PathBuf,
    pub outputs: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub input_format: DataFormat,
    pub output_format: DataFormat,
    pub train: SplitFiles,
    pub val: SplitFiles,
    pub test: SplitFiles,
    /// Candidate outputs, in `output_format`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<PathBuf>,
    /// Free-form provenance, such as the generating spec.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub metadata: serde_json::Value,
    #[serde(skip)]
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Inputs,
    pub outputs: Vec<StructuredOutput>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let mut m: Manifest =
            serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e.to_string()))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn load_split(&self, files: &SplitFiles) -> Result<Split> {
        let inputs = load_inputs(&self.resolve(&files.inputs), self.input_format)?;
        let outputs = load_outputs(&self.resolve(&files.outputs), self.output_format)?;
        if inputs.len() != outputs.len() {
            return Err(invalid(format!(
                "{} holds {} inputs but {} holds {} outputs",
                files.inputs.display(),
                inputs.len(),
                files.outputs.display(),
                outputs.len()
            )));
        }
        Ok(Split { inputs, outputs })
    }

    pub fn load_candidates(&self) -> Result<Option<Vec<StructuredOutput>>> {
        self.candidates.as_ref().map(|c| load_outputs(&self.resolve(c), self.output_format)).transpose()
    }
}
