//! Structured output values: dense vectors, binary fingerprints and
//! node-labeled undirected graphs.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One element of the output domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum StructuredOutput {
    Dense(Vec<f64>),
    Fingerprint(Fingerprint),
    Graph(LabeledGraph),
}

impl StructuredOutput {
    pub fn variant_name(&self) -> &'static str {
        match self {
            StructuredOutput::Dense(_) => "dense vector",
            StructuredOutput::Fingerprint(_) => "fingerprint",
            StructuredOutput::Graph(_) => "graph",
        }
    }

    pub fn as_dense(&self) -> Option<&[f64]> {
        match self {
            StructuredOutput::Dense(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_fingerprint(&self) -> Option<&Fingerprint> {
        match self {
            StructuredOutput::Fingerprint(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_graph(&self) -> Option<&LabeledGraph> {
        match self {
            StructuredOutput::Graph(g) => Some(g),
            _ => None,
        }
    }
}

impl From<Vec<f64>> for StructuredOutput {
    fn from(v: Vec<f64>) -> Self {
        StructuredOutput::Dense(v)
    }
}

impl From<Fingerprint> for StructuredOutput {
    fn from(f: Fingerprint) -> Self {
        StructuredOutput::Fingerprint(f)
    }
}

impl From<LabeledGraph> for StructuredOutput {
    fn from(g: LabeledGraph) -> Self {
        StructuredOutput::Graph(g)
    }
}

/// A fixed-length bit vector marking substructure presence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Fingerprint {
    bits: Vec<bool>,
}

impl Fingerprint {
    pub fn new(bits: Vec<bool>) -> Self {
        Fingerprint { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl std::str::FromStr for Fingerprint {
    type Err = Error;

    /// Parses a string of `0`/`1` characters.
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(format!(
                    "fingerprint character {other:?} is not 0 or 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fingerprint { bits })
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl From<Fingerprint> for String {
    fn from(f: Fingerprint) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for Fingerprint {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub label: Option<i64>,
}

/// Undirected graph with integer node labels and optional integer edge
/// labels. Nodes are indexed `0..n`; no self-loops, no duplicate edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct LabeledGraph {
    labels: Vec<i64>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
}

impl LabeledGraph {
    pub fn new(labels: Vec<i64>, edges: Vec<Edge>) -> Result<Self> {
        let n = labels.len();
        let mut seen = HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for e in &edges {
            if e.u >= n || e.v >= n {
                return Err(Error::MalformedGraph(format!(
                    "edge ({}, {}) references a node outside 0..{n}",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::MalformedGraph(format!("self-loop on node {}", e.u)));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::MalformedGraph(format!(
                    "duplicate edge ({}, {})",
                    e.u, e.v
                )));
            }
            adjacency[e.u].push(e.v);
            adjacency[e.v].push(e.u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(LabeledGraph { labels, edges, adjacency })
    }

    /// Convenience constructor for unlabeled edges.
    pub fn from_pairs(labels: Vec<i64>, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs.iter().map(|&(u, v)| Edge { u, v, label: None }).collect();
        Self::new(labels, edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    nodes: Vec<i64>,
    edges: Vec<Vec<i64>>,
}

impl TryFrom<RawGraph> for LabeledGraph {
    type Error = Error;

    fn try_from(raw: RawGraph) -> Result<Self> {
        let mut edges = Vec::with_capacity(raw.edges.len());
        for (i, e) in raw.edges.iter().enumerate() {
            if !(2..=3).contains(&e.len()) {
                return Err(Error::MalformedGraph(format!(
                    "edge #{i} must be [u, v] or [u, v, label], found {} fields",
                    e.len()
                )));
            }
            let node = |x: i64| {
                usize::try_from(x).map_err(|_| {
                    Error::MalformedGraph(format!("edge #{i} has negative node index {x}"))
                })
            };
            edges.push(Edge { u: node(e[0])?, v: node(e[1])?, label: e.get(2).copied() });
        }
        LabeledGraph::new(raw.nodes, edges)
    }
}

impl From<LabeledGraph> for RawGraph {
    fn from(g: LabeledGraph) -> Self {
        let edges = g
            .edges
            .iter()
            .map(|e| {
                let mut row = vec![e.u as i64, e.v as i64];
                row.extend(e.label);
                row
            })
            .collect();
        RawGraph { nodes: g.labels, edges }
    }
}
