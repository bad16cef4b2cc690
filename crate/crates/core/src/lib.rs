//! Deep sketched output kernel regression.
//!
//! Structured outputs (vectors, fingerprints, graphs) are compared through an
//! output kernel. A random sketch of the training Gram matrix yields a finite
//! orthonormal basis of the output feature space ([`basis`]); a neural
//! network ([`regressor`]) is trained to predict coordinates in that basis,
//! and predictions are decoded by scoring a candidate set ([`decode`]).
//!
//! Supporting modules cover sketch-size selection ([`selection`]), ensembles
//! of independently sketched models ([`ensemble`]), synthetic data and file
//! formats ([`datasets`]) and evaluation ([`metrics`]). [`pipeline`] ties a
//! basis and a network into one model.

pub mod basis;
pub mod datasets;
pub mod decode;
pub mod ensemble;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod output;
pub mod pipeline;
pub mod random;
pub mod regressor;
pub mod selection;
pub mod sketch;

pub use basis::{fit_basis, fit_basis_with_gram, SketchedBasis, DEFAULT_RANK_TOL};
pub use error::{Error, Result};
pub use kernels::{cross_gram, eval, gram, kernel_loss, GramMatrix, KernelKind, KernelSpec};
pub use output::{Edge, Fingerprint, LabeledGraph, StructuredOutput};
pub use sketch::{SketchKind, SketchMatrix};
