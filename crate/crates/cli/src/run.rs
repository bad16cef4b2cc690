//! Run manifests and the input featurizer shared by the commands.

use std::fs;
use std::path::Path;

use dsokr::datasets::{ngram_featurize, Inputs, Vocabulary};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::CliResult;

pub const RUN_FILE: &str = "run.json";

/// Writes `run.json` with the exact invocation alongside `body`.
pub fn write_run(dir: &Path, command: &str, body: Value) -> CliResult<()> {
    let mut record = json!({
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    if let (Some(r), Value::Object(b)) = (record.as_object_mut(), body) {
        r.extend(b);
    }
    fs::write(dir.join(RUN_FILE), serde_json::to_string_pretty(&record)?)?;
    Ok(())
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// How raw inputs of a split become network inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurizer {
    Vectors { dim: usize },
    Ngrams { vocabulary: Vocabulary },
}

impl Featurizer {
    /// Builds the featurizer from training inputs and returns their features.
    pub fn fit(inputs: &Inputs, n: usize) -> CliResult<(Self, DMatrix<f64>)> {
        Ok(match inputs {
            Inputs::Vectors(x) => (Featurizer::Vectors { dim: x.ncols() }, x.clone()),
            Inputs::Strings(s) => {
                let (x, vocabulary) = ngram_featurize(s, n, None)?;
                (Featurizer::Ngrams { vocabulary }, x)
            }
        })
    }

    pub fn apply(&self, inputs: &Inputs) -> CliResult<DMatrix<f64>> {
        match (self, inputs) {
            (Featurizer::Vectors { dim }, Inputs::Vectors(x)) => {
                if x.ncols() != *dim {
                    return Err(dsokr::Error::DimensionMismatch { expected: *dim, found: x.ncols() }.into());
                }
                Ok(x.clone())
            }
            (Featurizer::Ngrams { vocabulary }, Inputs::Strings(s)) => Ok(ngram_featurize(s, vocabulary.n, Some(vocabulary))?.0),
            _ => Err(crate::usage("input format differs from the one the model was trained on")),
        }
    }
}
