//! Effective `fit` configuration: flags override the config file, which
//! overrides the defaults.

use std::path::Path;

use dsokr::pipeline::NetConfig;
use dsokr::regressor::{Activation, TrainConfig};
use dsokr::{KernelSpec, SketchKind};
use serde::{Deserialize, Serialize};

use crate::{usage, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub kernel: String,
    pub sketch: String,
    /// Sketch size; unused by the dense baseline.
    pub m: Option<usize>,
    /// Sketch seed; the network and the shuffling use `seed + 1` and `seed + 2`.
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// n-gram length for string inputs.
    pub ngram: usize,
    pub train: TrainConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            kernel: "linear".into(),
            sketch: "subsample".into(),
            m: None,
            seed: 0,
            hidden: Vec::new(),
            activation: Activation::Relu,
            ngram: 3,
            train: TrainConfig::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the lower layers alone.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub kernel: Option<String>,
    pub sketch: Option<String>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
    pub ngram: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

impl FitConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else { return Ok(FitConfig::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn apply(mut self, o: Overrides) -> Self {
        macro_rules! take {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        take!(self.kernel, o.kernel);
        take!(self.sketch, o.sketch);
        take!(self.seed, o.seed);
        take!(self.hidden, o.hidden);
        take!(self.activation, o.activation);
        take!(self.ngram, o.ngram);
        take!(self.train.learning_rate, o.learning_rate);
        take!(self.train.batch_size, o.batch_size);
        take!(self.train.max_epochs, o.max_epochs);
        take!(self.train.patience, o.patience);
        if o.m.is_some() {
            self.m = o.m;
        }
        self.train.seed = self.seed.wrapping_add(2);
        self
    }

    pub fn kernel_spec(&self) -> CliResult<KernelSpec> {
        Ok(self.kernel.parse()?)
    }

    pub fn sketch_kind(&self) -> CliResult<SketchKind> {
        Ok(self.sketch.parse()?)
    }

    pub fn net(&self) -> NetConfig {
        NetConfig { hidden: self.hidden.clone(), activation: self.activation, seed: self.seed.wrapping_add(1) }
    }
}

/// Hidden layer widths as one flag value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Widths(pub Vec<usize>);

/// `none` or an empty string for no hidden layer, else comma-separated widths.
pub fn parse_hidden(s: &str) -> Result<Widths, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        return Ok(Widths(Vec::new()));
    }
    s.split(',').map(|w| w.trim().parse::<usize>().map_err(|e| format!("bad layer width `{w}`: {e}"))).collect::<Result<_, _>>().map(Widths)
}
