use std::fs::{self, File};
use std::path::{Path, PathBuf};

use dsokr::datasets::{DataFormat, Manifest};
use dsokr::metrics::mse;
use dsokr::pipeline::fit_dsokr;
use dsokr::regressor::{train, Activation, MlpRegressor};
use dsokr::{KernelKind, SketchMatrix, SketchedBasis, StructuredOutput};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{parse_hidden, FitConfig, Widths, Overrides};
use crate::run::{create_dir, write_run, Featurizer};
use crate::{usage, CliResult};

pub const BASIS_FILE: &str = "basis.json";
pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// JSON config file; flags given here take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output kernel, e.g. `linear`, `gaussian:0.1`, `wl:2+norm`.
    #[arg(long)]
    kernel: Option<String>,
    /// `subsample`, `gaussian` or `sparse[:q]`.
    #[arg(long)]
    sketch: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden widths, comma separated; `none` for a single-layer perceptron.
    #[arg(long, value_parser = parse_hidden)]
    hidden: Option<Widths>,
    #[arg(long, value_parser = parse_activation)]
    activation: Option<Activation>,
    #[arg(long)]
    ngram: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Train a network directly on the raw output vectors instead.
    #[arg(long)]
    no_sketch_baseline: bool,
    /// Model directory to create.
    #[arg(long)]
    out: PathBuf,
}

fn parse_activation(s: &str) -> Result<Activation, String> {
    s.parse().map_err(|e: dsokr::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dsokr,
    Baseline,
}

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub featurizer: Featurizer,
    pub net: MlpRegressor,
}

pub struct LoadedModel {
    pub file: ModelFile,
    pub basis: Option<SketchedBasis>,
}

pub fn load_model(dir: &Path) -> CliResult<LoadedModel> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))
    };
    let file: ModelFile = serde_json::from_str(&read(MODEL_FILE)?)?;
    let basis = match file.kind {
        ModelKind::Dsokr => Some(load_basis(&dir.join(BASIS_FILE))?),
        ModelKind::Baseline => None,
    };
    Ok(LoadedModel { file, basis })
}

pub fn load_basis(path: &Path) -> CliResult<SketchedBasis> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Output vectors as matrix rows; the dense baseline needs them.
pub fn output_matrix(ys: &[StructuredOutput]) -> CliResult<DMatrix<f64>> {
    let rows: Vec<&[f64]> = ys
        .iter()
        .map(|y| y.as_dense().ok_or_else(|| usage("the dense baseline needs vector outputs")))
        .collect::<CliResult<_>>()?;
    let d = rows.first().map_or(0, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(dsokr::Error::DimensionMismatch { expected: d, found: bad.len() }.into());
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub fn run(args: Args) -> CliResult<()> {
    let cfg = FitConfig::load(args.config.as_deref())?.apply(Overrides {
        kernel: args.kernel,
        sketch: args.sketch,
        m: args.m,
        seed: args.seed,
        hidden: args.hidden.map(|w| w.0),
        activation: args.activation,
        ngram: args.ngram,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        max_epochs: args.epochs,
        patience: args.patience,
    });
    cfg.train.validate()?;
    let manifest = Manifest::load(&args.data)?;
    let train_split = manifest.load_split(&manifest.train)?;
    let val_split = manifest.load_split(&manifest.val)?;
    let (featurizer, x_train) = Featurizer::fit(&train_split.inputs, cfg.ngram)?;
    let x_val = featurizer.apply(&val_split.inputs)?;
    create_dir(&args.out)?;

    let net_cfg = cfg.net();
    let mut summary = json!({ "config": cfg, "seeds": { "sketch": cfg.seed, "net": net_cfg.seed, "train": cfg.train.seed } });
    let (file, history) = if args.no_sketch_baseline {
        if manifest.output_format != DataFormat::Vectors {
            return Err(usage("--no-sketch-baseline needs vector outputs"));
        }
        let y_train = output_matrix(&train_split.outputs)?;
        let y_val = output_matrix(&val_split.outputs)?;
        let init = MlpRegressor::init(&net_cfg.layer_dims(x_train.ncols(), y_train.ncols()), net_cfg.activation, net_cfg.seed)?;
        let (net, history) = train(&init, &x_train, &y_train, Some((&x_val, &y_val)), &cfg.train)?;
        summary["val_output_mse"] = json!(mse(&net.predict(&x_val)?, &y_val)?);
        (ModelFile { kind: ModelKind::Baseline, featurizer, net }, history)
    } else {
        let kernel = cfg.kernel_spec()?;
        let n = train_split.outputs.len();
        let m = cfg.m.ok_or_else(|| usage("a sketch size is required (--m or `m` in the config)"))?;
        let sketch = SketchMatrix::draw(cfg.sketch_kind()?, n, m, cfg.seed)?;
        let (model, history) = fit_dsokr(&kernel, &sketch, &x_train, &train_split.outputs, Some((&x_val, &val_split.outputs)), &net_cfg, &cfg.train)?;
        let coef_val = model.coefficients(&x_val)?;
        summary["rank"] = json!(model.basis.rank());
        summary["val_coef_mse"] = json!(mse(&coef_val, &model.basis.feature_matrix(&val_split.outputs)?)?);
        if matches!(kernel.kind, KernelKind::Linear) && !kernel.normalize {
            summary["val_output_mse"] = json!(mse(&model.basis.reconstruct_linear_rows(&coef_val)?, &output_matrix(&val_split.outputs)?)?);
        }
        fs::write(args.out.join(BASIS_FILE), serde_json::to_string(&model.basis)?)?;
        (ModelFile { kind: ModelKind::Dsokr, featurizer, net: model.net }, history)
    };
    fs::write(args.out.join(MODEL_FILE), serde_json::to_string(&file)?)?;
    history.write_csv(File::create(args.out.join(HISTORY_FILE))?)?;
    summary["kind"] = json!(file.kind);
    summary["parameters"] = json!(file.net.num_parameters());
    summary["epochs"] = json!(history.epochs.len());
    summary["best_epoch"] = json!(history.best_epoch);
    summary["data"] = json!(args.data);
    write_run(&args.out, "fit", summary.clone())?;
    for key in ["rank", "parameters", "best_epoch", "val_coef_mse", "val_output_mse"] {
        if !summary[key].is_null() {
            println!("{key}: {}", summary[key]);
        }
    }
    Ok(())
}
