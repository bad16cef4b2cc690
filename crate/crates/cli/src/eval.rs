use std::fs::{self, File};
use std::path::{Path, PathBuf};

use dsokr::datasets::{load_outputs, Manifest, Split};
use dsokr::decode::{decode_batch, write_decode_csv, CandidateSet, DecodeRecord};
use dsokr::ensemble::{aggregate, aggregate_scores, AggregationMode};
use dsokr::metrics::{mse, rank_of_truth, retrieval_metrics};
use dsokr::{KernelKind, KernelSpec, SketchedBasis, StructuredOutput};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::fit::{load_basis, load_model, output_matrix, ModelKind, BASIS_FILE};
use crate::run::{create_dir, write_run};
use crate::{usage, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// Model directory written by `fit`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Basis file; defaults to the one in the model directory.
    #[arg(long)]
    basis: Option<PathBuf>,
    /// Candidate outputs in the manifest's output format; defaults to the
    /// manifest's candidate file.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Kernel the candidates are meant for; must match every basis.
    #[arg(long)]
    kernel: Option<String>,
    /// Use the true outputs' coefficients instead of a trained network.
    #[arg(long)]
    perfect_h: bool,
    /// JSON file `{"mode": .., "weights": [..], "models": [dir, ..]}`.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    /// Decode with `2⟨z, ψ̃(c)⟩ - k(c, c)` for kernels without unit diagonal.
    #[arg(long)]
    allow_unnormalized: bool,
    /// Metrics JSON path; defaults to `metrics.json` in `--out`.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleFile {
    #[serde(default = "default_mode")]
    mode: String,
    weights: Option<Vec<f64>>,
    models: Vec<PathBuf>,
}

fn default_mode() -> String {
    "rank-sum".into()
}

fn check_kernel(expected: Option<&KernelSpec>, basis: &SketchedBasis) -> CliResult<()> {
    match expected {
        Some(k) if k != basis.kernel() => {
            Err(usage(format!("kernel mismatch: candidates are for {k}, the basis was fit with {}", basis.kernel())))
        }
        _ => Ok(()),
    }
}

fn candidate_set(basis: &SketchedBasis, outputs: Vec<StructuredOutput>, allow: bool) -> CliResult<CandidateSet> {
    Ok(if allow { CandidateSet::new_allow_unnormalized(basis, outputs)? } else { CandidateSet::new(basis, outputs)? })
}

/// Indices of the true outputs among the candidates, when all are present.
fn truth(outputs: &[StructuredOutput], candidates: &[StructuredOutput]) -> Option<Vec<usize>> {
    dsokr::datasets::truth_indices(outputs, candidates).ok()
}

struct Predictor {
    basis: SketchedBasis,
    coefficients: DMatrix<f64>,
}

fn predictor(dir: &Path, basis_override: Option<&Path>, split: &Split, perfect_h: bool) -> CliResult<Predictor> {
    if perfect_h {
        let path = match basis_override {
            Some(p) => p.to_path_buf(),
            None => dir.join(BASIS_FILE),
        };
        let basis = load_basis(&path)?;
        let coefficients = basis.feature_matrix(&split.outputs)?;
        return Ok(Predictor { basis, coefficients });
    }
    let model = load_model(dir)?;
    let basis = match (basis_override, model.basis) {
        (Some(p), _) => load_basis(p)?,
        (None, Some(b)) => b,
        (None, None) => return Err(usage("the dense baseline has no basis; it only supports output MSE")),
    };
    let coefficients = model.file.net.predict(&model.file.featurizer.apply(&split.inputs)?)?;
    if coefficients.ncols() != basis.rank() {
        return Err(dsokr::Error::DimensionMismatch { expected: basis.rank(), found: coefficients.ncols() }.into());
    }
    Ok(Predictor { basis, coefficients })
}

fn retrieval(records: &[DecodeRecord]) -> CliResult<Value> {
    let ranks: Option<Vec<usize>> = records.iter().map(|r| r.rank_of_true).collect();
    Ok(match ranks {
        Some(r) if !r.is_empty() => serde_json::to_value(retrieval_metrics(&r)?)?,
        _ => Value::Null,
    })
}

pub fn run(args: Args) -> CliResult<()> {
    let manifest = Manifest::load(&args.data)?;
    let files = match args.split {
        SplitName::Train => &manifest.train,
        SplitName::Val => &manifest.val,
        SplitName::Test => &manifest.test,
    };
    let split = manifest.load_split(files)?;
    let candidates = match &args.candidates {
        Some(p) => Some(load_outputs(p, manifest.output_format)?),
        None => manifest.load_candidates()?,
    };
    let kernel: Option<KernelSpec> = args.kernel.as_deref().map(str::parse).transpose()?;
    create_dir(&args.out)?;
    let mut metrics = json!({ "split": format!("{:?}", args.split).to_lowercase(), "count": split.outputs.len() });

    let records = if let Some(path) = &args.ensemble {
        let records = ensemble(path, &split, candidates, kernel.as_ref(), &args)?;
        metrics["ensemble"] = json!(path);
        Some(records)
    } else {
        let dir = args.model.clone().unwrap_or_default();
        if args.model.is_none() && !(args.perfect_h && args.basis.is_some()) {
            return Err(usage("pass --model, or --perfect-h with --basis"));
        }
        if !args.perfect_h && args.basis.is_none() {
            let model = load_model(&dir)?;
            if model.file.kind == ModelKind::Baseline {
                let pred = model.file.net.predict(&model.file.featurizer.apply(&split.inputs)?)?;
                metrics["output_mse"] = json!(mse(&pred, &output_matrix(&split.outputs)?)?);
                return finish(&args, metrics, None);
            }
        }
        let p = predictor(&dir, args.basis.as_deref(), &split, args.perfect_h)?;
        check_kernel(kernel.as_ref(), &p.basis)?;
        metrics["kernel"] = json!(p.basis.kernel().to_string());
        metrics["rank"] = json!(p.basis.rank());
        if !args.perfect_h {
            metrics["coef_mse"] = json!(mse(&p.coefficients, &p.basis.feature_matrix(&split.outputs)?)?);
        }
        let k = p.basis.kernel();
        if matches!(k.kind, KernelKind::Linear) && !k.normalize {
            metrics["output_mse"] = json!(mse(&p.basis.reconstruct_linear_rows(&p.coefficients)?, &output_matrix(&split.outputs)?)?);
        }
        match candidates {
            Some(c) => {
                let t = truth(&split.outputs, &c);
                let set = candidate_set(&p.basis, c, args.allow_unnormalized)?;
                Some(decode_batch(&p.coefficients, &set, t.as_deref())?)
            }
            None => None,
        }
    };
    finish(&args, metrics, records)
}

fn finish(args: &Args, mut metrics: Value, records: Option<Vec<DecodeRecord>>) -> CliResult<()> {
    if let Some(records) = &records {
        write_decode_csv(records, File::create(args.out.join("decode.csv"))?)?;
        metrics["retrieval"] = retrieval(records)?;
    }
    let path = args.metrics.clone().unwrap_or_else(|| args.out.join("metrics.json"));
    fs::write(&path, serde_json::to_string_pretty(&metrics)?)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    write_run(&args.out, "eval", json!({ "metrics": metrics, "data": args.data, "model": args.model, "perfect_h": args.perfect_h }))
}

fn ensemble(
    path: &Path,
    split: &Split,
    candidates: Option<Vec<StructuredOutput>>,
    kernel: Option<&KernelSpec>,
    args: &Args,
) -> CliResult<Vec<DecodeRecord>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let spec: EnsembleFile = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mode: AggregationMode = spec.mode.parse()?;
    if spec.models.is_empty() {
        return Err(usage("the ensemble lists no models"));
    }
    let candidates = candidates.ok_or_else(|| usage("ensemble decoding needs a candidate set"))?;
    let root = path.parent().unwrap_or(Path::new(""));
    let mut per_model = Vec::with_capacity(spec.models.len());
    for dir in &spec.models {
        let dir = if dir.is_absolute() { dir.clone() } else { root.join(dir) };
        let p = predictor(&dir, None, split, args.perfect_h)?;
        check_kernel(kernel, &p.basis)?;
        let set = candidate_set(&p.basis, candidates.clone(), args.allow_unnormalized)?;
        per_model.push(set.score_matrix(&p.coefficients)?);
    }
    let t = truth(&split.outputs, &candidates);
    (0..split.outputs.len())
        .map(|i| {
            let rows: Vec<Vec<f64>> = per_model.iter().map(|s| s.row(i).iter().copied().collect()).collect();
            let fused = aggregate_scores(mode, spec.weights.as_deref(), &rows)?;
            let predicted = aggregate(mode, spec.weights.as_deref(), &rows)?[0];
            let rank_of_true = t.as_ref().map(|t| rank_of_truth(&fused, t[i])).transpose()?;
            Ok(DecodeRecord { test_id: i, predicted, score: fused[predicted], rank_of_true })
        })
        .collect()
}
