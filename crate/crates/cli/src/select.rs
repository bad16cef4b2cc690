use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use dsokr::datasets::Manifest;
use dsokr::selection::{approximate_leverage_scores, perfect_h_sweep, suggest_m, SweepTask, DEFAULT_REPLICATES, DEFAULT_SUGGEST_TOL};
use dsokr::{KernelSpec, SketchKind, StructuredOutput};
use serde_json::json;

use crate::run::{create_dir, write_run};
use crate::{usage, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    /// Validation MSE in the output space (linear kernel).
    Mse,
    /// Validation MRR against the candidate set.
    Mrr,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "linear")]
    kernel: String,
    #[arg(long, default_value = "subsample")]
    sketch: String,
    /// Sketch sizes to sweep with Perfect h, comma separated and ascending.
    #[arg(long, value_delimiter = ',')]
    ms: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compute approximate ridge leverage scores of the training Gram.
    #[arg(long)]
    als: bool,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Leverage-score subsample size; defaults to the nearest integer to √n.
    #[arg(long)]
    ns: Option<usize>,
    #[arg(long, value_enum, default_value = "mse")]
    task: Task,
    /// Relative tolerance for the suggested sketch size.
    #[arg(long, default_value_t = DEFAULT_SUGGEST_TOL)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Candidate set for the ranking task: the manifest candidates plus any
/// validation output missing from them, and the index of each truth.
fn ranking_task(manifest: &Manifest, val: &[StructuredOutput]) -> CliResult<SweepTask> {
    let mut candidates = manifest.load_candidates()?.unwrap_or_default();
    let mut truth = Vec::with_capacity(val.len());
    for y in val {
        let idx = match candidates.iter().position(|c| c == y) {
            Some(i) => i,
            None => {
                candidates.push(y.clone());
                candidates.len() - 1
            }
        };
        truth.push(idx);
    }
    Ok(SweepTask::CandidateRanking { candidates, truth })
}

pub fn run(args: Args) -> CliResult<()> {
    if args.ms.is_empty() && !args.als {
        return Err(usage("nothing to do: pass --ms for a Perfect-h sweep and/or --als"));
    }
    let kernel: KernelSpec = args.kernel.parse()?;
    let kind: SketchKind = args.sketch.parse()?;
    let manifest = Manifest::load(&args.data)?;
    let train = manifest.load_split(&manifest.train)?.outputs;
    create_dir(&args.out)?;
    let mut summary = json!({
        "kernel": kernel.to_string(),
        "sketch": kind.to_string(),
        "seed": args.seed,
        "replicates": args.replicates,
        "data": args.data,
    });

    if args.als {
        let n_s = args.ns.unwrap_or_else(|| (train.len() as f64).sqrt().round() as usize);
        let scores = approximate_leverage_scores(&kernel, &train, args.lambda, n_s, args.seed)?;
        let mut f = File::create(args.out.join("als.csv"))?;
        writeln!(f, "index,score")?;
        for (i, s) in scores.iter().enumerate() {
            writeln!(f, "{},{s:e}", i + 1)?;
        }
        summary["als"] = json!({ "lambda": args.lambda, "ns": n_s, "sum": scores.iter().sum::<f64>() });
        println!("als: {} scores, sum {:.4}", scores.len(), scores.iter().sum::<f64>());
    }

    if !args.ms.is_empty() {
        let val = manifest.load_split(&manifest.val)?.outputs;
        let task = match args.task {
            Task::Mse => SweepTask::LinearMse,
            Task::Mrr => ranking_task(&manifest, &val)?,
        };
        let table = perfect_h_sweep(&kernel, &train, &val, &args.ms, kind, args.seed, args.replicates, &task)?;
        table.write_csv(File::create(args.out.join("sweep.csv"))?)?;
        let m = suggest_m(&table, args.tol)?;
        for row in &table.rows {
            println!("m = {:>6}  {} = {:.6e} ± {:.2e}", row.m, table.metric, row.mean, row.std);
        }
        println!("suggested m: {m}");
        summary["task"] = json!(table.metric);
        summary["ms"] = json!(args.ms);
        summary["tol"] = json!(args.tol);
        summary["suggested_m"] = json!(m);
        summary["curve"] = json!(table.rows.iter().map(|r| json!({ "m": r.m, "mean": r.mean, "std": r.std })).collect::<Vec<_>>());
    }
    write_run(&args.out, "select-m", summary)
}
