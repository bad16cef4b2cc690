use std::path::{Path, PathBuf};

use dsokr::datasets::{
    gen_synthetic, gen_toy_molecules, save_outputs, save_strings, save_vectors, DataFormat, Manifest, SplitFiles, SyntheticSpec,
};
use dsokr::StructuredOutput;
use serde_json::json;

use crate::run::{create_dir, write_run};
use crate::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    /// Low-rank linear vector regression.
    Synthetic,
    /// String to labeled-graph pairs; the test outputs form the candidate set.
    Molecules,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum, default_value = "synthetic")]
    kind: Kind,
    /// Start from the large synthetic configuration instead of the desk one.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    d_x: Option<usize>,
    #[arg(long)]
    d_y: Option<usize>,
    /// Rank of the output signal.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

impl Args {
    fn spec(&self) -> SyntheticSpec {
        let base = if self.paper_scale { SyntheticSpec::paper_scale() } else { SyntheticSpec::default() };
        SyntheticSpec {
            n_train: self.n_train.unwrap_or(base.n_train),
            n_val: self.n_val.unwrap_or(base.n_val),
            n_test: self.n_test.unwrap_or(base.n_test),
            d_x: self.d_x.unwrap_or(base.d_x),
            d_y: self.d_y.unwrap_or(base.d_y),
            d: self.d.unwrap_or(base.d),
            noise_variance: self.noise_variance.unwrap_or(base.noise_variance),
            seed: self.seed,
        }
    }
}

fn files(split: &str, input_ext: &str, output_ext: &str) -> SplitFiles {
    SplitFiles {
        inputs: PathBuf::from(format!("{split}_x.{input_ext}")),
        outputs: PathBuf::from(format!("{split}_y.{output_ext}")),
    }
}

pub fn run(args: Args) -> CliResult<()> {
    let spec = args.spec();
    spec.validate()?;
    create_dir(&args.out)?;
    let manifest = match args.kind {
        Kind::Synthetic => synthetic(&spec, &args.out)?,
        Kind::Molecules => molecules(&spec, &args.out)?,
    };
    manifest.save(&args.out.join("manifest.json"))?;
    write_run(&args.out, "datagen", json!({ "kind": format!("{:?}", args.kind).to_lowercase(), "spec": spec }))?;
    println!("wrote {}", args.out.join("manifest.json").display());
    Ok(())
}

fn synthetic(spec: &SyntheticSpec, out: &Path) -> CliResult<Manifest> {
    let data = gen_synthetic(spec)?;
    let manifest = Manifest {
        input_format: DataFormat::Vectors,
        output_format: DataFormat::Vectors,
        train: files("train", "csv", "csv"),
        val: files("val", "csv", "csv"),
        test: files("test", "csv", "csv"),
        candidates: None,
        metadata: json!({ "generator": "synthetic", "spec": spec }),
        root: out.to_path_buf(),
    };
    for (f, split) in [(&manifest.train, &data.train), (&manifest.val, &data.val), (&manifest.test, &data.test)] {
        save_vectors(&out.join(&f.inputs), &split.x)?;
        save_vectors(&out.join(&f.outputs), &split.y)?;
    }
    Ok(manifest)
}

fn molecules(spec: &SyntheticSpec, out: &Path) -> CliResult<Manifest> {
    let pairs = gen_toy_molecules(spec.n_train + spec.n_val + spec.n_test, spec.seed);
    let manifest = Manifest {
        input_format: DataFormat::Strings,
        output_format: DataFormat::Graphs,
        train: files("train", "txt", "json"),
        val: files("val", "txt", "json"),
        test: files("test", "txt", "json"),
        candidates: Some(PathBuf::from("candidates.json")),
        metadata: json!({ "generator": "molecules", "seed": spec.seed }),
        root: out.to_path_buf(),
    };
    let (train, rest) = pairs.split_at(spec.n_train);
    let (val, test) = rest.split_at(spec.n_val);
    for (f, split) in [(&manifest.train, train), (&manifest.val, val), (&manifest.test, test)] {
        let strings: Vec<&str> = split.iter().map(|(s, _)| s.as_str()).collect();
        let graphs: Vec<StructuredOutput> = split.iter().map(|(_, g)| StructuredOutput::Graph(g.clone())).collect();
        save_strings(&out.join(&f.inputs), &strings)?;
        save_outputs(&out.join(&f.outputs), &graphs, DataFormat::Graphs)?;
    }
    let candidates: Vec<StructuredOutput> = test.iter().map(|(_, g)| StructuredOutput::Graph(g.clone())).collect();
    save_outputs(&out.join("candidates.json"), &candidates, DataFormat::Graphs)?;
    Ok(manifest)
}
