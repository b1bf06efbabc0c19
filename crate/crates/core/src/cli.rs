//! The `coarsen-gnn` command line: `coarsen`, `train`, `eval`, `analyze`.
//!
//! Exit codes: 0 ok, 2 input parse failure, 3 numeric failure, 4 checkpoint
//! or model mismatch, 64 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{bucket_report, AnalysisError, BucketKey};
use crate::coarsen::{build_hierarchy, dot, ClauseMatchConfig, PoolingMethod};
use crate::ingest::{load_corpus_dir, load_document, AnnotatedDocument, EmbeddingTable, IngestError};
use crate::model::{ModelError, PoolMode};
use crate::numeric::NumericError;
use crate::train::{
    evaluate, load_checkpoint, predict_all, prepare_examples, synth_with, train, write_checkpoint,
    CheckpointError, Example, RelationModel, SynthConfig, TrainConfig, TrainError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ARTIFACT: i32 = 4;
pub const EXIT_USAGE: i32 = 64;
/// Output could not be written.
pub const EXIT_IO: i32 = 74;

#[derive(Debug, Parser, Serialize)]
#[command(name = "coarsen-gnn", version, about = "Graph coarsening and pooling-unpooling GCNs for relation extraction")]
pub struct Cli {
    /// Worker threads for per-document work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Build graph hierarchies and write one DOT file per level plus stats.
    Coarsen(CoarsenArgs),
    /// Train a model and write a checkpoint, metrics and the loss curve.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Bucket a checkpoint's accuracy by entity distance or input length.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CoarsenArgs {
    /// A `.conllu` file (sidecar `.json` next to it) or a directory of them.
    pub input: PathBuf,
    #[arg(long, default_value = "hm")]
    pub method: PoolingMethod,
    /// Coarsening steps; `--levels 0` writes only the input graph.
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    #[arg(long, env = "COARSEN_GNN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize, Clone)]
pub struct DataArgs {
    /// Directory of `.conllu` files with `.json` sidecars.
    #[arg(long, conflicts_with = "synthetic")]
    pub corpus: Option<PathBuf>,
    /// Generate synthetic chains of these lengths instead of reading a corpus.
    #[arg(long, value_delimiter = ',')]
    pub synthetic: Option<Vec<usize>>,
    /// Synthetic instances per chain length.
    #[arg(long, default_value_t = 200)]
    pub synthetic_instances: usize,
    /// Synthetic filler vocabulary size.
    #[arg(long, default_value_t = 1)]
    pub synthetic_vocab: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Dev corpus for model selection; synthetic runs generate one.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long, default_value = "hm")]
    pub method: PoolingMethod,
    /// Number of graph levels.
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    #[arg(long, default_value_t = 1)]
    pub sublayers: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 16)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.95)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 15)]
    pub decay_start: usize,
    #[arg(long, default_value_t = 0.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value = "sum", value_parser = parse_pool_mode)]
    pub pool_mode: PoolMode,
    /// Keep mention surface forms instead of `ENTITY_k` placeholders.
    #[arg(long)]
    pub no_anonymize: bool,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, env = "COARSEN_GNN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Seed for synthetic data; defaults to the checkpoint's seed + 1000.
    #[arg(long, env = "COARSEN_GNN_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "distance")]
    pub bucket_by: BucketKey,
    /// Bucket edges, strictly increasing, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub edges: Vec<f64>,
    #[arg(long, env = "COARSEN_GNN_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn parse_pool_mode(s: &str) -> Result<PoolMode, String> {
    match s {
        "sum" => Ok(PoolMode::Sum),
        "mean" => Ok(PoolMode::Mean),
        other => Err(format!("unknown pool mode `{other}` (expected sum or mean)")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn model_exit(e: &ModelError) -> i32 {
    match e {
        ModelError::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_ARTIFACT,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Ingest(_) => EXIT_PARSE,
            CliError::Train(e) => match e {
                TrainError::Ingest(_) => EXIT_PARSE,
                TrainError::Divergence { .. } => EXIT_NUMERIC,
                TrainError::Config(_) | TrainError::EmptyDataset => EXIT_USAGE,
                TrainError::Model(m) => model_exit(m),
            },
            CliError::Checkpoint(_) => EXIT_ARTIFACT,
            CliError::Model(m) => model_exit(m),
            CliError::Analysis(e) => match e {
                AnalysisError::BadEdges(_) => EXIT_USAGE,
                AnalysisError::PredictionCount { .. } => EXIT_ARTIFACT,
                _ => EXIT_PARSE,
            },
            CliError::Write { .. } => EXIT_IO,
        }
    }
}

impl From<NumericError> for CliError {
    fn from(e: NumericError) -> Self {
        CliError::Model(e.into())
    }
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// `(path, sha256)` of every input file, sorted by path.
    pub inputs: Vec<(String, String)>,
    /// `(file name, sha256)` of every output, sorted by name.
    pub outputs: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Collects output files and writes them plus `manifest.json` at the end.
struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })
    }

    fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(|source| CliError::Write {
            path: self.dir.clone(),
            source,
        })?;
        self.files.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, bytes) in &self.files {
            self.write(name, bytes)?;
        }
        manifest.outputs = self
            .files
            .iter()
            .map(|(n, b)| (n.clone(), sha256_hex(b)))
            .collect();
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        self.write("manifest.json", text.as_bytes())
    }
}

fn hash_inputs(paths: &[PathBuf]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let bytes = fs::read(p).map_err(|source| {
            CliError::Ingest(IngestError::Io {
                path: p.clone(),
                source,
            })
        })?;
        out.push((p.display().to_string(), sha256_hex(&bytes)));
    }
    out.sort();
    Ok(out)
}

/// The `.conllu` files behind `path` and their sidecars.
fn input_files(path: &Path) -> Vec<PathBuf> {
    let conllu: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .into_iter()
            .flatten()
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "conllu"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    conllu
        .into_iter()
        .flat_map(|c| {
            let side = c.with_extension("json");
            std::iter::once(c).chain(side.exists().then_some(side))
        })
        .collect()
}

fn require_path(p: &Path, what: &str) -> Result<(), CliError> {
    if !p.exists() {
        return Err(CliError::Usage(format!("{what} `{}` does not exist", p.display())));
    }
    Ok(())
}

fn load_input(path: &Path) -> Result<Vec<AnnotatedDocument>, CliError> {
    require_path(path, "input")?;
    Ok(if path.is_dir() {
        load_corpus_dir(path)?
    } else {
        vec![load_document(path)?]
    })
}

/// Documents plus the files they came from (empty for synthetic data).
fn load_data(
    data: &DataArgs,
    seed: u64,
) -> Result<(Vec<AnnotatedDocument>, Vec<PathBuf>), CliError> {
    match (&data.corpus, &data.synthetic) {
        (Some(dir), None) => Ok((load_input(dir)?, input_files(dir))),
        (None, Some(lengths)) => {
            let mut docs = Vec::new();
            for (i, &len) in lengths.iter().enumerate() {
                if len < 4 {
                    return Err(CliError::Usage(format!("synthetic chain length {len} < 4")));
                }
                if data.synthetic_vocab == 0 {
                    return Err(CliError::Usage("--synthetic-vocab must be positive".into()));
                }
                let mut part = synth_with(SynthConfig {
                    n_instances: data.synthetic_instances,
                    chain_len: len,
                    vocab: data.synthetic_vocab,
                    seed: seed.wrapping_add(i as u64 * 7919),
                    cue_offset: None,
                });
                for d in &mut part {
                    d.document.doc_id = format!("len{len}-{}", d.document.doc_id);
                    d.sidecar.doc_id = d.document.doc_id.clone();
                }
                docs.extend(part);
            }
            Ok((docs, Vec::new()))
        }
        _ => Err(CliError::Usage(
            "give exactly one of --corpus DIR or --synthetic LEN[,LEN..]".into(),
        )),
    }
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

pub fn cmd_coarsen(args: &CoarsenArgs) -> Result<(), CliError> {
    let docs = load_input(&args.input)?;
    let cfg = ClauseMatchConfig::default();
    let mut out = Outputs::new(&args.out);
    let mut per_doc = Vec::new();
    for doc in &docs {
        let g = doc.graph()?.graph;
        let h = build_hierarchy(&g, args.method, args.levels, &cfg, args.seed);
        let forms = doc.document.forms();
        let id = &doc.document.doc_id;
        for l in 0..h.level_count() {
            out.add(format!("{id}.L{l}.dot"), dot::level_dot(&h, l, Some(&forms)));
            if l > 0 {
                out.add(format!("{id}.merge_L{l}.dot"), dot::merge_tree_dot(&h, l));
            }
        }
        per_doc.push(json!({
            "doc_id": id,
            "sizes": h.sizes(),
            "stopped_early_at": h.stopped_early_at,
        }));
    }
    let n = docs.len().max(1) as f64;
    let mean: Vec<f64> = (0..=args.levels)
        .map(|l| {
            per_doc
                .iter()
                .map(|d| d["sizes"][l].as_u64().unwrap_or(0) as f64)
                .sum::<f64>()
                / n
        })
        .collect();
    let stats = json!({
        "method": args.method.to_string(),
        "levels": args.levels,
        "mean_sizes": mean,
        "documents": per_doc,
    });
    out.add("stats.json", serde_json::to_string_pretty(&stats).unwrap() + "\n");
    out.finish(RunManifest {
        tool: "coarsen-gnn",
        version: env!("CARGO_PKG_VERSION"),
        command: "coarsen".into(),
        config: config_json(args),
        seed: Some(args.seed),
        inputs: hash_inputs(&input_files(&args.input))?,
        outputs: Vec::new(),
    })
}

fn arity_of(examples: &[Example]) -> Result<usize, CliError> {
    let first = examples
        .first()
        .ok_or_else(|| CliError::Usage("the data holds no relation instances".into()))?;
    let k = first.instance.entities.len();
    if let Some(bad) = examples.iter().find(|e| e.instance.entities.len() != k) {
        return Err(CliError::Ingest(IngestError::BadInstance(format!(
            "{}: {} entities, but earlier instances have {k}",
            bad.instance.doc_id,
            bad.instance.entities.len()
        ))));
    }
    Ok(k)
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = TrainConfig {
        lr: args.lr,
        lr_decay: args.lr_decay,
        decay_start: args.decay_start,
        epochs: args.epochs,
        seed: args.seed,
        levels: args.levels,
        sublayers: args.sublayers,
        hidden: args.hidden,
        method: args.method,
        anonymize: !args.no_anonymize,
        pool_mode: args.pool_mode,
        dropout: args.dropout,
        embed_dim: args.embed_dim,
        classes: args.classes,
        clip_norm: args.clip_norm,
    };
    cfg.validate()?;
    let (docs, mut files) = load_data(&args.data, args.seed)?;
    let dev_docs = match (&args.dev, &args.data.synthetic) {
        (Some(dir), _) => {
            files.extend(input_files(dir));
            load_input(dir)?
        }
        (None, Some(_)) => load_data(&args.data, args.seed.wrapping_add(1000))?.0,
        (None, None) => Vec::new(),
    };
    let table = EmbeddingTable::hashed(cfg.embed_dim);
    let train_set = prepare_examples(&docs, &cfg, &table)?;
    let dev_set = prepare_examples(&dev_docs, &cfg, &table)?;
    let arity = arity_of(&train_set)?;
    let mut model = RelationModel::from_train_config(&cfg, arity)?;
    let report = train(&mut model, &train_set, &dev_set, &cfg)?;

    let mut out = Outputs::new(&args.out);
    let mut ckpt = Vec::new();
    write_checkpoint(&model, Some(&cfg), &mut ckpt)?;
    out.add("checkpoint.bin", ckpt);
    out.add("loss.csv", report.loss_csv());
    let metrics = json!({
        "best_epoch": report.best_epoch,
        "dev": report.best_dev,
        "train": evaluate(&model, &train_set)?,
    });
    out.add("metrics.json", serde_json::to_string_pretty(&metrics).unwrap() + "\n");
    out.finish(RunManifest {
        tool: "coarsen-gnn",
        version: env!("CARGO_PKG_VERSION"),
        command: "train".into(),
        config: json!({ "args": config_json(args), "train": cfg }),
        seed: Some(args.seed),
        inputs: hash_inputs(&files)?,
        outputs: Vec::new(),
    })
}

/// Loads a checkpoint and prepares `data` the way its model was trained.
fn checkpoint_and_examples(
    checkpoint: &Path,
    data: &DataArgs,
    seed: Option<u64>,
) -> Result<(RelationModel, TrainConfig, Vec<Example>, Vec<PathBuf>), CliError> {
    let (model, stored) = load_checkpoint(checkpoint)?;
    let enc = model.encoder.config();
    let cfg = stored.unwrap_or_else(|| TrainConfig {
        levels: enc.levels,
        sublayers: enc.sublayers,
        hidden: enc.hidden,
        embed_dim: enc.input_dim.saturating_sub(crate::ingest::POS_DIM),
        classes: model.classes(),
        ..Default::default()
    });
    let seed = seed.unwrap_or(cfg.seed.wrapping_add(1000));
    let (docs, mut files) = load_data(data, seed)?;
    let table = EmbeddingTable::hashed(cfg.embed_dim);
    let examples = prepare_examples(&docs, &cfg, &table)?;
    files.push(checkpoint.to_path_buf());
    Ok((model, cfg, examples, files))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let (model, _, examples, files) = checkpoint_and_examples(&args.checkpoint, &args.data, args.seed)?;
    let metrics = evaluate(&model, &examples)?;
    let mut out = Outputs::new(&args.out);
    out.add("metrics.json", metrics.to_json() + "\n");
    out.finish(RunManifest {
        tool: "coarsen-gnn",
        version: env!("CARGO_PKG_VERSION"),
        command: "eval".into(),
        config: config_json(args),
        seed: args.seed,
        inputs: hash_inputs(&files)?,
        outputs: Vec::new(),
    })
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let (model, _, examples, files) = checkpoint_and_examples(&args.checkpoint, &args.data, args.seed)?;
    let predictions = predict_all(&model, &examples)?;
    let report = bucket_report(&examples, &predictions, args.bucket_by, &args.edges, model.classes())?;
    let mut out = Outputs::new(&args.out);
    out.add("report.json", report.to_json() + "\n");
    out.add("report.csv", report.to_csv());
    out.finish(RunManifest {
        tool: "coarsen-gnn",
        version: env!("CARGO_PKG_VERSION"),
        command: "analyze".into(),
        config: config_json(args),
        seed: args.seed,
        inputs: hash_inputs(&files)?,
        outputs: Vec::new(),
    })
}

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Coarsen(a) => cmd_coarsen(a),
        Command::Train(a) => {
            require_data_path(&a.data)?;
            cmd_train(a)
        }
        Command::Eval(a) => {
            require_data_path(&a.data)?;
            cmd_eval(a)
        }
        Command::Analyze(a) => {
            require_data_path(&a.data)?;
            cmd_analyze(a)
        }
    }
}

fn require_data_path(data: &DataArgs) -> Result<(), CliError> {
    if let Some(dir) = &data.corpus {
        require_path(dir, "corpus")?;
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if cli.jobs > 0 {
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == EXIT_USAGE {
                eprintln!("run `coarsen-gnn --help` for usage");
            }
            e.exit_code()
        }
    }
}
