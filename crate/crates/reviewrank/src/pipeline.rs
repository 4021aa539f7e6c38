//! The subcommands: prepare data, train, evaluate, benchmark, report.
//! Every artifact lives in the configured output directory under a fixed
//! name and records the hashes of the inputs that produced it.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use reviewrank_core::conv::precompute_representations;
use reviewrank_core::data::{dataset_stats, k_core_filter, split_user_level, Dataset, DatasetStats, Split};
use reviewrank_core::eval::{CandidatePool, EvalPlan, EvalReport, UserMetrics};
use reviewrank_core::text::{build_vocab, Corpus, DocumentBuilder, Tokenizer, Vocabulary, ENGLISH_STOPWORDS};

use crate::bench::{self, BenchRow};
use crate::checkpoint::{Checkpoint, CheckpointError, FORMAT, VERSION};
use crate::config::{ConfigError, ExperimentConfig, ModelKind};
use crate::hash::sha256_hex;
use crate::manifest::{manifest_hash, Manifest, ManifestError};
use crate::models::{AnyModel, ModelError, TextInputs};
use crate::report::{render_per_user, render_report, EvalFile, Metric, ReportError};
use crate::reviews::{parse_reviews, write_reviews, ParseError};
use crate::textfiles::{load_embeddings, parse_documents, parse_vocab, render_documents, render_vocab, TextFileError};

/// Seed of the dedicated retrieval model, shared by every evaluation of a
/// split so all rerankers see the same candidate pools.
pub const RETRIEVAL_SEED: u64 = 7_919;

pub const INTERACTIONS_FILE: &str = "interactions.jsonl";
pub const MANIFEST_FILE: &str = "split.tsv";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const DOCUMENTS_FILE: &str = "documents.tsv";
pub const RETRIEVAL_FILE: &str = "retrieval.json";
pub const BENCH_FILE: &str = "bench.tsv";
pub const REPORT_FILE: &str = "report.tsv";

pub fn checkpoint_file(kind: ModelKind) -> String {
    format!("model-{kind}.json")
}

pub fn eval_file(kind: ModelKind) -> String {
    format!("eval-{kind}.json")
}

pub fn log_file(name: &str) -> String {
    format!("train-{name}.log")
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing {what}: {path} ({hint})")]
    MissingFile { what: &'static str, path: PathBuf, hint: String },
    #[error("{path}: {source}")]
    Reviews {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    TextFile(#[from] TextFileError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{artifact} was produced from different inputs (expected hash {expected}, found {found}); rerun the earlier steps")]
    HashMismatch {
        artifact: String,
        expected: String,
        found: String,
    },
    #[error("checkpoint {path} has {field} = {checkpoint} but the config says {config}")]
    CheckpointMismatch {
        path: PathBuf,
        field: &'static str,
        checkpoint: String,
        config: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Core(#[from] reviewrank_core::Error),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::MissingFile { .. } => 3,
            Self::Reviews { .. } | Self::Manifest(_) | Self::TextFile(_) | Self::Checkpoint(_) => 4,
            Self::HashMismatch { .. } | Self::CheckpointMismatch { .. } => 5,
            _ => 1,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn read(path: &Path, what: &'static str, hint: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::MissingFile {
            what,
            path: path.to_owned(),
            hint: hint.to_owned(),
        },
        _ => PipelineError::Io {
            path: path.to_owned(),
            source: e,
        },
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.to_owned(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })
}

fn out(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn tokenizer(cfg: &ExperimentConfig) -> Result<(Tokenizer, String)> {
    match &cfg.stopwords {
        Some(p) => {
            let list = read(p, "stopword list", "check the `stopwords` setting")?;
            Ok((Tokenizer::from_stopword_list(&list), list))
        }
        None => Ok((Tokenizer::default(), ENGLISH_STOPWORDS.to_owned())),
    }
}

#[derive(Debug, Clone)]
pub struct PrepareSummary {
    pub raw: DatasetStats,
    pub filtered: DatasetStats,
    pub skipped: usize,
    pub duplicates: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub vocab_size: usize,
    pub empty_documents: usize,
    pub data_hash: String,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PrepareSummary> {
    let path = cfg.dataset.clone().ok_or_else(|| PipelineError::MissingFile {
        what: "dataset",
        path: PathBuf::from("<unset>"),
        hint: "set `dataset` in the config or pass --dataset".into(),
    })?;
    let bytes = read(&path, "dataset", "check the `dataset` setting")?;
    let parsed = parse_reviews(bytes.as_bytes(), cfg.strict).map_err(|source| PipelineError::Reviews {
        path: path.clone(),
        source,
    })?;
    let (tok, stopwords) = tokenizer(cfg)?;
    let data_hash = sha256_hex(
        format!("{}\n{}\n{}", sha256_hex(bytes.as_bytes()), cfg.data_settings(), sha256_hex(stopwords.as_bytes())).as_bytes(),
    );
    let raw = Dataset::from_interactions(parsed.interactions.clone());
    let ds = k_core_filter(&raw, cfg.k_core);
    if ds.is_empty() {
        return Err(PipelineError::Invalid(format!(
            "no interactions left after {}-core filtering",
            cfg.k_core
        )));
    }
    let split = split_user_level(&ds, cfg.split_fraction, cfg.seed);
    let vocab = build_vocab(&tok, &split.train, cfg.vocab_cap);
    let corpus = DocumentBuilder::new(&tok, &vocab, &split).corpus(cfg.doc_cap);

    let mut jsonl = Vec::new();
    write_reviews(&mut jsonl, ds.interactions()).expect("writing to memory");
    write(&out(cfg, INTERACTIONS_FILE), std::str::from_utf8(&jsonl).expect("utf-8"))?;
    write(&out(cfg, MANIFEST_FILE), &Manifest::from_split(&split, &data_hash).render())?;
    write(&out(cfg, VOCAB_FILE), &render_vocab(&vocab, &data_hash))?;
    write(&out(cfg, DOCUMENTS_FILE), &render_documents(&corpus, &data_hash))?;
    Ok(PrepareSummary {
        raw: dataset_stats(&raw),
        filtered: dataset_stats(&ds),
        skipped: parsed.skipped(),
        duplicates: parsed.duplicates,
        train_pairs: split.train.pairs().len(),
        test_pairs: split.test.len(),
        vocab_size: vocab.len(),
        empty_documents: corpus.empty_documents(),
        data_hash,
    })
}

/// Everything `prepare` wrote, reloaded and cross-checked.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: Split,
    pub split_hash: String,
    pub vocab: Vocabulary,
    pub corpus: Arc<Corpus>,
}

pub fn load_prepared(cfg: &ExperimentConfig) -> Result<Prepared> {
    let hint = "run `reviewrank prepare` first";
    let manifest_text = read(&out(cfg, MANIFEST_FILE), "split manifest", hint)?;
    let manifest = Manifest::parse(&manifest_text)?;
    let jsonl = read(&out(cfg, INTERACTIONS_FILE), "prepared interactions", hint)?;
    let parsed = parse_reviews(jsonl.as_bytes(), true).map_err(|source| PipelineError::Reviews {
        path: out(cfg, INTERACTIONS_FILE),
        source,
    })?;
    let split = manifest.to_split(&Dataset::from_interactions(parsed.interactions))?;
    let (vocab, vocab_hash) = parse_vocab(&read(&out(cfg, VOCAB_FILE), "vocabulary", hint)?)?;
    let docs_text = read(&out(cfg, DOCUMENTS_FILE), "documents", hint)?;
    let docs_hash = docs_text
        .lines()
        .find_map(|l| l.strip_prefix("# data_hash\t"))
        .unwrap_or_default()
        .to_owned();
    for (artifact, found) in [(VOCAB_FILE, vocab_hash), (DOCUMENTS_FILE, docs_hash)] {
        if found != manifest.data_hash {
            return Err(PipelineError::HashMismatch {
                artifact: artifact.into(),
                expected: manifest.data_hash.clone(),
                found,
            });
        }
    }
    let corpus = parse_documents(&docs_text)?;
    if corpus.user_docs.len() != split.train.n_users() || corpus.item_docs.len() != split.train.n_items() {
        return Err(PipelineError::Invalid(format!(
            "{DOCUMENTS_FILE} has {} user and {} item documents but the split has {} users and {} items",
            corpus.user_docs.len(),
            corpus.item_docs.len(),
            split.train.n_users(),
            split.train.n_items()
        )));
    }
    Ok(Prepared {
        split,
        split_hash: manifest_hash(&manifest_text),
        vocab,
        corpus: Arc::new(corpus),
    })
}

fn text_inputs(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<TextInputs> {
    let pretrained = match &cfg.embeddings {
        Some(p) if cfg.model.uses_text() => {
            let f = fs::File::open(p).map_err(|_| PipelineError::MissingFile {
                what: "embedding file",
                path: p.clone(),
                hint: "check the `embeddings` setting".into(),
            })?;
            Some(load_embeddings(BufReader::new(f))?)
        }
        _ => None,
    };
    Ok(TextInputs {
        corpus: prepared.corpus.clone(),
        vocab: prepared.vocab.clone(),
        pretrained,
    })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub final_loss: f64,
    pub epochs: usize,
    pub seconds: f64,
}

/// Trains `cfg.model` (or, with `retrieval`, the shared retrieval MF with
/// [`RETRIEVAL_SEED`]) and writes its checkpoint and per-epoch log.
pub fn train(cfg: &ExperimentConfig, retrieval: bool) -> Result<TrainSummary> {
    let prepared = load_prepared(cfg)?;
    let mut cfg = cfg.clone();
    let (ck_name, log_name) = if retrieval {
        cfg.model = ModelKind::BprMf;
        cfg.seed = RETRIEVAL_SEED;
        cfg.train.seed = RETRIEVAL_SEED;
        (RETRIEVAL_FILE.to_owned(), log_file("retrieval"))
    } else {
        (checkpoint_file(cfg.model), log_file(cfg.model.name()))
    };
    let text = text_inputs(&cfg, &prepared)?;
    let mut model = AnyModel::build(&cfg, &prepared.split, Some(&text))?;
    let threads = if cfg.deterministic { 1 } else { cfg.threads.max(1) };
    let start = Instant::now();
    let mut log = String::from("epoch\tloss\telapsed_ms\n");
    let stats = model.train(&cfg.train, &prepared.split, threads, &mut |s| {
        log.push_str(&format!("{}\t{:.9}\t{}\n", s.epoch, s.loss, start.elapsed().as_millis()));
        log::info!("epoch {} loss {:.6}", s.epoch, s.loss);
    })?;
    let ck = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        model: cfg.model,
        dim: cfg.dim,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        split_hash: prepared.split_hash.clone(),
        users: prepared.split.train.users().to_vec(),
        items: prepared.split.train.items().to_vec(),
        params: model.to_params(),
    };
    let path = out(&cfg, &ck_name);
    write(&path, &ck.to_json())?;
    write(&out(&cfg, &log_name), &log)?;
    Ok(TrainSummary {
        checkpoint: path,
        final_loss: stats.last().map_or(0.0, |s| s.loss),
        epochs: stats.len(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn load_checkpoint(path: &Path, what: &'static str, hint: String) -> Result<(Checkpoint, String)> {
    let text = read(path, what, &hint)?;
    let ck = Checkpoint::load(path)?;
    Ok((ck, sha256_hex(text.as_bytes())))
}

fn check_checkpoint(path: &Path, ck: &Checkpoint, prepared: &Prepared, kind: ModelKind, dim: usize) -> Result<()> {
    if ck.split_hash != prepared.split_hash {
        return Err(PipelineError::HashMismatch {
            artifact: path.display().to_string(),
            expected: prepared.split_hash.clone(),
            found: ck.split_hash.clone(),
        });
    }
    let mismatch = |field, checkpoint: String, config: String| PipelineError::CheckpointMismatch {
        path: path.to_owned(),
        field,
        checkpoint,
        config,
    };
    if ck.model != kind || ck.params.kind() != kind {
        return Err(mismatch("model", ck.params.kind().to_string(), kind.to_string()));
    }
    if ck.dim != dim {
        return Err(mismatch("dim", ck.dim.to_string(), dim.to_string()));
    }
    if ck.users != prepared.split.train.users() || ck.items != prepared.split.train.items() {
        return Err(mismatch("id maps", format!("{} users", ck.users.len()), format!("{} users", prepared.split.train.n_users())));
    }
    Ok(())
}

/// A checkpointed model, validated against the prepared split.
pub fn load_model(cfg: &ExperimentConfig, prepared: &Prepared, kind: ModelKind) -> Result<AnyModel> {
    let path = out(cfg, &checkpoint_file(kind));
    let (ck, _) = load_checkpoint(&path, "model checkpoint", format!("run `reviewrank train --model {kind}`"))?;
    check_checkpoint(&path, &ck, prepared, kind, cfg.dim)?;
    Ok(AnyModel::from_params(ck.params, Some(prepared.corpus.clone()), ck.seed)?)
}

/// The retrieval model and the hash of its checkpoint file.
pub fn load_retrieval(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<(AnyModel, String)> {
    let path = out(cfg, RETRIEVAL_FILE);
    let (ck, hash) = load_checkpoint(&path, "retrieval checkpoint", "run `reviewrank train --retrieval`".into())?;
    check_checkpoint(&path, &ck, prepared, ModelKind::BprMf, cfg.dim)?;
    Ok((AnyModel::from_params(ck.params, None, ck.seed)?, hash))
}

fn pools(plan: &EvalPlan, retrieval: &AnyModel, users: &[usize], parallel: bool) -> Vec<CandidatePool> {
    if parallel {
        users.par_iter().map(|&u| plan.pool(retrieval, u)).collect()
    } else {
        users.iter().map(|&u| plan.pool(retrieval, u)).collect()
    }
}

/// Evaluates `cfg.model` with the two-stage protocol and writes the report
/// (and, if asked, the per-user dump).
pub fn evaluate(cfg: &ExperimentConfig, per_user: bool) -> Result<EvalFile> {
    let prepared = load_prepared(cfg)?;
    let model = load_model(cfg, &prepared, cfg.model)?;
    let (retrieval, retrieval_hash) = load_retrieval(cfg, &prepared)?;
    let plan = EvalPlan::new(&prepared.split, cfg.k, cfg.m, cfg.hit_mode)?;
    let parallel = !cfg.deterministic && cfg.threads != 1;
    let pools = pools(&plan, &retrieval, &plan.evaluated_users(), parallel);
    let score = |p: &CandidatePool| {
        plan.score_pool(&model, p)
            .map(|(hr, ndcg)| UserMetrics { user: p.user, hr, ndcg })
    };
    let rows: Vec<UserMetrics> = if parallel {
        pools.par_iter().map(score).collect::<reviewrank_core::Result<_>>()?
    } else {
        pools.iter().map(score).collect::<reviewrank_core::Result<_>>()?
    };
    let report = EvalReport::from_per_user(cfg.model.to_string(), cfg.k, cfg.m, cfg.hit_mode, rows)?;
    let file = EvalFile::new(cfg.hash(), prepared.split_hash.clone(), retrieval_hash, report);
    write(&out(cfg, &eval_file(cfg.model)), &file.to_json())?;
    if per_user {
        write(
            &out(cfg, &format!("per-user-{}.tsv", cfg.model)),
            &render_per_user(&file.report, prepared.split.train.users()),
        )?;
    }
    Ok(file)
}

/// Times reranking (not retrieval) of the first `bench_users` pools for
/// each model. Text-feature models are timed with and without cached
/// representations; building the cache is not timed.
pub fn bench(cfg: &ExperimentConfig, kinds: &[ModelKind], throughput_threads: usize) -> Result<Vec<BenchRow>> {
    let prepared = load_prepared(cfg)?;
    let (retrieval, _) = load_retrieval(cfg, &prepared)?;
    let plan = EvalPlan::new(&prepared.split, cfg.k, cfg.m, cfg.hit_mode)?;
    let users: Vec<usize> = plan.evaluated_users().into_iter().take(cfg.bench_users.max(1)).collect();
    let pools = pools(&plan, &retrieval, &users, false);
    let (batch, reps) = (cfg.bench_batch, cfg.bench_reps);
    let mut rows = Vec::new();
    for &kind in kinds {
        let model = load_model(cfg, &prepared, kind)?;
        let mut push = |mode: &str, result| {
            rows.push(BenchRow {
                model: kind.to_string(),
                mode: mode.into(),
                result,
            })
        };
        match &model {
            AnyModel::TextCnn(m) => {
                push("uncached", bench::speed_benchmark(m, &pools, batch, reps));
                let cache = precompute_representations(m);
                push("cached", bench::speed_benchmark(&cache, &pools, batch, reps));
            }
            other => push("direct", bench::speed_benchmark(other, &pools, batch, reps)),
        }
        if throughput_threads > 1 {
            let r = bench::throughput_benchmark(&model, &pools, batch, reps, throughput_threads).map_err(ModelError::from)?;
            push(&format!("throughput-{throughput_threads}"), r);
        }
    }
    write(&out(cfg, BENCH_FILE), &bench::render_bench(&rows, batch, reps))?;
    Ok(rows)
}

/// Merges evaluation reports (and an optional latency table) into the
/// comparison table with its significance block.
pub fn report(cfg: &ExperimentConfig, evals: &[PathBuf], bench_table: Option<&Path>, metric: Metric) -> Result<String> {
    let files = evals
        .iter()
        .map(|p| {
            let text = read(p, "evaluation report", "run `reviewrank eval` first")?;
            EvalFile::from_json(&text).map_err(|e| PipelineError::Invalid(format!("{}: not an evaluation report: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let latency = match bench_table {
        Some(p) => bench::parse_bench(&read(p, "latency table", "run `reviewrank bench` first")?),
        None => Vec::new(),
    };
    let lookup = |model: &str| {
        let mode_rank = |m: &str| match m {
            "direct" => 0,
            "uncached" => 1,
            _ => 2,
        };
        latency
            .iter()
            .filter(|(m, mode, _)| m == model && mode_rank(mode) < 2)
            .min_by_key(|(_, mode, _)| mode_rank(mode))
            .map(|(_, _, s)| *s)
    };
    let text = render_report(&files, &lookup, metric)?;
    write(&out(cfg, REPORT_FILE), &text)?;
    Ok(text)
}

/// Writes the bundled synthetic dataset in the review-record layout.
pub fn write_toy(path: &Path, seed: Option<u64>) -> Result<usize> {
    let mut toy = reviewrank_core::synth::toy_config();
    if let Some(s) = seed {
        toy.seed = s;
    }
    let data = reviewrank_core::synth::block_dataset(&toy);
    let mut buf = Vec::new();
    write_reviews(&mut buf, &data).expect("writing to memory");
    write(path, std::str::from_utf8(&buf).expect("utf-8"))?;
    Ok(data.len())
}
