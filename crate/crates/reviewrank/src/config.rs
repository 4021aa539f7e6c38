//! Experiment configuration: a flat `key = value` file plus command-line
//! overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use reviewrank_core::eval::{DEFAULT_K, DEFAULT_M};
use reviewrank_core::metrics::HitMode;
use reviewrank_core::text::{DEFAULT_DOC_CAP, DEFAULT_VOCAB_CAP};
use reviewrank_core::train::{OptimizerKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::hash::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BprMf,
    BprGmf,
    BprHft,
    Jrl,
    TextCnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::BprMf, Self::BprGmf, Self::BprHft, Self::Jrl, Self::TextCnn];

    pub fn name(self) -> &'static str {
        match self {
            Self::BprMf => "bpr-mf",
            Self::BprGmf => "bpr-gmf",
            Self::BprHft => "bpr-hft",
            Self::Jrl => "jrl",
            Self::TextCnn => "text-cnn",
        }
    }

    pub fn uses_text(self) -> bool {
        matches!(self, Self::BprHft | Self::Jrl | Self::TextCnn)
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown model `{0}`; valid kinds: {list}", list = ModelKind::valid_names())]
pub struct UnknownModel(pub String);

impl FromStr for ModelKind {
    type Err = UnknownModel;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownModel(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{key}`{}", at(*.line))]
    UnknownKey { key: String, line: Option<usize> },
    #[error("config key `{key}`{}: expected {expected}, got `{value}`", at(*.line))]
    Type {
        key: String,
        value: String,
        expected: &'static str,
        line: Option<usize>,
    },
    #[error("config key `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error(transparent)]
    Model(#[from] UnknownModel),
}

fn at(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

/// Where a setting came from, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    File(usize),
    Flag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub stopwords: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub strict: bool,
    pub k_core: usize,
    pub split_fraction: f64,
    pub seed: u64,
    pub model: ModelKind,
    pub dim: usize,
    pub train: TrainConfig,
    pub vocab_cap: usize,
    pub doc_cap: usize,
    pub k: usize,
    pub m: usize,
    pub hit_mode: HitMode,
    pub lambda_text: f64,
    pub text_negatives: usize,
    pub hft_epochs_per_round: usize,
    pub mlp_layers: usize,
    pub mlp_dropout: f64,
    pub word_dim: usize,
    pub n_filters: usize,
    pub window: usize,
    pub dropout: f64,
    pub threads: usize,
    pub deterministic: bool,
    pub bench_batch: usize,
    pub bench_reps: usize,
    pub bench_users: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            output_dir: PathBuf::from("out"),
            stopwords: None,
            embeddings: None,
            strict: false,
            k_core: 0,
            split_fraction: 0.7,
            seed: 42,
            model: ModelKind::BprMf,
            dim: 64,
            train: TrainConfig::default(),
            vocab_cap: DEFAULT_VOCAB_CAP,
            doc_cap: DEFAULT_DOC_CAP,
            k: DEFAULT_K,
            m: DEFAULT_M,
            hit_mode: HitMode::Recall,
            lambda_text: 0.1,
            text_negatives: 5,
            hft_epochs_per_round: 1,
            mlp_layers: 2,
            mlp_dropout: 0.1,
            word_dim: 64,
            n_filters: 100,
            window: 3,
            dropout: 0.5,
            threads: 1,
            deterministic: false,
            bench_batch: 512,
            bench_reps: 5,
            bench_users: 100,
        }
    }
}

/// Every accepted key, in the order used for hashing and display.
pub const KEYS: &[&str] = &[
    "dataset", "output_dir", "stopwords", "embeddings", "strict", "k_core", "split_fraction", "seed",
    "model", "dim", "learning_rate", "l2", "negatives", "epochs", "batch_size", "optimizer", "beta1",
    "beta2", "epsilon", "vocab_cap", "doc_cap", "k", "m", "hit_mode", "lambda_text", "text_negatives",
    "hft_epochs_per_round", "mlp_layers", "mlp_dropout", "word_dim", "n_filters", "window", "dropout",
    "threads", "deterministic", "bench_batch", "bench_reps", "bench_users",
];

/// Keys naming files or execution details; they do not affect results and
/// are left out of the configuration hash.
const UNHASHED: &[&str] = &[
    "dataset", "output_dir", "stopwords", "embeddings", "strict", "threads", "deterministic",
    "bench_batch", "bench_reps", "bench_users",
];

fn parse_value<T: FromStr>(key: &str, value: &str, expected: &'static str, src: Source) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Type {
        key: key.to_owned(),
        value: value.to_owned(),
        expected,
        line: match src {
            Source::File(l) => Some(l),
            Source::Flag => None,
        },
    })
}

fn parse_bool(key: &str, value: &str, src: Source) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => parse_value::<bool>(key, value, "a boolean", src),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str, src: Source) -> Result<(), ConfigError> {
        let num = |expected| move |v: &str| parse_value::<f64>(key, v, expected, src);
        let int = |v: &str| parse_value::<usize>(key, v, "a non-negative integer", src);
        let real = num("a number");
        let path = |v: &str| (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "dataset" => self.dataset = path(value),
            "output_dir" => self.output_dir = value.into(),
            "stopwords" => self.stopwords = path(value),
            "embeddings" => self.embeddings = path(value),
            "strict" => self.strict = parse_bool(key, value, src)?,
            "k_core" => self.k_core = int(value)?,
            "split_fraction" => self.split_fraction = real(value)?,
            "seed" => {
                self.seed = parse_value(key, value, "a non-negative integer", src)?;
                self.train.seed = self.seed;
            }
            "model" => self.model = value.parse()?,
            "dim" => self.dim = int(value)?,
            "learning_rate" => self.train.learning_rate = real(value)?,
            "l2" => self.train.l2 = real(value)?,
            "negatives" => self.train.negatives_per_positive = int(value)?,
            "epochs" => self.train.epochs = int(value)?,
            "batch_size" => self.train.batch_size = int(value)?,
            "optimizer" => {
                self.train.optimizer = match value {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(type_err(key, value, "`adam` or `sgd`", src)),
                }
            }
            "beta1" => self.train.beta1 = real(value)?,
            "beta2" => self.train.beta2 = real(value)?,
            "epsilon" => self.train.epsilon = real(value)?,
            "vocab_cap" => self.vocab_cap = int(value)?,
            "doc_cap" => self.doc_cap = int(value)?,
            "k" => self.k = int(value)?,
            "m" => self.m = int(value)?,
            "hit_mode" => {
                self.hit_mode = match value {
                    "recall" => HitMode::Recall,
                    "any-hit" => HitMode::AnyHit,
                    _ => return Err(type_err(key, value, "`recall` or `any-hit`", src)),
                }
            }
            "lambda_text" => self.lambda_text = real(value)?,
            "text_negatives" => self.text_negatives = int(value)?,
            "hft_epochs_per_round" => self.hft_epochs_per_round = int(value)?,
            "mlp_layers" => self.mlp_layers = int(value)?,
            "mlp_dropout" => self.mlp_dropout = real(value)?,
            "word_dim" => self.word_dim = int(value)?,
            "n_filters" => self.n_filters = int(value)?,
            "window" => self.window = int(value)?,
            "dropout" => self.dropout = real(value)?,
            "threads" => self.threads = int(value)?,
            "deterministic" => self.deterministic = parse_bool(key, value, src)?,
            "bench_batch" => self.bench_batch = int(value)?,
            "bench_reps" => self.bench_reps = int(value)?,
            "bench_users" => self.bench_users = int(value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_owned(),
                    line: match src {
                        Source::File(l) => Some(l),
                        Source::Flag => None,
                    },
                })
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let t = &self.train;
        Some(match key {
            "dataset" => path(&self.dataset),
            "output_dir" => self.output_dir.display().to_string(),
            "stopwords" => path(&self.stopwords),
            "embeddings" => path(&self.embeddings),
            "strict" => self.strict.to_string(),
            "k_core" => self.k_core.to_string(),
            "split_fraction" => self.split_fraction.to_string(),
            "seed" => self.seed.to_string(),
            "model" => self.model.to_string(),
            "dim" => self.dim.to_string(),
            "learning_rate" => t.learning_rate.to_string(),
            "l2" => t.l2.to_string(),
            "negatives" => t.negatives_per_positive.to_string(),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "optimizer" => match t.optimizer {
                OptimizerKind::Adam => "adam".into(),
                OptimizerKind::Sgd => "sgd".into(),
            },
            "beta1" => t.beta1.to_string(),
            "beta2" => t.beta2.to_string(),
            "epsilon" => t.epsilon.to_string(),
            "vocab_cap" => self.vocab_cap.to_string(),
            "doc_cap" => self.doc_cap.to_string(),
            "k" => self.k.to_string(),
            "m" => self.m.to_string(),
            "hit_mode" => match self.hit_mode {
                HitMode::Recall => "recall".into(),
                HitMode::AnyHit => "any-hit".into(),
            },
            "lambda_text" => self.lambda_text.to_string(),
            "text_negatives" => self.text_negatives.to_string(),
            "hft_epochs_per_round" => self.hft_epochs_per_round.to_string(),
            "mlp_layers" => self.mlp_layers.to_string(),
            "mlp_dropout" => self.mlp_dropout.to_string(),
            "word_dim" => self.word_dim.to_string(),
            "n_filters" => self.n_filters.to_string(),
            "window" => self.window.to_string(),
            "dropout" => self.dropout.to_string(),
            "threads" => self.threads.to_string(),
            "deterministic" => self.deterministic.to_string(),
            "bench_batch" => self.bench_batch.to_string(),
            "bench_reps" => self.bench_reps.to_string(),
            "bench_users" => self.bench_users.to_string(),
            _ => return None,
        })
    }

    /// `key = value` lines for every setting.
    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Hash of every result-affecting setting.
    pub fn hash(&self) -> String {
        let canon: String = KEYS
            .iter()
            .filter(|k| !UNHASHED.contains(k))
            .map(|k| format!("{k}={}\n", self.get(k).unwrap_or_default()))
            .collect();
        sha256_hex(canon.as_bytes())
    }

    /// Hash of the settings that shape prepared data (filtering, split,
    /// vocabulary and documents).
    pub fn data_settings(&self) -> String {
        ["k_core", "split_fraction", "seed", "vocab_cap", "doc_cap"]
            .iter()
            .map(|k| format!("{k}={}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Hard errors for values no model can run with.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &'static str, message: &str| Err(ConfigError::Invalid { key, message: message.into() });
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return invalid("split_fraction", "must lie strictly between 0 and 1");
        }
        for (key, v) in [
            ("dim", self.dim),
            ("k", self.k),
            ("m", self.m),
            ("batch_size", self.train.batch_size),
            ("negatives", self.train.negatives_per_positive),
            ("vocab_cap", self.vocab_cap),
            ("window", self.window),
            ("n_filters", self.n_filters),
            ("word_dim", self.word_dim),
            ("text_negatives", self.text_negatives),
            ("hft_epochs_per_round", self.hft_epochs_per_round),
            ("bench_batch", self.bench_batch),
            ("bench_reps", self.bench_reps),
        ] {
            if v == 0 {
                return invalid(key, "must be positive");
            }
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return invalid("learning_rate", "must be a positive finite number");
        }
        if !(self.train.l2 >= 0.0 && self.train.l2.is_finite()) {
            return invalid("l2", "must be a non-negative finite number");
        }
        if !(self.lambda_text >= 0.0 && self.lambda_text.is_finite()) {
            return invalid("lambda_text", "must be a non-negative finite number");
        }
        for (key, p) in [("dropout", self.dropout), ("mlp_dropout", self.mlp_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return invalid(key, "must lie in [0, 1)");
            }
        }
        Ok(())
    }

    /// Settings outside the usual search ranges. These are allowed.
    pub fn range_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |key: &str, v: f64, lo: f64, hi: f64| {
            if !(lo..=hi).contains(&v) {
                out.push(format!("{key} = {v} is outside the usual range [{lo}, {hi}]"));
            }
        };
        check("learning_rate", self.train.learning_rate, 1e-4, 1e-1);
        check("l2", self.train.l2, 1e-4, 1e-1);
        check("negatives", self.train.negatives_per_positive as f64, 2.0, 10.0);
        check("dim", self.dim as f64, 16.0, 128.0);
        if self.model == ModelKind::TextCnn {
            check("window", self.window as f64, 3.0, 10.0);
            check("dropout", self.dropout, 0.1, 0.8);
        }
        if self.model == ModelKind::BprGmf {
            check("mlp_dropout", self.mlp_dropout, 0.1, 0.8);
        }
        out
    }
}

fn type_err(key: &str, value: &str, expected: &'static str, src: Source) -> ConfigError {
    ConfigError::Type {
        key: key.to_owned(),
        value: value.to_owned(),
        expected,
        line: match src {
            Source::File(l) => Some(l),
            Source::Flag => None,
        },
    }
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String, Source)>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: n + 1,
                text: raw.to_owned(),
            });
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: n + 1,
                text: raw.to_owned(),
            });
        }
        out.push((k.to_owned(), v.trim().to_owned(), Source::File(n + 1)));
    }
    Ok(out)
}

/// File values first, then flag overrides; returns the config and any
/// range warnings.
pub fn validate_config(file_text: &str, overrides: &[(String, String)]) -> Result<(ExperimentConfig, Vec<String>), ConfigError> {
    let mut cfg = ExperimentConfig::default();
    for (k, v, src) in parse_config_file(file_text)? {
        cfg.set(&k, &v, src)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v, Source::Flag)?;
    }
    cfg.validate()?;
    let warnings = cfg.range_warnings();
    Ok((cfg, warnings))
}
