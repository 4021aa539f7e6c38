//! One type over every model kind: construction from a config, training,
//! scoring and conversion to and from checkpoint parameters.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use reviewrank_core::conv::{ConvConfig, ConvEncoder, TextFeatureModel};
use reviewrank_core::data::Split;
use reviewrank_core::linalg::Matrix;
use reviewrank_core::mf::{GmfModel, LatentFactorModel};
use reviewrank_core::model::{PairwiseModel, Scorer};
use reviewrank_core::pv::{GenerativeCoupling, JrlModel};
use reviewrank_core::rng;
use reviewrank_core::text::{Corpus, EmbeddingTable, Vocabulary};
use reviewrank_core::topic::{HftConfig, HftModel};
use reviewrank_core::train::{EpochStats, TrainConfig, Trainer};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind};

/// Random stream used for parameter initialization; streams 0–3 of the
/// same seed belong to the trainer.
pub const INIT_STREAM: u64 = 4;

/// Text resources shared by the review-aware models.
#[derive(Debug, Clone)]
pub struct TextInputs {
    pub corpus: Arc<Corpus>,
    pub vocab: Vocabulary,
    pub pretrained: Option<BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub enum AnyModel {
    Mf(LatentFactorModel),
    Gmf(GmfModel),
    Hft(HftModel),
    Jrl(JrlModel),
    TextCnn(TextFeatureModel),
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model `{0}` needs review documents")]
    NeedsText(ModelKind),
    #[error("checkpoint holds `{found}` parameters but its header says `{declared}`")]
    KindMismatch { declared: ModelKind, found: ModelKind },
    #[error(transparent)]
    Core(#[from] reviewrank_core::Error),
    #[error("building thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

pub fn hft_config(cfg: &ExperimentConfig) -> HftConfig {
    HftConfig {
        lambda_text: cfg.lambda_text,
        epochs_per_round: cfg.hft_epochs_per_round,
        ..HftConfig::default()
    }
}

pub fn coupling(cfg: &ExperimentConfig) -> GenerativeCoupling {
    GenerativeCoupling {
        lambda_text: cfg.lambda_text,
        negatives_per_token: cfg.text_negatives,
    }
}

pub fn conv_config(cfg: &ExperimentConfig) -> ConvConfig {
    ConvConfig {
        word_dim: cfg.word_dim,
        n_filters: cfg.n_filters,
        window: cfg.window,
        dropout: cfg.dropout,
    }
}

impl AnyModel {
    /// Fresh parameters for `cfg.model`. Factor-based kinds draw their
    /// factors first from the same stream, so equal seeds give equal
    /// starting factors across kinds.
    pub fn build(cfg: &ExperimentConfig, split: &Split, text: Option<&TextInputs>) -> Result<Self, ModelError> {
        let mut rng = rng::stream(cfg.seed, INIT_STREAM);
        let (nu, ni, d) = (split.train.n_users(), split.train.n_items(), cfg.dim);
        let kind = cfg.model;
        let need_text = || text.ok_or(ModelError::NeedsText(kind));
        Ok(match kind {
            ModelKind::BprMf => Self::Mf(LatentFactorModel::new(nu, ni, d, &mut rng)),
            ModelKind::BprGmf => Self::Gmf(GmfModel::new(nu, ni, d, cfg.mlp_layers, cfg.mlp_dropout, &mut rng)),
            ModelKind::BprHft => {
                let t = need_text()?;
                let factors = LatentFactorModel::new(nu, ni, d, &mut rng);
                Self::Hft(HftModel::new(factors, t.corpus.clone(), hft_config(cfg), &mut rng))
            }
            ModelKind::Jrl => {
                let t = need_text()?;
                let factors = LatentFactorModel::new(nu, ni, d, &mut rng);
                let words = match &t.pretrained {
                    Some(p) => EmbeddingTable::from_pretrained_projected(&t.vocab, p, d, &mut rng),
                    None => EmbeddingTable::random(t.corpus.vocab_size.max(1), d, &mut rng),
                };
                Self::Jrl(JrlModel::new(factors, words, t.corpus.clone(), coupling(cfg)))
            }
            ModelKind::TextCnn => {
                let t = need_text()?;
                let mut m = TextFeatureModel::new(t.corpus.clone(), ni, d, conv_config(cfg), &mut rng);
                if let Some(p) = &t.pretrained {
                    let table = EmbeddingTable::from_pretrained(&t.vocab, p, cfg.word_dim, &mut rng);
                    m.set_word_embeddings(&table.vectors);
                }
                Self::TextCnn(m)
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Mf(_) => ModelKind::BprMf,
            Self::Gmf(_) => ModelKind::BprGmf,
            Self::Hft(_) => ModelKind::BprHft,
            Self::Jrl(_) => ModelKind::Jrl,
            Self::TextCnn(_) => ModelKind::TextCnn,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Mf(m) => m.dim(),
            Self::Gmf(m) => m.factors.dim(),
            Self::Hft(m) => m.factors.dim(),
            Self::Jrl(m) => m.factors.dim(),
            Self::TextCnn(m) => m.dim(),
        }
    }

    /// Trains for `config.epochs` epochs. With `threads > 1` each batch is
    /// split into that many micro-batches evaluated in parallel.
    pub fn train(
        &mut self,
        config: &TrainConfig,
        split: &Split,
        threads: usize,
        on_epoch: &mut dyn FnMut(&EpochStats),
    ) -> Result<Vec<EpochStats>, ModelError> {
        match self {
            Self::Mf(m) => fit(m, config, split, threads, on_epoch),
            Self::Gmf(m) => fit(m, config, split, threads, on_epoch),
            Self::Hft(m) => fit(m, config, split, threads, on_epoch),
            Self::Jrl(m) => fit(m, config, split, threads, on_epoch),
            Self::TextCnn(m) => fit(m, config, split, threads, on_epoch),
        }
    }

    pub fn to_params(&self) -> ModelParams {
        match self {
            Self::Mf(m) => ModelParams::BprMf { factors: m.clone() },
            Self::Gmf(m) => ModelParams::BprGmf { model: m.clone() },
            Self::Hft(m) => ModelParams::BprHft {
                factors: m.factors.clone(),
                kappa: m.kappa(),
                phi_logits: m.phi_logits.clone(),
                config: m.config,
            },
            Self::Jrl(m) => ModelParams::Jrl {
                factors: m.factors.clone(),
                words: m.words.clone(),
                coupling: m.coupling,
            },
            Self::TextCnn(m) => ModelParams::TextCnn {
                user_encoder: m.user_encoder.clone(),
                item_encoder: m.item_encoder.clone(),
                item_bias: m.item_bias.clone(),
            },
        }
    }

    /// Rebuilds a model from stored parameters. Topic assignments are not
    /// stored; they are redrawn from `seed`.
    pub fn from_params(params: ModelParams, corpus: Option<Arc<Corpus>>, seed: u64) -> Result<Self, ModelError> {
        let kind = params.kind();
        let need = || corpus.clone().ok_or(ModelError::NeedsText(kind));
        Ok(match params {
            ModelParams::BprMf { factors } => Self::Mf(factors),
            ModelParams::BprGmf { model } => Self::Gmf(GmfModel::from_parts(model.factors, model.net)?),
            ModelParams::BprHft {
                factors,
                kappa,
                phi_logits,
                config,
            } => {
                let mut rng = rng::stream(seed, INIT_STREAM);
                let mut m = HftModel::new(factors, need()?, config, &mut rng);
                m.kappa.set(0, 0, kappa);
                m.phi_logits = phi_logits;
                Self::Hft(m)
            }
            ModelParams::Jrl { factors, words, coupling } => Self::Jrl(JrlModel::new(
                factors,
                EmbeddingTable { vectors: words },
                need()?,
                coupling,
            )),
            ModelParams::TextCnn {
                user_encoder,
                item_encoder,
                item_bias,
            } => Self::TextCnn(TextFeatureModel::from_parts(user_encoder, item_encoder, item_bias, need()?)),
        })
    }
}

fn fit<M>(
    model: &mut M,
    config: &TrainConfig,
    split: &Split,
    threads: usize,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<Vec<EpochStats>, ModelError>
where
    M: PairwiseModel + Send + Sync,
    M::Extras: Send,
{
    let mut trainer = Trainer::new(config.clone(), &split.train, model)?;
    let mut out = Vec::with_capacity(config.epochs);
    if threads <= 1 {
        for _ in 0..config.epochs {
            let s = trainer.run_epoch(model)?;
            on_epoch(&s);
            out.push(s);
        }
        return Ok(out);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    for _ in 0..config.epochs {
        let s = pool.install(|| {
            trainer.run_epoch_sharded(model, threads, |m, work, l2| {
                work.par_iter_mut().for_each(|w| w.run(m, l2));
            })
        })?;
        on_epoch(&s);
        out.push(s);
    }
    Ok(out)
}

impl Scorer for AnyModel {
    fn n_items(&self) -> usize {
        match self {
            Self::Mf(m) => m.n_items(),
            Self::Gmf(m) => m.n_items(),
            Self::Hft(m) => m.n_items(),
            Self::Jrl(m) => m.n_items(),
            Self::TextCnn(m) => m.n_items(),
        }
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        match self {
            Self::Mf(m) => m.score(user, item),
            Self::Gmf(m) => m.score(user, item),
            Self::Hft(m) => m.score(user, item),
            Self::Jrl(m) => m.score(user, item),
            Self::TextCnn(m) => m.score(user, item),
        }
    }

    fn score_items(&self, user: usize, items: &[usize], out: &mut Vec<f64>) {
        match self {
            Self::Mf(m) => m.score_items(user, items, out),
            Self::Gmf(m) => m.score_items(user, items, out),
            Self::Hft(m) => m.score_items(user, items, out),
            Self::Jrl(m) => m.score_items(user, items, out),
            Self::TextCnn(m) => m.score_items(user, items, out),
        }
    }
}

/// Serializable parameters of each model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelParams {
    BprMf {
        factors: LatentFactorModel,
    },
    BprGmf {
        model: GmfModel,
    },
    BprHft {
        factors: LatentFactorModel,
        kappa: f64,
        phi_logits: Matrix,
        config: HftConfig,
    },
    Jrl {
        factors: LatentFactorModel,
        words: Matrix,
        coupling: GenerativeCoupling,
    },
    TextCnn {
        user_encoder: ConvEncoder,
        item_encoder: ConvEncoder,
        item_bias: Matrix,
    },
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::BprMf { .. } => ModelKind::BprMf,
            Self::BprGmf { .. } => ModelKind::BprGmf,
            Self::BprHft { .. } => ModelKind::BprHft,
            Self::Jrl { .. } => ModelKind::Jrl,
            Self::TextCnn { .. } => ModelKind::TextCnn,
        }
    }
}

