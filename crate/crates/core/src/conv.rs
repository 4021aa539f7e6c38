//! DeepCoNN-style text-as-feature model: a convolutional encoder per side
//! maps the owner's review document to a `d`-vector; the score is the item
//! bias plus the inner product of the two encodings.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::Matrix;
use crate::math::{axpy, dot, log_sigmoid_clamped};
use crate::model::{BlockSpec, Gradients, PairwiseModel, Parameterized, Scorer, Triple};
use crate::rng::Rng64;
use crate::text::{Corpus, Document, OOV_ID};
use crate::{Error, Result};

pub const DEFAULT_FILTERS: usize = 100;
pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_DROPOUT: f64 = 0.5;

const EMBEDDING: usize = 0;
const FILTERS: usize = 1;
const FILTER_BIAS: usize = 2;
const PROJECTION: usize = 3;
const PROJECTION_BIAS: usize = 4;
const ENCODER_BLOCKS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvEncoder {
    /// `V × d_w`, trainable copy.
    pub embedding: Matrix,
    /// `n_filters × (window · d_w)`; filter row laid out position-major.
    pub filters: Matrix,
    /// `1 × n_filters`
    pub filter_bias: Matrix,
    /// `d × n_filters`
    pub projection: Matrix,
    /// `1 × d`
    pub projection_bias: Matrix,
    pub window: usize,
    pub dropout: f64,
}

/// Forward-pass record of one document encoding.
#[derive(Debug, Clone)]
pub struct EncodeTape {
    tokens: Vec<u32>,
    /// Window start of the max for each filter.
    argmax: Vec<usize>,
    /// Pre-activation max for each filter.
    max_pre: Vec<f64>,
    /// Pooled features after ReLU and dropout.
    features: Vec<f64>,
    mask: Option<Vec<f64>>,
    pub output: Vec<f64>,
}

impl EncodeTape {
    /// Pooled filter responses (after ReLU and dropout).
    pub fn pooled(&self) -> &[f64] {
        &self.features
    }
}

impl ConvEncoder {
    pub fn new(vocab: usize, word_dim: usize, n_filters: usize, window: usize, out_dim: usize, dropout: f64, rng: &mut Rng64) -> Self {
        assert!(window >= 1);
        Self {
            embedding: Matrix::uniform(vocab, word_dim, 0.1, rng),
            filters: Matrix::uniform(n_filters, window * word_dim, 0.1, rng),
            filter_bias: Matrix::zeros(1, n_filters),
            projection: Matrix::uniform(out_dim, n_filters, 0.1, rng),
            projection_bias: Matrix::zeros(1, out_dim),
            window,
            dropout,
        }
    }

    pub fn word_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn n_filters(&self) -> usize {
        self.filters.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.projection.rows()
    }

    fn padded(&self, doc: &Document) -> Vec<u32> {
        let mut tokens = doc.tokens.clone();
        while tokens.len() < self.window {
            tokens.push(OOV_ID);
        }
        tokens
    }

    /// Inference encoding (no dropout).
    pub fn encode(&self, doc: &Document) -> Vec<f64> {
        self.forward(doc, None).output
    }

    /// embed → valid convolution → ReLU → max over positions → dropout
    /// (training only) → linear projection.
    pub fn forward(&self, doc: &Document, dropout: Option<&mut Rng64>) -> EncodeTape {
        let tokens = self.padded(doc);
        let dw = self.word_dim();
        let nf = self.n_filters();
        let positions = tokens.len() + 1 - self.window;
        let mut window_buf = vec![0.0; self.window * dw];
        let mut max_pre = vec![f64::NEG_INFINITY; nf];
        let mut argmax = vec![0usize; nf];
        for p in 0..positions {
            for (o, &t) in tokens[p..p + self.window].iter().enumerate() {
                window_buf[o * dw..(o + 1) * dw].copy_from_slice(self.embedding.row(t as usize));
            }
            for f in 0..nf {
                let z = dot(self.filters.row(f), &window_buf) + self.filter_bias.get(0, f);
                if z > max_pre[f] {
                    max_pre[f] = z;
                    argmax[f] = p;
                }
            }
        }
        let mut features: Vec<f64> = max_pre.iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect();
        let mask = match dropout {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                let m: Vec<f64> = (0..nf).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                features.iter_mut().zip(&m).for_each(|(x, s)| *x *= s);
                Some(m)
            }
            _ => None,
        };
        let mut output = vec![0.0; self.out_dim()];
        self.projection.matvec(&features, &mut output);
        for (o, b) in output.iter_mut().zip(self.projection_bias.row(0)) {
            *o += b;
        }
        EncodeTape {
            tokens,
            argmax,
            max_pre,
            features,
            mask,
            output,
        }
    }

    /// Adds the parameter gradient for upstream `g_out` (w.r.t. the output)
    /// into blocks `first..first + 5` of `grads`.
    pub fn backward(&self, tape: &EncodeTape, g_out: &[f64], grads: &mut Gradients, first: usize) {
        let dw = self.word_dim();
        let nf = self.n_filters();
        {
            let gp = grads.block(first + PROJECTION);
            for (r, &g) in g_out.iter().enumerate() {
                axpy(g, &tape.features, gp.row_mut(r));
            }
        }
        {
            let gb = grads.block(first + PROJECTION_BIAS).row_mut(0);
            for (b, g) in gb.iter_mut().zip(g_out) {
                *b += g;
            }
        }
        let mut g_feat = vec![0.0; nf];
        self.projection.matvec_transpose_add(g_out, &mut g_feat);
        if let Some(mask) = &tape.mask {
            g_feat.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
        }
        grads.block(first + FILTERS).touch_all();
        grads.block(first + FILTER_BIAS).touch_all();
        // every token row is touched so the touched set is independent of values
        for &t in &tape.tokens {
            grads.block(first + EMBEDDING).row_mut(t as usize);
        }
        for f in 0..nf {
            if tape.max_pre[f] <= 0.0 || g_feat[f] == 0.0 {
                continue;
            }
            let g = g_feat[f];
            let p = tape.argmax[f];
            grads.block(first + FILTER_BIAS).row_mut(0)[f] += g;
            let frow = grads.block(first + FILTERS).row_mut(f);
            for (o, &t) in tape.tokens[p..p + self.window].iter().enumerate() {
                axpy(g, self.embedding.row(t as usize), &mut frow[o * dw..(o + 1) * dw]);
            }
            for (o, &t) in tape.tokens[p..p + self.window].iter().enumerate() {
                let wseg = &self.filters.row(f)[o * dw..(o + 1) * dw];
                axpy(g, wseg, grads.block(first + EMBEDDING).row_mut(t as usize));
            }
        }
    }

    fn specs(prefix: &'static [&'static str; 5]) -> [BlockSpec; 5] {
        [
            BlockSpec::new(prefix[0], true),
            BlockSpec::new(prefix[1], true),
            BlockSpec::new(prefix[2], true),
            BlockSpec::new(prefix[3], true),
            BlockSpec::new(prefix[4], true),
        ]
    }

    fn blocks(&self) -> [&Matrix; 5] {
        [&self.embedding, &self.filters, &self.filter_bias, &self.projection, &self.projection_bias]
    }

    fn blocks_mut(&mut self) -> [&mut Matrix; 5] {
        [
            &mut self.embedding,
            &mut self.filters,
            &mut self.filter_bias,
            &mut self.projection,
            &mut self.projection_bias,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvConfig {
    pub word_dim: usize,
    pub n_filters: usize,
    pub window: usize,
    pub dropout: f64,
}

impl ConvConfig {
    pub fn new(word_dim: usize) -> Self {
        Self {
            word_dim,
            n_filters: DEFAULT_FILTERS,
            window: DEFAULT_WINDOW,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

/// Separate user and item encoders plus item biases.
#[derive(Debug, Clone)]
pub struct TextFeatureModel {
    pub user_encoder: ConvEncoder,
    pub item_encoder: ConvEncoder,
    pub item_bias: Matrix,
    pub corpus: Arc<Corpus>,
    version: u64,
}

impl TextFeatureModel {
    pub fn new(corpus: Arc<Corpus>, n_items: usize, dim: usize, config: ConvConfig, rng: &mut Rng64) -> Self {
        let v = corpus.vocab_size.max(1);
        let user_encoder = ConvEncoder::new(v, config.word_dim, config.n_filters, config.window, dim, config.dropout, rng);
        let item_encoder = ConvEncoder::new(v, config.word_dim, config.n_filters, config.window, dim, config.dropout, rng);
        Self::from_parts(user_encoder, item_encoder, Matrix::zeros(n_items, 1), corpus)
    }

    pub fn from_parts(user_encoder: ConvEncoder, item_encoder: ConvEncoder, item_bias: Matrix, corpus: Arc<Corpus>) -> Self {
        assert_eq!(user_encoder.out_dim(), item_encoder.out_dim(), "encoders must share the output dimension");
        Self {
            user_encoder,
            item_encoder,
            item_bias,
            corpus,
            version: 0,
        }
    }

    /// Incremented on every mutable parameter access.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn dim(&self) -> usize {
        self.user_encoder.out_dim()
    }

    pub fn encode_user(&self, u: usize) -> Vec<f64> {
        self.user_encoder.encode(&self.corpus.user_docs[u])
    }

    pub fn encode_item(&self, i: usize) -> Vec<f64> {
        self.item_encoder.encode(&self.corpus.item_docs[i])
    }

    /// Replaces both encoders' word embeddings with `table` (`V × d_w`).
    pub fn set_word_embeddings(&mut self, table: &Matrix) {
        self.version += 1;
        self.user_encoder.embedding = table.clone();
        self.item_encoder.embedding = table.clone();
    }
}

/// `β_i + enc_u(u_doc) · enc_i(i_doc)` without dropout.
pub fn score_text(model: &TextFeatureModel, u_doc: &Document, i_doc: &Document, item: usize) -> f64 {
    model.item_bias.get(item, 0) + dot(&model.user_encoder.encode(u_doc), &model.item_encoder.encode(i_doc))
}

impl Scorer for TextFeatureModel {
    fn n_items(&self) -> usize {
        self.item_bias.rows()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        self.item_bias.get(item, 0) + dot(&self.encode_user(user), &self.encode_item(item))
    }

    /// Encodes the user once and every item in `items` afresh.
    fn score_items(&self, user: usize, items: &[usize], out: &mut Vec<f64>) {
        let ru = self.encode_user(user);
        out.clear();
        out.extend(items.iter().map(|&i| self.item_bias.get(i, 0) + dot(&ru, &self.encode_item(i))));
    }
}

impl Parameterized for TextFeatureModel {
    fn block_specs(&self) -> Vec<BlockSpec> {
        let mut s = Vec::with_capacity(2 * ENCODER_BLOCKS + 1);
        s.extend(ConvEncoder::specs(&["user.embedding", "user.filters", "user.filter_bias", "user.projection", "user.projection_bias"]));
        s.extend(ConvEncoder::specs(&["item.embedding", "item.filters", "item.filter_bias", "item.projection", "item.projection_bias"]));
        s.push(BlockSpec::new("item_bias", true));
        s
    }

    fn blocks(&self) -> Vec<&Matrix> {
        let mut b: Vec<&Matrix> = self.user_encoder.blocks().into();
        b.extend(self.item_encoder.blocks());
        b.push(&self.item_bias);
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        self.version += 1;
        let mut b: Vec<&mut Matrix> = self.user_encoder.blocks_mut().into();
        b.extend(self.item_encoder.blocks_mut());
        b.push(&mut self.item_bias);
        b
    }
}

impl PairwiseModel for TextFeatureModel {
    type Extras = ();

    fn prepare(&self, _batch: &[Triple], _rng: &mut Rng64) {}

    /// Each distinct user and item document in the batch is encoded once;
    /// representation gradients are summed before a single backward pass
    /// per document.
    fn data_objective(&self, batch: &[Triple], _extras: &(), mut dropout: Option<&mut Rng64>, grads: &mut Gradients) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let mut users: Vec<usize> = batch.iter().map(|t| t.user).collect();
        users.sort_unstable();
        users.dedup();
        let mut items: Vec<usize> = batch.iter().flat_map(|t| [t.pos, t.neg]).collect();
        items.sort_unstable();
        items.dedup();
        let user_tapes: Vec<EncodeTape> = users
            .iter()
            .map(|&u| self.user_encoder.forward(&self.corpus.user_docs[u], dropout.as_deref_mut()))
            .collect();
        let item_tapes: Vec<EncodeTape> = items
            .iter()
            .map(|&i| self.item_encoder.forward(&self.corpus.item_docs[i], dropout.as_deref_mut()))
            .collect();
        let d = self.dim();
        let mut gu = vec![vec![0.0; d]; users.len()];
        let mut gi = vec![vec![0.0; d]; items.len()];
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let bias_block = 2 * ENCODER_BLOCKS;
        for t in batch {
            let ui = users.binary_search(&t.user).expect("user indexed");
            let pi = items.binary_search(&t.pos).expect("item indexed");
            let ni = items.binary_search(&t.neg).expect("item indexed");
            let ru = &user_tapes[ui].output;
            let rp = &item_tapes[pi].output;
            let rn = &item_tapes[ni].output;
            let y_pos = self.item_bias.get(t.pos, 0) + dot(ru, rp);
            let y_neg = self.item_bias.get(t.neg, 0) + dot(ru, rn);
            let (lp, dlp) = log_sigmoid_clamped(y_pos - y_neg);
            loss -= lp;
            let g = -dlp * scale;
            // dL/dy_pos = g, dL/dy_neg = -g
            for k in 0..d {
                gu[ui][k] += g * (rp[k] - rn[k]);
            }
            axpy(g, ru, &mut gi[pi]);
            axpy(-g, ru, &mut gi[ni]);
            grads.block(bias_block).row_mut(t.pos)[0] += g;
            grads.block(bias_block).row_mut(t.neg)[0] -= g;
        }
        for (tape, g) in user_tapes.iter().zip(&gu) {
            self.user_encoder.backward(tape, g, grads, 0);
        }
        for (tape, g) in item_tapes.iter().zip(&gi) {
            self.item_encoder.backward(tape, g, grads, ENCODER_BLOCKS);
        }
        loss * scale
    }
}

/// Per-user and per-item encodings frozen at a model version.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationCache {
    pub users: Matrix,
    pub items: Matrix,
    pub item_bias: Vec<f64>,
    version: u64,
}

pub fn precompute_representations(model: &TextFeatureModel) -> RepresentationCache {
    let d = model.dim();
    let n_users = model.corpus.user_docs.len();
    let n_items = model.item_bias.rows();
    let mut users = Matrix::zeros(n_users, d);
    for u in 0..n_users {
        users.row_mut(u).copy_from_slice(&model.encode_user(u));
    }
    let mut items = Matrix::zeros(n_items, d);
    for i in 0..n_items {
        items.row_mut(i).copy_from_slice(&model.encode_item(i));
    }
    RepresentationCache {
        users,
        items,
        item_bias: (0..n_items).map(|i| model.item_bias.get(i, 0)).collect(),
        version: model.version(),
    }
}

impl RepresentationCache {
    pub fn is_stale(&self, model: &TextFeatureModel) -> bool {
        self.version != model.version()
    }

    pub fn check(&self, model: &TextFeatureModel) -> Result<()> {
        if self.is_stale(model) {
            Err(Error::StaleCache {
                cached: self.version,
                current: model.version(),
            })
        } else {
            Ok(())
        }
    }
}

impl Scorer for RepresentationCache {
    fn n_items(&self) -> usize {
        self.items.rows()
    }

    #[inline]
    fn score(&self, user: usize, item: usize) -> f64 {
        self.item_bias[item] + dot(self.users.row(user), self.items.row(item))
    }
}
