//! Paragraph-vector regularization (JRL-style).
//!
//! The same user and item factor vectors used for ranking act as paragraph
//! vectors of the owner's review document: each word must be predictable
//! from the owner vector against words drawn from the corpus unigram
//! distribution.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::Matrix;
use crate::math::{axpy, dot, log_sigmoid_clamped};
use crate::mf::{LatentFactorModel, ITEM_FACTORS, USER_FACTORS};
use crate::model::{bpr_data_term, BlockSpec, GradBlock, Gradients, PairwiseModel, Parameterized, Scorer, Triple};
use crate::rng::Rng64;
use crate::text::{Corpus, Document, EmbeddingTable, Owner};

pub const DEFAULT_NEGATIVES_PER_TOKEN: usize = 5;

/// Samples token ids proportionally to their corpus counts.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramSampler {
    cumulative: Vec<u64>,
}

impl UnigramSampler {
    /// Tokens with zero count are never drawn. An all-zero table falls back
    /// to uniform.
    pub fn new(counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let mut acc = 0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += if total == 0 { 1 } else { c };
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn sample(&self, rng: &mut Rng64) -> u32 {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.gen_range(0..total);
        self.cumulative.partition_point(|&c| c <= x) as u32
    }
}

/// Loss and gradients of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct TextLoss {
    pub loss: f64,
    pub owner_grad: Vec<f64>,
    /// `(token id, gradient)` for every embedding row touched, in first-use order.
    pub embedding_grads: Vec<(u32, Vec<f64>)>,
}

/// Draws `per_token` negatives for each token of `doc`.
pub fn sample_text_negatives(doc: &Document, per_token: usize, sampler: &UnigramSampler, rng: &mut Rng64) -> Vec<u32> {
    (0..doc.len() * per_token).map(|_| sampler.sample(rng)).collect()
}

/// `−Σ_w [ln σ(v·e_w) + Σ_neg ln σ(−v·e_neg)]` with the negatives given
/// explicitly (`negatives.len() = doc.len() · per_token`).
pub fn pv_text_loss_with(owner: &[f64], doc: &Document, words: &Matrix, negatives: &[u32]) -> TextLoss {
    let d = owner.len();
    let mut out = TextLoss {
        loss: 0.0,
        owner_grad: vec![0.0; d],
        embedding_grads: Vec::new(),
    };
    if doc.is_empty() {
        return out;
    }
    let per_token = negatives.len() / doc.len();
    let mut slot: alloc::collections::BTreeMap<u32, usize> = Default::default();
    let mut add = |out: &mut TextLoss, w: u32, coef: f64| {
        let idx = *slot.entry(w).or_insert_with(|| {
            out.embedding_grads.push((w, vec![0.0; d]));
            out.embedding_grads.len() - 1
        });
        axpy(coef, owner, &mut out.embedding_grads[idx].1);
        axpy(coef, words.row(w as usize), &mut out.owner_grad);
    };
    for (n, &w) in doc.tokens.iter().enumerate() {
        let (lp, dlp) = log_sigmoid_clamped(dot(owner, words.row(w as usize)));
        out.loss -= lp;
        add(&mut out, w, -dlp);
        for &neg in &negatives[n * per_token..(n + 1) * per_token] {
            let (ln_, dln) = log_sigmoid_clamped(-dot(owner, words.row(neg as usize)));
            out.loss -= ln_;
            add(&mut out, neg, dln);
        }
    }
    out
}

/// Samples negatives from `sampler` and evaluates [`pv_text_loss_with`].
pub fn pv_text_loss(
    owner: &[f64],
    doc: &Document,
    words: &EmbeddingTable,
    negatives_per_token: usize,
    sampler: &UnigramSampler,
    rng: &mut Rng64,
) -> TextLoss {
    let negs = sample_text_negatives(doc, negatives_per_token, sampler, rng);
    pv_text_loss_with(owner, doc, &words.vectors, &negs)
}

/// `bpr + λ·text + l2`
#[inline]
pub fn joint_objective(bpr_loss: f64, text_term: f64, lambda_text: f64, l2_term: f64) -> f64 {
    bpr_loss + lambda_text * text_term + l2_term
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenerativeCoupling {
    pub lambda_text: f64,
    pub negatives_per_token: usize,
}

impl Default for GenerativeCoupling {
    fn default() -> Self {
        Self {
            lambda_text: 0.1,
            negatives_per_token: DEFAULT_NEGATIVES_PER_TOKEN,
        }
    }
}

pub const WORD_EMBEDDINGS: usize = 3;

/// BPR-MF with user and item factors shared as paragraph vectors.
#[derive(Debug, Clone)]
pub struct JrlModel {
    pub factors: LatentFactorModel,
    /// `V × d`, trainable.
    pub words: Matrix,
    pub coupling: GenerativeCoupling,
    pub corpus: Arc<Corpus>,
    sampler: UnigramSampler,
}

/// Negatives sampled for each document touched by a batch.
#[derive(Debug, Clone, Default)]
pub struct TextNegatives {
    pub owners: Vec<(Owner, Vec<u32>)>,
}

impl JrlModel {
    pub fn new(factors: LatentFactorModel, words: EmbeddingTable, corpus: Arc<Corpus>, coupling: GenerativeCoupling) -> Self {
        assert_eq!(words.dim(), factors.dim(), "word embeddings must live in the factor space");
        let sampler = UnigramSampler::new(&corpus.unigram_counts());
        Self {
            factors,
            words: words.vectors,
            coupling,
            corpus,
            sampler,
        }
    }

    fn owner_vector(&self, owner: Owner) -> &[f64] {
        match owner {
            Owner::User(u) => self.factors.user(u),
            Owner::Item(i) => self.factors.item(i),
        }
    }

    fn owner_grad_row(grads: &mut Gradients, owner: Owner) -> &mut [f64] {
        match owner {
            Owner::User(u) => grads.block(USER_FACTORS).row_mut(u),
            Owner::Item(i) => grads.block(ITEM_FACTORS).row_mut(i),
        }
    }

    fn batch_owners(batch: &[Triple]) -> Vec<Owner> {
        let mut owners: Vec<Owner> = batch
            .iter()
            .flat_map(|t| [Owner::User(t.user), Owner::Item(t.pos), Owner::Item(t.neg)])
            .collect();
        owners.sort_unstable();
        owners.dedup();
        owners
    }
}

impl Scorer for JrlModel {
    fn n_items(&self) -> usize {
        self.factors.n_items()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        self.factors.score(user, item)
    }

    fn score_items(&self, user: usize, items: &[usize], out: &mut Vec<f64>) {
        self.factors.score_items(user, items, out)
    }
}

impl Parameterized for JrlModel {
    fn block_specs(&self) -> Vec<BlockSpec> {
        let mut s = self.factors.block_specs();
        s.push(BlockSpec::new("word_embeddings", true));
        s
    }

    fn blocks(&self) -> Vec<&Matrix> {
        let mut b = self.factors.blocks();
        b.push(&self.words);
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut b = self.factors.blocks_mut();
        b.push(&mut self.words);
        b
    }
}

impl PairwiseModel for JrlModel {
    type Extras = TextNegatives;

    fn prepare(&self, batch: &[Triple], rng: &mut Rng64) -> TextNegatives {
        if self.coupling.lambda_text == 0.0 {
            return TextNegatives::default();
        }
        let owners = Self::batch_owners(batch)
            .into_iter()
            .map(|o| {
                let negs = sample_text_negatives(self.corpus.doc(o), self.coupling.negatives_per_token, &self.sampler, rng);
                (o, negs)
            })
            .collect();
        TextNegatives { owners }
    }

    fn data_objective(&self, batch: &[Triple], extras: &TextNegatives, dropout: Option<&mut Rng64>, grads: &mut Gradients) -> f64 {
        let bpr = bpr_data_term(&self.factors, batch, dropout, grads);
        if self.coupling.lambda_text == 0.0 || batch.is_empty() {
            return bpr;
        }
        let w = self.coupling.lambda_text / batch.len() as f64;
        let mut text = 0.0;
        for (owner, negs) in &extras.owners {
            let doc = self.corpus.doc(*owner);
            if doc.is_empty() {
                continue;
            }
            let t = pv_text_loss_with(self.owner_vector(*owner), doc, &self.words, negs);
            text += t.loss;
            axpy(w, &t.owner_grad, Self::owner_grad_row(grads, *owner));
            let emb: &mut GradBlock = grads.block(WORD_EMBEDDINGS);
            for (tok, g) in &t.embedding_grads {
                axpy(w, g, emb.row_mut(*tok as usize));
            }
        }
        joint_objective(bpr, text / batch.len() as f64, self.coupling.lambda_text, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn empty_document_costs_nothing() {
        let words = Matrix::zeros(3, 2);
        let t = pv_text_loss_with(&[0.3, 0.1], &Document::default(), &words, &[]);
        assert_eq!(t.loss, 0.0);
        assert_eq!(t.owner_grad, vec![0.0, 0.0]);
        assert!(t.embedding_grads.is_empty());
    }

    #[test]
    fn orthogonal_terms_cost_two_ln2_per_token() {
        let words = Matrix::from_vec(3, 2, vec![0.0, 1.0, 0.0, 2.0, 0.0, -1.0]);
        let doc = Document::new(vec![0, 1, 2]);
        let t = pv_text_loss_with(&[1.0, 0.0], &doc, &words, &[1, 2, 0]);
        assert!((t.loss / 3.0 - 2.0 * core::f64::consts::LN_2).abs() < 1e-12);
        assert!((2.0 * core::f64::consts::LN_2 - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn joint_objective_arithmetic() {
        assert_eq!(joint_objective(1.0, 2.0, 0.5, 0.1), 2.1);
        assert_eq!(joint_objective(0.7, 123.0, 0.0, 0.2), 0.7 + 0.2);
    }

    #[test]
    fn unigram_sampler_follows_counts() {
        let s = UnigramSampler::new(&[0, 3, 1, 0]);
        let mut rng = seeded(8);
        let mut hist = [0usize; 4];
        for _ in 0..40_000 {
            hist[s.sample(&mut rng) as usize] += 1;
        }
        assert_eq!(hist[0], 0);
        assert_eq!(hist[3], 0);
        let frac = hist[1] as f64 / 40_000.0;
        assert!((frac - 0.75).abs() < 0.01, "{frac}");
    }
}
