//! Topic-model regularization of item factors (BPR-HFT).
//!
//! Each item's factor vector `γ_i` induces a topic mixture
//! `θ_i = softmax(κ·γ_i)` over `K = d` topics. Item documents are explained
//! by the mixture of topic-word distributions `φ_k = softmax(Λ_k)`; the
//! marginal negative log-likelihood of those documents is added to the BPR
//! objective. Between gradient phases, per-token topic assignments are
//! resampled and `φ` is re-estimated from assignment counts.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::Matrix;
use crate::math::{self, ln, softmax_scaled};
use crate::mf::{LatentFactorModel, ITEM_FACTORS};
use crate::model::{
    bpr_data_term, BlockSpec, Gradients, PairwiseModel, Parameterized, Scorer, Triple,
};
use crate::rng::Rng64;
use crate::text::{Corpus, Document};

pub const DEFAULT_SMOOTHING: f64 = 0.01;

/// `softmax(κ·γ)` computed with max subtraction.
pub fn item_topic_distribution(factor: &[f64], kappa: f64) -> Vec<f64> {
    let mut out = vec![0.0; factor.len()];
    softmax_scaled(factor, kappa, &mut out);
    out
}

/// `θ` for every row of `factors`.
pub fn topic_distributions(factors: &Matrix, kappa: f64) -> Matrix {
    let mut out = Matrix::zeros(factors.rows(), factors.cols());
    for r in 0..factors.rows() {
        softmax_scaled(factors.row(r), kappa, out.row_mut(r));
    }
    out
}

/// Row-wise softmax of topic-word logits.
pub fn phi_from_logits(logits: &Matrix) -> Matrix {
    topic_distributions(logits, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicState {
    /// `K × V`, rows on the simplex.
    pub phi: Matrix,
    pub kappa: f64,
    /// Topic of every token of every item document.
    pub assignments: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentMode {
    /// Draw `z ∝ θ_k φ_{k,w}`.
    Sample,
    /// `z = argmax_k θ_k φ_{k,w}` (lowest `k` on ties).
    Hard,
}

impl TopicState {
    /// Uniform random initial assignments; `φ` estimated from them.
    pub fn random(topics: usize, vocab: usize, docs: &[Document], kappa: f64, smoothing: f64, rng: &mut Rng64) -> Self {
        let assignments = docs
            .iter()
            .map(|d| d.tokens.iter().map(|_| rng.gen_range(0..topics as u32)).collect())
            .collect();
        let mut state = Self {
            phi: Matrix::zeros(topics, vocab),
            kappa,
            assignments,
        };
        reestimate_phi(&mut state, docs, smoothing);
        state
    }

    pub fn topics(&self) -> usize {
        self.phi.rows()
    }
}

/// Resamples every token's topic given the current mixtures `thetas`
/// (one row per document) and `state.phi`.
pub fn gibbs_resample_assignments(
    state: &mut TopicState,
    docs: &[Document],
    thetas: &Matrix,
    mode: AssignmentMode,
    rng: &mut Rng64,
) {
    let k_topics = state.topics();
    let mut weights = vec![0.0; k_topics];
    state.assignments.resize(docs.len(), Vec::new());
    for (d, doc) in docs.iter().enumerate() {
        let theta = thetas.row(d);
        let z = &mut state.assignments[d];
        z.resize(doc.tokens.len(), 0);
        for (n, &w) in doc.tokens.iter().enumerate() {
            let mut total = 0.0;
            for k in 0..k_topics {
                weights[k] = theta[k] * state.phi.get(k, w as usize);
                total += weights[k];
            }
            z[n] = match mode {
                AssignmentMode::Hard => {
                    let mut best = 0;
                    for k in 1..k_topics {
                        if weights[k] > weights[best] {
                            best = k;
                        }
                    }
                    best as u32
                }
                AssignmentMode::Sample => {
                    if total <= 0.0 {
                        rng.gen_range(0..k_topics as u32)
                    } else {
                        let mut target = rng.gen::<f64>() * total;
                        let mut pick = k_topics - 1;
                        for (k, &wk) in weights.iter().enumerate() {
                            if target < wk {
                                pick = k;
                                break;
                            }
                            target -= wk;
                        }
                        pick as u32
                    }
                }
            };
        }
    }
}

/// `φ_{k,w} = (n_{k,w} + α) / (n_k + V·α)` from the current assignments.
pub fn reestimate_phi(state: &mut TopicState, docs: &[Document], smoothing: f64) {
    let (k_topics, vocab) = (state.phi.rows(), state.phi.cols());
    let mut counts = Matrix::zeros(k_topics, vocab);
    for (doc, z) in docs.iter().zip(&state.assignments) {
        for (&w, &k) in doc.tokens.iter().zip(z) {
            let c = counts.get(k as usize, w as usize);
            counts.set(k as usize, w as usize, c + 1.0);
        }
    }
    for k in 0..k_topics {
        let row = counts.row_mut(k);
        let total: f64 = row.iter().sum::<f64>() + smoothing * vocab as f64;
        if total > 0.0 {
            row.iter_mut().for_each(|c| *c = (*c + smoothing) / total);
        } else {
            row.iter_mut().for_each(|c| *c = 1.0 / vocab as f64);
        }
    }
    state.phi = counts;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nll {
    pub value: f64,
    /// Tokens whose mixture probability fell below 1e-12 and were floored.
    pub floored: usize,
}

/// `−Σ_docs Σ_tokens ln Σ_k θ_k φ_{k,w}`; zero for an empty corpus.
pub fn corpus_negative_log_likelihood(docs: &[Document], thetas: &Matrix, phi: &Matrix) -> Nll {
    let mut out = Nll { value: 0.0, floored: 0 };
    for (d, doc) in docs.iter().enumerate() {
        let theta = thetas.row(d);
        for &w in &doc.tokens {
            let p: f64 = (0..phi.rows()).map(|k| theta[k] * phi.get(k, w as usize)).sum();
            if p < math::PROB_FLOOR {
                out.floored += 1;
                out.value -= ln(math::PROB_FLOOR);
            } else {
                out.value -= ln(p);
            }
        }
    }
    out
}

/// Gradients of one document's NLL.
struct DocGrad<'a> {
    /// dL/dγ for the document's item, length K.
    gamma: &'a mut [f64],
    kappa: &'a mut f64,
    /// dL/dφ accumulated densely (`K × V`).
    phi: &'a mut Matrix,
}

/// NLL of one document with mixture from `gamma, kappa`; accumulates
/// `scale ·` gradients into `out`.
fn doc_nll_backward(doc: &Document, gamma: &[f64], kappa: f64, phi: &Matrix, scale: f64, out: DocGrad<'_>) -> f64 {
    let k_topics = gamma.len();
    let theta = item_topic_distribution(gamma, kappa);
    let mut g_theta = vec![0.0; k_topics];
    let mut nll = 0.0;
    for &w in &doc.tokens {
        let w = w as usize;
        let p: f64 = (0..k_topics).map(|k| theta[k] * phi.get(k, w)).sum();
        if p < math::PROB_FLOOR {
            nll -= ln(math::PROB_FLOOR);
            continue;
        }
        nll -= ln(p);
        for k in 0..k_topics {
            g_theta[k] -= phi.get(k, w) / p;
            let g = out.phi.get(k, w) - scale * theta[k] / p;
            out.phi.set(k, w, g);
        }
    }
    // through θ = softmax(κγ)
    let mean: f64 = theta.iter().zip(&g_theta).map(|(t, g)| t * g).sum();
    for j in 0..k_topics {
        let ds = theta[j] * (g_theta[j] - mean);
        out.gamma[j] += scale * kappa * ds;
        *out.kappa += scale * gamma[j] * ds;
    }
    nll
}

/// Converts dL/dφ into dL/dΛ for `φ = softmax(Λ)` row-wise.
fn phi_to_logit_grad(phi: &Matrix, g_phi: &Matrix, out: &mut crate::model::GradBlock) {
    for k in 0..phi.rows() {
        let s: f64 = phi.row(k).iter().zip(g_phi.row(k)).map(|(p, g)| p * g).sum();
        let row = out.row_mut(k);
        for v in 0..phi.cols() {
            row[v] += phi.get(k, v) * (g_phi.get(k, v) - s);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HftConfig {
    pub lambda_text: f64,
    pub smoothing: f64,
    /// Gradient epochs between assignment/φ refreshes.
    pub epochs_per_round: usize,
    pub hard_assignments: bool,
}

impl Default for HftConfig {
    fn default() -> Self {
        Self {
            lambda_text: 0.1,
            smoothing: DEFAULT_SMOOTHING,
            epochs_per_round: 1,
            hard_assignments: false,
        }
    }
}

pub const KAPPA: usize = 3;
pub const PHI_LOGITS: usize = 4;

/// BPR-MF whose item factors are tied to a topic model of item documents.
/// Scoring is exactly MF.
#[derive(Debug, Clone)]
pub struct HftModel {
    pub factors: LatentFactorModel,
    /// `1 × 1`
    pub kappa: Matrix,
    /// `K × V` unnormalized topic-word logits.
    pub phi_logits: Matrix,
    pub assignments: Vec<Vec<u32>>,
    pub config: HftConfig,
    pub corpus: Arc<Corpus>,
}

impl HftModel {
    pub fn new(factors: LatentFactorModel, corpus: Arc<Corpus>, config: HftConfig, rng: &mut Rng64) -> Self {
        let k = factors.dim();
        let state = TopicState::random(k, corpus.vocab_size.max(1), &corpus.item_docs, 1.0, config.smoothing, rng);
        let mut phi_logits = state.phi.clone();
        phi_logits.as_mut_slice().iter_mut().for_each(|p| *p = ln(*p));
        Self {
            factors,
            kappa: Matrix::from_vec(1, 1, vec![1.0]),
            phi_logits,
            assignments: state.assignments,
            config,
            corpus,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.get(0, 0)
    }

    pub fn phi(&self) -> Matrix {
        phi_from_logits(&self.phi_logits)
    }

    pub fn thetas(&self) -> Matrix {
        topic_distributions(&self.factors.item_factors, self.kappa())
    }

    pub fn topic_state(&self) -> TopicState {
        TopicState {
            phi: self.phi(),
            kappa: self.kappa(),
            assignments: self.assignments.clone(),
        }
    }

    /// Marginal NLL of all item documents under the current parameters.
    pub fn corpus_nll(&self) -> Nll {
        corpus_negative_log_likelihood(&self.corpus.item_docs, &self.thetas(), &self.phi())
    }

    /// Assignment refresh and `φ` re-estimation from the new counts.
    pub fn refresh_topics(&mut self, mode: AssignmentMode, rng: &mut Rng64) {
        let mut state = self.topic_state();
        gibbs_resample_assignments(&mut state, &self.corpus.item_docs, &self.thetas(), mode, rng);
        reestimate_phi(&mut state, &self.corpus.item_docs, self.config.smoothing);
        self.assignments = state.assignments;
        self.phi_logits = state.phi;
        self.phi_logits.as_mut_slice().iter_mut().for_each(|p| *p = ln(*p));
    }

    /// One alternating round on the topic objective alone: a gradient step
    /// on the corpus NLL w.r.t. item factors and κ, then token reassignment
    /// and `φ` re-estimation. The step starts at `learning_rate` and is
    /// halved (up to 30 times) until the NLL does not increase; if no such
    /// step exists the parameters are left unchanged. Returns the NLL after
    /// the round.
    pub fn alternating_round(&mut self, learning_rate: f64, mode: AssignmentMode, rng: &mut Rng64) -> Nll {
        let before = self.corpus_nll().value;
        let (g_factors, g_kappa) = self.nll_factor_gradient();
        let (old_factors, old_kappa) = (self.factors.item_factors.clone(), self.kappa());
        let mut lr = learning_rate;
        for _ in 0..30 {
            for (p, (o, g)) in self
                .factors
                .item_factors
                .as_mut_slice()
                .iter_mut()
                .zip(old_factors.as_slice().iter().zip(g_factors.as_slice()))
            {
                *p = o - lr * g;
            }
            self.kappa.set(0, 0, old_kappa - lr * g_kappa);
            if self.corpus_nll().value <= before {
                break;
            }
            lr *= 0.5;
            self.factors.item_factors = old_factors.clone();
            self.kappa.set(0, 0, old_kappa);
        }
        self.refresh_topics(mode, rng);
        self.corpus_nll()
    }

    /// Re-estimates `φ` from the current assignments, then reassigns
    /// tokens. This is the topic half of one alternating round.
    pub fn reestimate_then_reassign(&mut self, mode: AssignmentMode, rng: &mut Rng64) {
        let mut state = self.topic_state();
        reestimate_phi(&mut state, &self.corpus.item_docs, self.config.smoothing);
        gibbs_resample_assignments(&mut state, &self.corpus.item_docs, &self.thetas(), mode, rng);
        self.assignments = state.assignments;
        self.phi_logits = state.phi;
        self.phi_logits.as_mut_slice().iter_mut().for_each(|p| *p = ln(*p));
    }

    /// `λ · scale · Σ_items NLL` with gradients w.r.t. item factors, κ and
    /// the φ logits.
    fn text_term(&self, items: &[usize], scale: f64, grads: &mut Gradients) -> f64 {
        let phi = self.phi();
        let kappa = self.kappa();
        let w = self.config.lambda_text * scale;
        let mut g_phi = Matrix::zeros(phi.rows(), phi.cols());
        let mut g_kappa = 0.0;
        let mut total = 0.0;
        for &i in items {
            let gamma = self.factors.item(i);
            let doc = &self.corpus.item_docs[i];
            let out = DocGrad {
                gamma: grads.block(ITEM_FACTORS).row_mut(i),
                kappa: &mut g_kappa,
                phi: &mut g_phi,
            };
            total += doc_nll_backward(doc, gamma, kappa, &phi, w, out);
        }
        grads.block(KAPPA).row_mut(0)[0] += g_kappa;
        phi_to_logit_grad(&phi, &g_phi, grads.block(PHI_LOGITS));
        w * total
    }

    /// Gradient of the full-corpus NLL w.r.t. item factors and κ only.
    pub fn nll_factor_gradient(&self) -> (Matrix, f64) {
        let phi = self.phi();
        let kappa = self.kappa();
        let mut g_factors = Matrix::zeros(self.factors.item_factors.rows(), self.factors.dim());
        let mut g_phi = Matrix::zeros(phi.rows(), phi.cols());
        let mut g_kappa = 0.0;
        for (i, doc) in self.corpus.item_docs.iter().enumerate() {
            let out = DocGrad {
                gamma: g_factors.row_mut(i),
                kappa: &mut g_kappa,
                phi: &mut g_phi,
            };
            doc_nll_backward(doc, self.factors.item(i), kappa, &phi, 1.0, out);
        }
        (g_factors, g_kappa)
    }
}

impl Scorer for HftModel {
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

impl Parameterized for HftModel {
    fn block_specs(&self) -> Vec<BlockSpec> {
        let mut s = self.factors.block_specs();
        s.push(BlockSpec::new("kappa", false));
        s.push(BlockSpec::new("phi_logits", false));
        s
    }

    fn blocks(&self) -> Vec<&Matrix> {
        let mut b = self.factors.blocks();
        b.push(&self.kappa);
        b.push(&self.phi_logits);
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut b = self.factors.blocks_mut();
        b.push(&mut self.kappa);
        b.push(&mut self.phi_logits);
        b
    }
}

impl PairwiseModel for HftModel {
    type Extras = ();

    fn prepare(&self, _batch: &[Triple], _rng: &mut Rng64) {}

    fn data_objective(&self, batch: &[Triple], _extras: &(), dropout: Option<&mut Rng64>, grads: &mut Gradients) -> f64 {
        let bpr = bpr_data_term(&self.factors, batch, dropout, grads);
        if self.config.lambda_text == 0.0 || batch.is_empty() {
            return bpr;
        }
        let mut items: Vec<usize> = batch.iter().flat_map(|t| [t.pos, t.neg]).collect();
        items.sort_unstable();
        items.dedup();
        bpr + self.text_term(&items, 1.0 / batch.len() as f64, grads)
    }

    fn end_epoch(&mut self, epoch: usize, rng: &mut Rng64) {
        if self.config.lambda_text == 0.0 {
            return;
        }
        if (epoch + 1) % self.config.epochs_per_round.max(1) == 0 {
            let mode = if self.config.hard_assignments {
                AssignmentMode::Hard
            } else {
                AssignmentMode::Sample
            };
            self.refresh_topics(mode, rng);
        }
    }
}
