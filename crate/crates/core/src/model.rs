//! Parameter blocks, sparse-aware gradient buffers and the scorer traits
//! shared by every model.

use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::rng::Rng64;

/// Describes one parameter block of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: &'static str,
    /// Subject to the per-batch L2 penalty on touched rows.
    pub regularized: bool,
}

impl BlockSpec {
    pub const fn new(name: &'static str, regularized: bool) -> Self {
        Self { name, regularized }
    }
}

/// Gradient buffer for one parameter block. Tracks which rows were written
/// so optimizers and the L2 penalty only visit those rows.
#[derive(Debug, Clone)]
pub struct GradBlock {
    values: Matrix,
    touched: Vec<bool>,
    rows: Vec<usize>,
}

impl GradBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            values: Matrix::zeros(rows, cols),
            touched: alloc::vec![false; rows],
            rows: Vec::new(),
        }
    }

    /// Mutable access to row `r`, marking it touched.
    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        if !self.touched[r] {
            self.touched[r] = true;
            self.rows.push(r);
        }
        self.values.row_mut(r)
    }

    /// Marks every row touched; used by dense blocks.
    pub fn touch_all(&mut self) {
        for r in 0..self.touched.len() {
            if !self.touched[r] {
                self.touched[r] = true;
                self.rows.push(r);
            }
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        self.values.row(r)
    }

    /// Rows written since the last [`GradBlock::clear`], in first-touch order.
    pub fn touched_rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// `self += scale · other` over the rows `other` touched.
    pub fn add_scaled(&mut self, other: &GradBlock, scale: f64) {
        for &r in &other.rows {
            let src = other.values.row(r);
            for (d, s) in self.row_mut(r).iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn clear(&mut self) {
        for &r in &self.rows {
            self.touched[r] = false;
            self.values.row_mut(r).iter_mut().for_each(|x| *x = 0.0);
        }
        self.rows.clear();
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub blocks: Vec<GradBlock>,
}

impl Gradients {
    pub fn for_model<P: Parameterized + ?Sized>(model: &P) -> Self {
        Self {
            blocks: model
                .blocks()
                .iter()
                .map(|m| GradBlock::zeros(m.rows(), m.cols()))
                .collect(),
        }
    }

    #[inline]
    pub fn block(&mut self, b: usize) -> &mut GradBlock {
        &mut self.blocks[b]
    }

    pub fn clear(&mut self) {
        self.blocks.iter_mut().for_each(GradBlock::clear);
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.add_scaled(b, scale);
        }
    }
}

/// A model whose trainable state is an ordered list of matrices.
pub trait Parameterized {
    fn block_specs(&self) -> Vec<BlockSpec>;
    fn blocks(&self) -> Vec<&Matrix>;
    fn blocks_mut(&mut self) -> Vec<&mut Matrix>;

    fn n_parameters(&self) -> usize {
        self.blocks().iter().map(|m| m.rows() * m.cols()).sum()
    }
}

/// Read-only ranking scorer.
pub trait Scorer {
    fn n_items(&self) -> usize;

    fn score(&self, user: usize, item: usize) -> f64;

    /// Scores `items` for `user` into `out` (cleared first).
    fn score_items(&self, user: usize, items: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend(items.iter().map(|&i| self.score(user, i)));
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn n_items(&self) -> usize {
        (**self).n_items()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        (**self).score(user, item)
    }

    fn score_items(&self, user: usize, items: &[usize], out: &mut Vec<f64>) {
        (**self).score_items(user, items, out)
    }
}

/// A scorer that can record a forward pass and push an upstream gradient
/// back into its parameters.
pub trait DiffScorer {
    type Tape;

    /// `dropout` is `Some` in training mode only.
    fn forward(&self, user: usize, item: usize, dropout: Option<&mut Rng64>) -> (f64, Self::Tape);

    fn backward(&self, tape: &Self::Tape, upstream: f64, grads: &mut Gradients);
}

/// `(user, positive item, negative item)`
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

impl Triple {
    pub const fn new(user: usize, pos: usize, neg: usize) -> Self {
        Self { user, pos, neg }
    }
}

/// A model trainable by the pairwise engine in [`crate::train`].
pub trait PairwiseModel: Parameterized {
    /// Per-batch randomness that must stay fixed while the objective is
    /// evaluated (sampled negative words, for instance).
    type Extras;

    fn prepare(&self, batch: &[Triple], rng: &mut Rng64) -> Self::Extras;

    /// Data term of the batch objective (everything except L2). Adds its
    /// gradient into `grads` and returns the loss.
    fn data_objective(
        &self,
        batch: &[Triple],
        extras: &Self::Extras,
        dropout: Option<&mut Rng64>,
        grads: &mut Gradients,
    ) -> f64;

    /// Hook run after each training epoch.
    fn end_epoch(&mut self, _epoch: usize, _rng: &mut Rng64) {}
}

/// Mean BPR data term `-(1/B) Σ ln σ(y_pos - y_neg)` for any
/// differentiable pointwise scorer.
pub fn bpr_data_term<M: DiffScorer + ?Sized>(
    model: &M,
    batch: &[Triple],
    mut dropout: Option<&mut Rng64>,
    grads: &mut Gradients,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let (y_pos, tape_pos) = model.forward(t.user, t.pos, dropout.as_deref_mut());
        let (y_neg, tape_neg) = model.forward(t.user, t.neg, dropout.as_deref_mut());
        let (log_p, dlog_p) = crate::math::log_sigmoid_clamped(y_pos - y_neg);
        loss -= log_p;
        model.backward(&tape_pos, -dlog_p * scale, grads);
        model.backward(&tape_neg, dlog_p * scale, grads);
    }
    loss * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_block_tracks_and_clears() {
        let mut g = GradBlock::zeros(4, 2);
        g.row_mut(2)[0] = 1.0;
        g.row_mut(0)[1] = 2.0;
        g.row_mut(2)[1] = 3.0;
        assert_eq!(g.touched_rows(), &[2, 0]);
        g.clear();
        assert!(g.touched_rows().is_empty());
        assert!(g.values().as_slice().iter().all(|&x| x == 0.0));
        g.touch_all();
        assert_eq!(g.touched_rows().len(), 4);
    }
}
