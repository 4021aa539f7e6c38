//! Pairwise (BPR) training: negative sampling, the pairwise probability,
//! the regularized batch objective, optimizer steps and the
//! finite-difference gradient checker.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Dataset;
use crate::math;
use crate::model::{Gradients, PairwiseModel, Triple};
use crate::optim::{Adam, AdamConfig, Optimizer, Sgd};
use crate::rng::{self, Rng64};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            l2: 1e-4,
            negatives_per_positive: 5,
            epochs: 20,
            batch_size: 256,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// `σ(y_pos - y_neg)`: probability that the positive outranks the negative.
#[inline]
pub fn pairwise_probability(y_pos: f64, y_neg: f64) -> f64 {
    math::sigmoid(y_pos - y_neg)
}

/// Draws `count` items uniformly from the complement of `positives`
/// (sorted item indices) by rejection. Draws may repeat.
pub fn sample_negatives(
    user: usize,
    positives: &[usize],
    n_items: usize,
    count: usize,
    rng: &mut Rng64,
) -> Result<Vec<usize>> {
    if positives.len() >= n_items {
        return Err(Error::DegenerateUser { user });
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let j = rng.gen_range(0..n_items);
        if positives.binary_search(&j).is_err() {
            out.push(j);
        }
    }
    Ok(out)
}

/// Full batch objective: the model's data term plus
/// `l2 · Σ ‖row‖²` over every touched row of each regularized block.
pub fn objective<M: PairwiseModel + ?Sized>(
    model: &M,
    batch: &[Triple],
    extras: &M::Extras,
    l2: f64,
    dropout: Option<&mut Rng64>,
    grads: &mut Gradients,
) -> f64 {
    let mut loss = model.data_objective(batch, extras, dropout, grads);
    if l2 != 0.0 {
        let specs = model.block_specs();
        let blocks = model.blocks();
        for (b, spec) in specs.iter().enumerate() {
            if !spec.regularized {
                continue;
            }
            let rows: Vec<usize> = grads.blocks[b].touched_rows().to_vec();
            for r in rows {
                let p = blocks[b].row(r);
                loss += l2 * math::dot(p, p);
                math::axpy(2.0 * l2, p, grads.blocks[b].row_mut(r));
            }
        }
    }
    loss
}

pub enum AnyOptimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl AnyOptimizer {
    pub fn for_model<M: PairwiseModel + ?Sized>(config: &TrainConfig, model: &M) -> Self {
        match config.optimizer {
            OptimizerKind::Sgd => Self::Sgd(Sgd {
                learning_rate: config.learning_rate,
            }),
            OptimizerKind::Adam => Self::Adam(Adam::new(config.adam(), &model.blocks())),
        }
    }
}

impl Optimizer for AnyOptimizer {
    fn step(&mut self, params: &mut [&mut crate::Matrix], grads: &Gradients) {
        match self {
            Self::Sgd(o) => o.step(params, grads),
            Self::Adam(o) => o.step(params, grads),
        }
    }
}

/// Evaluates the objective on one batch and applies one optimizer step.
/// Returns the pre-step loss.
pub fn bpr_step<M: PairwiseModel + ?Sized, O: Optimizer + ?Sized>(
    model: &mut M,
    optimizer: &mut O,
    batch: &[Triple],
    extras: &M::Extras,
    l2: f64,
    dropout: Option<&mut Rng64>,
    grads: &mut Gradients,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    grads.clear();
    let loss = objective(model, batch, extras, l2, dropout, grads);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            learning_rate: f64::NAN,
        });
    }
    optimizer.step(&mut model.blocks_mut(), grads);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean batch objective weighted by batch size.
    pub loss: f64,
    pub triples: usize,
    /// Positives skipped because their user has no possible negative.
    pub skipped: usize,
}

/// Single-threaded, seed-deterministic BPR trainer.
///
/// Randomness is split into independent streams (pair sampling, dropout,
/// per-batch model extras, epoch hooks) so adding a model-side random
/// component never shifts the pair sequence.
pub struct Trainer {
    pub config: TrainConfig,
    positives: Vec<(usize, usize)>,
    user_items: Vec<Vec<usize>>,
    n_items: usize,
    optimizer: AnyOptimizer,
    grads: Gradients,
    sample_rng: Rng64,
    dropout_rng: Rng64,
    extras_rng: Rng64,
    hook_rng: Rng64,
    shard_grads: Vec<Gradients>,
    epoch: usize,
}

/// One micro-batch of a sharded step; [`ShardWork::run`] fills `loss` and
/// `grads`.
pub struct ShardWork<'a, E> {
    pub triples: &'a [Triple],
    pub extras: E,
    pub dropout: Rng64,
    pub grads: &'a mut Gradients,
    pub loss: f64,
}

impl<E> ShardWork<'_, E> {
    pub fn run<M: PairwiseModel<Extras = E> + ?Sized>(&mut self, model: &M, l2: f64) {
        self.grads.clear();
        self.loss = objective(model, self.triples, &self.extras, l2, Some(&mut self.dropout), self.grads);
    }
}

impl Trainer {
    pub fn new<M: PairwiseModel + ?Sized>(config: TrainConfig, train: &Dataset, model: &M) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if config.negatives_per_positive == 0 {
            return Err(Error::Config("negatives_per_positive must be positive".into()));
        }
        let optimizer = AnyOptimizer::for_model(&config, model);
        let seed = config.seed;
        Ok(Self {
            positives: train.pairs().to_vec(),
            user_items: train.user_items(),
            n_items: train.n_items(),
            optimizer,
            grads: Gradients::for_model(model),
            sample_rng: rng::stream(seed, 0),
            dropout_rng: rng::stream(seed, 1),
            extras_rng: rng::stream(seed, 2),
            hook_rng: rng::stream(seed, 3),
            shard_grads: Vec::new(),
            epoch: 0,
            config,
        })
    }

    /// Shuffled positives, each paired with freshly drawn negatives.
    pub fn epoch_triples(&mut self) -> (Vec<Triple>, usize) {
        let mut order = self.positives.clone();
        order.shuffle(&mut self.sample_rng);
        let mut triples = Vec::with_capacity(order.len() * self.config.negatives_per_positive);
        let mut skipped = 0;
        for (u, i) in order {
            match sample_negatives(
                u,
                &self.user_items[u],
                self.n_items,
                self.config.negatives_per_positive,
                &mut self.sample_rng,
            ) {
                Ok(negs) => triples.extend(negs.into_iter().map(|j| Triple::new(u, i, j))),
                Err(_) => skipped += 1,
            }
        }
        (triples, skipped)
    }

    pub fn run_epoch<M: PairwiseModel + ?Sized>(&mut self, model: &mut M) -> Result<EpochStats> {
        let epoch = self.epoch;
        let (triples, skipped) = self.epoch_triples();
        let mut total = 0.0;
        for (b, batch) in triples.chunks(self.config.batch_size).enumerate() {
            let extras = model.prepare(batch, &mut self.extras_rng);
            let loss = bpr_step(
                model,
                &mut self.optimizer,
                batch,
                &extras,
                self.config.l2,
                Some(&mut self.dropout_rng),
                &mut self.grads,
            )
            .map_err(|e| match e {
                Error::NonFiniteLoss { .. } => Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    learning_rate: self.config.learning_rate,
                },
                other => other,
            })?;
            total += loss * batch.len() as f64;
        }
        model.end_epoch(epoch, &mut self.hook_rng);
        self.epoch += 1;
        let n = triples.len();
        Ok(EpochStats {
            epoch,
            loss: if n == 0 { 0.0 } else { total / n as f64 },
            triples: n,
            skipped,
        })
    }

    /// Like [`Trainer::run_epoch`], but each batch is cut into `shards`
    /// micro-batches whose objectives are evaluated by `compute` (possibly
    /// in parallel) and combined with weights `|shard| / |batch|` before a
    /// single optimizer step. Model extras are prepared per shard, so text
    /// terms are normalized per micro-batch. The result depends on the
    /// shard count but not on how `compute` schedules the work.
    pub fn run_epoch_sharded<M, F>(&mut self, model: &mut M, shards: usize, mut compute: F) -> Result<EpochStats>
    where
        M: PairwiseModel + ?Sized,
        F: FnMut(&M, &mut [ShardWork<'_, M::Extras>], f64),
    {
        let shards = shards.max(1);
        while self.shard_grads.len() < shards {
            self.shard_grads.push(Gradients::for_model(model));
        }
        let epoch = self.epoch;
        let (triples, skipped) = self.epoch_triples();
        let mut total = 0.0;
        for (b, batch) in triples.chunks(self.config.batch_size).enumerate() {
            let size = batch.len().div_ceil(shards);
            let mut work: Vec<ShardWork<'_, M::Extras>> = batch
                .chunks(size)
                .zip(self.shard_grads.iter_mut())
                .map(|(part, grads)| ShardWork {
                    triples: part,
                    extras: model.prepare(part, &mut self.extras_rng),
                    dropout: rng::seeded(self.dropout_rng.gen()),
                    grads,
                    loss: 0.0,
                })
                .collect();
            compute(model, &mut work, self.config.l2);
            self.grads.clear();
            let mut loss = 0.0;
            for w in &work {
                let weight = w.triples.len() as f64 / batch.len() as f64;
                loss += weight * w.loss;
                self.grads.add_scaled(w.grads, weight);
            }
            drop(work);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    learning_rate: self.config.learning_rate,
                });
            }
            self.optimizer.step(&mut model.blocks_mut(), &self.grads);
            total += loss * batch.len() as f64;
        }
        model.end_epoch(epoch, &mut self.hook_rng);
        self.epoch += 1;
        let n = triples.len();
        Ok(EpochStats {
            epoch,
            loss: if n == 0 { 0.0 } else { total / n as f64 },
            triples: n,
            skipped,
        })
    }

    /// Runs `config.epochs` epochs.
    pub fn fit<M: PairwiseModel + ?Sized>(&mut self, model: &mut M) -> Result<Vec<EpochStats>> {
        (0..self.config.epochs).map(|_| self.run_epoch(model)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// `(block, flat index)` of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Relative error with a 1e-6 floor on the denominator, so entries whose
/// true gradient is zero are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the analytic gradient of the full objective (data term + L2,
/// no dropout) to central differences on every parameter.
pub fn gradient_check<M: PairwiseModel + ?Sized>(
    model: &mut M,
    batch: &[Triple],
    extras: &M::Extras,
    l2: f64,
    eps: f64,
) -> GradCheck {
    let mut grads = Gradients::for_model(model);
    objective(model, batch, extras, l2, None, &mut grads);
    let analytic: Vec<Vec<f64>> = grads
        .blocks
        .iter()
        .map(|g| g.values().as_slice().to_vec())
        .collect();
    let mut scratch = Gradients::for_model(model);
    let mut worst = GradCheck {
        max_relative_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let n_blocks = analytic.len();
    for b in 0..n_blocks {
        for k in 0..analytic[b].len() {
            let orig = model.blocks()[b].as_slice()[k];
            model.blocks_mut()[b].as_mut_slice()[k] = orig + eps;
            scratch.clear();
            let plus = objective(model, batch, extras, l2, None, &mut scratch);
            model.blocks_mut()[b].as_mut_slice()[k] = orig - eps;
            scratch.clear();
            let minus = objective(model, batch, extras, l2, None, &mut scratch);
            model.blocks_mut()[b].as_mut_slice()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic[b][k], numeric);
            worst.checked += 1;
            if err > worst.max_relative_error {
                worst.max_relative_error = err;
                worst.worst = (b, k);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interaction;
    use crate::mf::LatentFactorModel;
    use crate::model::Parameterized;
    use alloc::format;

    #[test]
    fn probability_examples() {
        assert_eq!(pairwise_probability(1.3, 1.3), 0.5);
        assert!((pairwise_probability(2.0, 0.0) - 0.8808).abs() < 1e-4);
        assert!((pairwise_probability(0.0, 2.0) - 0.1192).abs() < 1e-4);
        assert!((pairwise_probability(0.3, -1.1) + pairwise_probability(-1.1, 0.3) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forced_complement() {
        let mut rng = rng::seeded(0);
        let negs = sample_negatives(0, &[0], 2, 50, &mut rng).unwrap();
        assert!(negs.iter().all(|&j| j == 1));
        assert!(matches!(
            sample_negatives(3, &[0, 1], 2, 1, &mut rng),
            Err(Error::DegenerateUser { user: 3 })
        ));
        assert_eq!(TrainConfig::default().negatives_per_positive, 5);
    }

    fn single_pair_model(margin: f64) -> LatentFactorModel {
        let mut m = LatentFactorModel {
            user_factors: crate::Matrix::zeros(1, 1),
            item_factors: crate::Matrix::zeros(2, 1),
            item_bias: crate::Matrix::zeros(2, 1),
        };
        m.item_bias.set(0, 0, margin);
        m
    }

    #[test]
    fn equal_scores_cost_ln2() {
        let m = single_pair_model(0.0);
        let mut g = Gradients::for_model(&m);
        let loss = objective(&m, &[Triple::new(0, 0, 1)], &(), 0.0, None, &mut g);
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_pairs_floor_near_zero() {
        let m = single_pair_model(1e6);
        let mut g = Gradients::for_model(&m);
        let loss = objective(&m, &[Triple::new(0, 0, 1)], &(), 0.0, None, &mut g);
        assert!(loss > 0.0 && loss < 1.1e-12);
    }

    #[test]
    fn linear_scorer_gradient_is_exact() {
        // only the bias block matters: loss = -ln σ(b0 - b1), a smooth scalar function
        let mut m = single_pair_model(0.3);
        let check = gradient_check(&mut m, &[Triple::new(0, 0, 1)], &(), 0.0, 1e-5);
        assert!(check.max_relative_error < 1e-9);
    }

    #[test]
    fn loss_decreases_on_synthetic_set() {
        let mut events = alloc::vec::Vec::new();
        for u in 0..5 {
            for i in 0..5 {
                if (u + i) % 2 == 0 {
                    events.push(Interaction::new(&format!("u{u}"), &format!("i{i}"), 5.0, ""));
                }
            }
        }
        let ds = Dataset::from_interactions(events);
        let mut init = rng::seeded(9);
        let mut model = LatentFactorModel::new(5, 5, 4, &mut init);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 4,
            negatives_per_positive: 2,
            epochs: 10,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(cfg, &ds, &model).unwrap();
        let stats = trainer.fit(&mut model).unwrap();
        for w in stats.windows(2) {
            assert!(w[1].loss < w[0].loss, "{:?}", stats);
        }
        assert!(model.n_parameters() == 5 * 4 * 2 + 5);
    }
}
