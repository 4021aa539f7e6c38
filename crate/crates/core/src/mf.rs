//! Latent-factor scorers: BPR-MF (`β_i + u·i`) and BPR-GMF
//! (`β_i + F(u ⊙ i)` with `F` a dense network).

use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{DenseNetwork, DenseTape};
use crate::linalg::Matrix;
use crate::math::dot;
use crate::model::{
    bpr_data_term, BlockSpec, DiffScorer, Gradients, PairwiseModel, Parameterized, Scorer, Triple,
};
use crate::rng::Rng64;
use crate::{Error, Result};

pub const USER_FACTORS: usize = 0;
pub const ITEM_FACTORS: usize = 1;
pub const ITEM_BIAS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatentFactorModel {
    pub user_factors: Matrix,
    pub item_factors: Matrix,
    /// `n_items × 1`
    pub item_bias: Matrix,
}

impl LatentFactorModel {
    /// Factors uniform(-0.1, 0.1), biases zero.
    pub fn new(n_users: usize, n_items: usize, dim: usize, rng: &mut Rng64) -> Self {
        assert!(dim >= 1, "latent dimension must be at least 1");
        Self {
            user_factors: Matrix::uniform(n_users, dim, 0.1, rng),
            item_factors: Matrix::uniform(n_items, dim, 0.1, rng),
            item_bias: Matrix::zeros(n_items, 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.user_factors.cols()
    }

    pub fn n_users(&self) -> usize {
        self.user_factors.rows()
    }

    pub fn user(&self, u: usize) -> &[f64] {
        self.user_factors.row(u)
    }

    pub fn item(&self, i: usize) -> &[f64] {
        self.item_factors.row(i)
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.item_bias.get(i, 0)
    }

    fn check(&self, u: usize, i: usize) -> Result<()> {
        if u >= self.n_users() {
            return Err(Error::IndexOutOfRange { kind: "user", index: u, len: self.n_users() });
        }
        if i >= self.item_factors.rows() {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: i,
                len: self.item_factors.rows(),
            });
        }
        Ok(())
    }

    pub(crate) fn range_check(&self, u: usize, i: usize) -> Result<()> {
        self.check(u, i)
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors.is_finite() && self.item_factors.is_finite() && self.item_bias.is_finite()
    }
}

/// `β_i + u·i`
pub fn score_mf(model: &LatentFactorModel, u: usize, i: usize) -> Result<f64> {
    model.check(u, i)?;
    Ok(model.bias(i) + dot(model.user(u), model.item(i)))
}

impl Scorer for LatentFactorModel {
    fn n_items(&self) -> usize {
        self.item_factors.rows()
    }

    #[inline]
    fn score(&self, user: usize, item: usize) -> f64 {
        self.bias(item) + dot(self.user(user), self.item(item))
    }

    fn score_items(&self, user: usize, items: &[usize], out: &mut Vec<f64>) {
        let u = self.user(user);
        out.clear();
        out.extend(items.iter().map(|&i| self.bias(i) + dot(u, self.item(i))));
    }
}

impl Parameterized for LatentFactorModel {
    fn block_specs(&self) -> Vec<BlockSpec> {
        vec![
            BlockSpec::new("user_factors", true),
            BlockSpec::new("item_factors", true),
            BlockSpec::new("item_bias", true),
        ]
    }

    fn blocks(&self) -> Vec<&Matrix> {
        vec![&self.user_factors, &self.item_factors, &self.item_bias]
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.user_factors, &mut self.item_factors, &mut self.item_bias]
    }
}

impl DiffScorer for LatentFactorModel {
    type Tape = (usize, usize);

    fn forward(&self, user: usize, item: usize, _dropout: Option<&mut Rng64>) -> (f64, Self::Tape) {
        (self.score(user, item), (user, item))
    }

    fn backward(&self, &(u, i): &Self::Tape, upstream: f64, grads: &mut Gradients) {
        crate::math::axpy(upstream, self.item(i), grads.block(USER_FACTORS).row_mut(u));
        crate::math::axpy(upstream, self.user(u), grads.block(ITEM_FACTORS).row_mut(i));
        grads.block(ITEM_BIAS).row_mut(i)[0] += upstream;
    }
}

impl PairwiseModel for LatentFactorModel {
    type Extras = ();

    fn prepare(&self, _batch: &[Triple], _rng: &mut Rng64) {}

    fn data_objective(
        &self,
        batch: &[Triple],
        _extras: &(),
        dropout: Option<&mut Rng64>,
        grads: &mut Gradients,
    ) -> f64 {
        bpr_data_term(self, batch, dropout, grads)
    }
}

/// Generalized MF: the elementwise product of user and item factors goes
/// through a dense network with a single output.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GmfModel {
    pub factors: LatentFactorModel,
    pub net: DenseNetwork,
}

impl GmfModel {
    pub fn new(
        n_users: usize,
        n_items: usize,
        dim: usize,
        hidden_layers: usize,
        dropout: f64,
        rng: &mut Rng64,
    ) -> Self {
        let factors = LatentFactorModel::new(n_users, n_items, dim, rng);
        let net = DenseNetwork::mlp(dim, hidden_layers, dim, dropout, rng);
        Self { factors, net }
    }

    pub fn from_parts(factors: LatentFactorModel, net: DenseNetwork) -> Result<Self> {
        if !net.is_consistent() || net.input_width() != factors.dim() || net.output_width() != 1 {
            return Err(Error::Config(alloc::format!(
                "network maps {} -> {} but GMF needs {} -> 1",
                net.input_width(),
                net.output_width(),
                factors.dim()
            )));
        }
        Ok(Self { factors, net })
    }

    fn product(&self, u: usize, i: usize) -> Vec<f64> {
        self.factors
            .user(u)
            .iter()
            .zip(self.factors.item(i))
            .map(|(a, b)| a * b)
            .collect()
    }
}

/// `β_i + F(u ⊙ i)` in inference mode.
pub fn score_gmf(model: &GmfModel, u: usize, i: usize) -> Result<f64> {
    model.factors.range_check(u, i)?;
    Ok(model.score(u, i))
}

impl Scorer for GmfModel {
    fn n_items(&self) -> usize {
        self.factors.n_items()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        let x = self.product(user, item);
        self.factors.bias(item) + self.net.forward(&x, None).output()[0]
    }
}

impl Parameterized for GmfModel {
    fn block_specs(&self) -> Vec<BlockSpec> {
        let mut s = self.factors.block_specs();
        s.extend(self.net.block_specs());
        s
    }

    fn blocks(&self) -> Vec<&Matrix> {
        let mut b = self.factors.blocks();
        b.extend(self.net.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut b = self.factors.blocks_mut();
        b.extend(self.net.blocks_mut());
        b
    }
}

pub struct GmfTape {
    user: usize,
    item: usize,
    net: DenseTape,
}

impl DiffScorer for GmfModel {
    type Tape = GmfTape;

    fn forward(&self, user: usize, item: usize, dropout: Option<&mut Rng64>) -> (f64, GmfTape) {
        let x = self.product(user, item);
        let net = self.net.forward(&x, dropout);
        let y = self.factors.bias(item) + net.output()[0];
        (y, GmfTape { user, item, net })
    }

    fn backward(&self, tape: &GmfTape, upstream: f64, grads: &mut Gradients) {
        let d = self.factors.dim();
        let mut gx = vec![0.0; d];
        self.net.backward(&tape.net, &[upstream], Some((grads, 3)), &mut gx);
        let (u, i) = (tape.user, tape.item);
        let uf = self.factors.user(u);
        let itf = self.factors.item(i);
        let gu = grads.block(USER_FACTORS).row_mut(u);
        for k in 0..d {
            gu[k] += gx[k] * itf[k];
        }
        let gi = grads.block(ITEM_FACTORS).row_mut(i);
        for k in 0..d {
            gi[k] += gx[k] * uf[k];
        }
        grads.block(ITEM_BIAS).row_mut(i)[0] += upstream;
    }
}

impl PairwiseModel for GmfModel {
    type Extras = ();

    fn prepare(&self, _batch: &[Triple], _rng: &mut Rng64) {}

    fn data_objective(
        &self,
        batch: &[Triple],
        _extras: &(),
        dropout: Option<&mut Rng64>,
        grads: &mut Gradients,
    ) -> f64 {
        bpr_data_term(self, batch, dropout, grads)
    }
}
