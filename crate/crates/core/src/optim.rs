//! SGD and Adam over parameter blocks. Only rows touched in the current
//! batch are updated; Adam keeps a global step counter and leaves the
//! moments of untouched rows as they are (lazy/sparse Adam).

use alloc::vec::Vec;

use crate::linalg::Matrix;
use crate::math::sqrt;
use crate::model::Gradients;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments for one parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step on `param` at step `t` (1-based).
#[inline]
fn adam_kernel(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &AdamConfig) {
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for k in 0..param.len() {
        let g = grad[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        param[k] -= cfg.learning_rate * m_hat / (sqrt(v_hat) + cfg.epsilon);
    }
}

/// Standard Adam update of a whole slice.
pub fn adam_update(param: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(param.len(), grad.len());
    assert_eq!(param.len(), state.m.len());
    state.t += 1;
    let AdamState { m, v, t } = state;
    adam_kernel(param, grad, m, v, *t, cfg);
}

pub trait Optimizer {
    /// Applies the gradient of the touched rows to `params`.
    fn step(&mut self, params: &mut [&mut Matrix], grads: &Gradients);
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [&mut Matrix], grads: &Gradients) {
        for (p, g) in params.iter_mut().zip(&grads.blocks) {
            for &r in g.touched_rows() {
                crate::math::axpy(-self.learning_rate, g.row(r), p.row_mut(r));
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Matrix]) -> Self {
        Self {
            config,
            m: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [&mut Matrix], grads: &Gradients) {
        self.t += 1;
        for (b, (p, g)) in params.iter_mut().zip(&grads.blocks).enumerate() {
            for &r in g.touched_rows() {
                adam_kernel(
                    p.row_mut(r),
                    g.row(r),
                    self.m[b].row_mut(r),
                    self.v[b].row_mut(r),
                    self.t,
                    &self.config,
                );
            }
        }
    }
}
