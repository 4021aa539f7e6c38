//! Fully connected network used as the interaction function of GMF.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::Matrix;
use crate::model::{BlockSpec, Gradients};
use crate::rng::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseLayer {
    /// `out × in`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Self {
        assert_eq!(weight.rows(), bias.len());
        let n = bias.len();
        Self {
            weight,
            bias: Matrix::from_vec(1, n, bias),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseNetwork {
    pub layers: Vec<DenseLayer>,
    /// Dropout on hidden-layer outputs in training mode.
    pub dropout: f64,
}

/// Activations recorded by [`DenseNetwork::forward`].
#[derive(Debug, Clone)]
pub struct DenseTape {
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl DenseTape {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("tape has at least the input")
    }
}

/// Parameter gradients of a network, layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl DenseNetwork {
    /// `hidden` ReLU layers of width `width`, then a linear layer to one
    /// output. Weights uniform(-0.1, 0.1), biases zero.
    pub fn mlp(input: usize, hidden: usize, width: usize, dropout: f64, rng: &mut Rng64) -> Self {
        let mut layers = Vec::with_capacity(hidden + 1);
        let mut fan_in = input;
        for _ in 0..hidden {
            layers.push(DenseLayer::new(
                Matrix::uniform(width, fan_in, 0.1, rng),
                vec![0.0; width],
                Activation::Relu,
            ));
            fan_in = width;
        }
        layers.push(DenseLayer::new(
            Matrix::uniform(1, fan_in, 0.1, rng),
            vec![0.0],
            Activation::Identity,
        ));
        Self { layers, dropout }
    }

    /// Single linear layer with unit weights: computes the sum of its input.
    pub fn sum_of_inputs(input: usize) -> Self {
        let mut w = Matrix::zeros(1, input);
        w.fill(1.0);
        Self {
            layers: vec![DenseLayer::new(w, vec![0.0], Activation::Identity)],
            dropout: 0.0,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::inputs)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    /// Checks that layer widths chain.
    pub fn is_consistent(&self) -> bool {
        !self.layers.is_empty()
            && self.layers.windows(2).all(|w| w[0].outputs() == w[1].inputs())
            && self.layers.iter().all(|l| l.bias.cols() == l.outputs())
    }

    pub fn block_specs(&self) -> Vec<BlockSpec> {
        let mut specs = Vec::with_capacity(2 * self.layers.len());
        for _ in &self.layers {
            specs.push(BlockSpec::new("dense.weight", true));
            specs.push(BlockSpec::new("dense.bias", true));
        }
        specs
    }

    pub fn blocks(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Inference when `dropout` is `None`.
    pub fn forward(&self, input: &[f64], mut dropout: Option<&mut Rng64>) -> DenseTape {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n);
        inputs.push(input.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs()];
            layer.weight.matvec(&inputs[l], &mut z);
            for (zi, bi) in z.iter_mut().zip(layer.bias.row(0)) {
                *zi += bi;
            }
            let mut a: Vec<f64> = match layer.activation {
                Activation::Relu => z.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
                Activation::Identity => z.clone(),
            };
            let hidden = l + 1 < n;
            let mask = match dropout.as_deref_mut() {
                Some(rng) if hidden && self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    let m: Vec<f64> = (0..a.len())
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    a.iter_mut().zip(&m).for_each(|(x, s)| *x *= s);
                    Some(m)
                }
                _ => None,
            };
            pre.push(z);
            masks.push(mask);
            inputs.push(a);
        }
        DenseTape { inputs, pre, masks }
    }

    /// Backpropagates `upstream` (gradient w.r.t. the output). Parameter
    /// gradients are added into `grads` starting at block `first_block`
    /// when given; the input gradient is added into `input_grad`.
    pub fn backward(
        &self,
        tape: &DenseTape,
        upstream: &[f64],
        mut grads: Option<(&mut Gradients, usize)>,
        input_grad: &mut [f64],
    ) {
        let mut g: Vec<f64> = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &tape.masks[l] {
                g.iter_mut().zip(mask).for_each(|(x, m)| *x *= m);
            }
            if layer.activation == Activation::Relu {
                for (gi, &z) in g.iter_mut().zip(&tape.pre[l]) {
                    if z <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            if let Some((grads, first)) = grads.as_mut() {
                let x = &tape.inputs[l];
                let wb = grads.block(*first + 2 * l);
                for (o, &go) in g.iter().enumerate() {
                    crate::math::axpy(go, x, wb.row_mut(o));
                }
                let bb = grads.block(*first + 2 * l + 1).row_mut(0);
                for (b, &go) in bb.iter_mut().zip(&g) {
                    *b += go;
                }
            }
            let mut next = vec![0.0; layer.inputs()];
            layer.weight.matvec_transpose_add(&g, &mut next);
            g = next;
        }
        for (ig, gi) in input_grad.iter_mut().zip(&g) {
            *ig += gi;
        }
    }

    /// One forward and backward pass without dropout.
    pub fn forward_backward(&self, input: &[f64], upstream: &[f64]) -> (Vec<f64>, DenseGrads, Vec<f64>) {
        let tape = self.forward(input, None);
        let mut grads = Gradients {
            blocks: self
                .blocks()
                .iter()
                .map(|m| crate::model::GradBlock::zeros(m.rows(), m.cols()))
                .collect(),
        };
        let mut input_grad = vec![0.0; input.len()];
        self.backward(&tape, upstream, Some((&mut grads, 0)), &mut input_grad);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (k, b) in grads.blocks.iter().enumerate() {
            if k % 2 == 0 {
                weights.push(b.values().clone());
            } else {
                biases.push(b.values().row(0).to_vec());
            }
        }
        (tape.output().to_vec(), DenseGrads { weights, biases }, input_grad)
    }
}
