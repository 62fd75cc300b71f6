//! Feedforward networks over a flat parameter vector.
//!
//! Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs. Its parameters
//! are stored contiguously as a row-major `out × in` weight block followed by
//! `out` biases. Hidden layers apply their activation; the last layer is
//! always linear.

use serde::{Deserialize, Serialize};

use super::rng::Rng;
use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `x` for `x > 0`, `exp(x) - 1` otherwise (α = 1).
    Elu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed in terms of the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Elu => 0,
            Activation::Tanh => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Elu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlice {
    inputs: usize,
    outputs: usize,
    weights: usize,
    bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    layout: Vec<LayerSlice>,
}

/// Cached intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct GradTape {
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    consumed: bool,
}

impl GradTape {
    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

fn build_layout(sizes: &[usize]) -> (Vec<LayerSlice>, usize) {
    let mut offset = 0;
    let layout = sizes
        .windows(2)
        .map(|w| {
            let s = LayerSlice {
                inputs: w[0],
                outputs: w[1],
                weights: offset,
                bias: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            s
        })
        .collect();
    (layout, offset)
}

impl Mlp {
    /// Zero-initialised network. `activations` has one entry per hidden layer.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least an input and an output size"));
        }
        if sizes[1..].contains(&0) {
            return Err(Error::invalid("layer output sizes must be positive"));
        }
        check_len("hidden activations", activations.len(), sizes.len() - 2)?;
        let (layout, n) = build_layout(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: vec![0.0; n],
            layout,
        })
    }

    /// Same activation on every hidden layer.
    pub fn zeros_uniform(sizes: &[usize], activation: Activation) -> Result<Self> {
        let acts = vec![activation; sizes.len().saturating_sub(2)];
        Self::zeros(sizes, &acts)
    }

    /// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros_uniform(sizes, activation)?;
        for l in net.layout.clone() {
            let fan = (l.inputs + l.outputs) as f64;
            let limit = (6.0 / fan).sqrt();
            for w in &mut net.params[l.weights..l.bias] {
                *w = (2.0 * rng.uniform() - 1.0) * limit;
            }
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], activations: &[Activation], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        check_len("params", params.len(), self.params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        self.params = params;
        Ok(())
    }

    /// Whether two networks share sizes and activations.
    pub fn same_layout(&self, other: &Mlp) -> bool {
        self.sizes == other.sizes && self.activations == other.activations
    }

    /// Weight block of layer `l` as (row-major `out × in` weights, biases).
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let s = self.layout[l];
        (
            &self.params[s.weights..s.bias],
            &self.params[s.bias..s.bias + s.outputs],
        )
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let s = self.layout[l];
        let (w, b) = self.params[s.weights..s.bias + s.outputs].split_at_mut(s.bias - s.weights);
        (w, b)
    }

    pub fn num_layers(&self) -> usize {
        self.layout.len()
    }

    fn activation_of(&self, l: usize) -> Activation {
        if l + 1 == self.layout.len() {
            Activation::Identity
        } else {
            self.activations[l]
        }
    }

    fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let s = self.layout[l];
        let w = &self.params[s.weights..s.bias];
        let b = &self.params[s.bias..s.bias + s.outputs];
        (0..s.outputs)
            .map(|o| {
                let row = &w[o * s.inputs..(o + 1) * s.inputs];
                b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect()
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", input.len(), self.input_size())?;
        let mut x = input.to_vec();
        for l in 0..self.layout.len() {
            let act = self.activation_of(l);
            let mut z = self.affine(l, &x);
            for v in &mut z {
                *v = act.apply(*v);
            }
            x = z;
        }
        finite_output(x)
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, GradTape)> {
        check_len("network input", input.len(), self.input_size())?;
        let n = self.layout.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut x = input.to_vec();
        for l in 0..n {
            let act = self.activation_of(l);
            let z = self.affine(l, &x);
            let y: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
            inputs.push(x);
            pre.push(z);
            x = y;
        }
        let out = finite_output(x)?;
        Ok((
            out,
            GradTape {
                inputs,
                pre,
                consumed: false,
            },
        ))
    }

    /// Gradients of `⟨output, output_grad⟩` with respect to params and input.
    pub fn backward(&self, tape: &mut GradTape, output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let input_grad = self.backward_accumulate(tape, output_grad, &mut grad, 1.0)?;
        Ok((grad, input_grad))
    }

    /// Like [`Mlp::backward`] but adds `scale ×` the parameter gradient into `param_grad`.
    pub fn backward_accumulate(
        &self,
        tape: &mut GradTape,
        output_grad: &[f64],
        param_grad: &mut [f64],
        scale: f64,
    ) -> Result<Vec<f64>> {
        check_len("parameter gradient", param_grad.len(), self.params.len())?;
        self.backprop(tape, output_grad, Some((param_grad, scale)))
    }

    /// Gradient with respect to the input only.
    pub fn input_gradient(&self, tape: &mut GradTape, output_grad: &[f64]) -> Result<Vec<f64>> {
        self.backprop(tape, output_grad, None)
    }

    fn backprop(
        &self,
        tape: &mut GradTape,
        output_grad: &[f64],
        mut param_grad: Option<(&mut [f64], f64)>,
    ) -> Result<Vec<f64>> {
        if tape.consumed {
            return Err(Error::Contract("gradient tape already used for a backward pass".into()));
        }
        if tape.inputs.len() != self.layout.len() {
            return Err(Error::Contract("tape was recorded on a different network".into()));
        }
        check_len("output gradient", output_grad.len(), self.output_size())?;
        tape.consumed = true;

        let mut g = output_grad.to_vec();
        for l in (0..self.layout.len()).rev() {
            let s = self.layout[l];
            let act = self.activation_of(l);
            if act != Activation::Identity {
                for (gi, &z) in g.iter_mut().zip(&tape.pre[l]) {
                    *gi *= act.derivative(z);
                }
            }
            let x = &tape.inputs[l];
            let w = &self.params[s.weights..s.bias];
            let mut gin = vec![0.0; s.inputs];
            for o in 0..s.outputs {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                let wrow = &w[o * s.inputs..(o + 1) * s.inputs];
                for (gi, wi) in gin.iter_mut().zip(wrow) {
                    *gi += go * wi;
                }
                if let Some((pg, scale)) = param_grad.as_mut() {
                    let sgo = *scale * go;
                    let grow = &mut pg[s.weights + o * s.inputs..s.weights + (o + 1) * s.inputs];
                    for (gr, xi) in grow.iter_mut().zip(x) {
                        *gr += sgo * xi;
                    }
                    pg[s.bias + o] += sgo;
                }
            }
            g = gin;
        }
        Ok(g)
    }
}

fn finite_output(x: Vec<f64>) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Numeric("network produced a non-finite output".into()))
    }
}
