//! Dense layers and the Adam optimizer on top of [`crate::autodiff`].

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "identity" => Activation::Identity,
            "relu" => Activation::Relu,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            _ => return None,
        })
    }

    fn apply<T: Real>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Affine map `x·W + b` followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// `[fan_in × fan_out]`
    pub weight: Tensor<T>,
    /// `[1 × fan_out]`
    pub bias: Tensor<T>,
    pub activation: Activation,
}

/// Multi-layer perceptron. Parameters live outside any tape and are copied
/// onto a fresh tape per batch by [`Mlp::bind`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Real> Mlp<T> {
    /// `widths = [input, hidden…, output]`. Hidden layers use `hidden`,
    /// the last layer uses `output`. Weights are He-uniform for rectified
    /// layers and Glorot-uniform otherwise; biases start at zero.
    pub fn new<R: Rng>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let activation = if i + 2 == widths.len() { output } else { hidden };
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = match activation {
                    Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let data = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.gen_range(-bound..bound)))
                    .collect();
                Layer {
                    weight: Tensor::new(fan_in, fan_out, data).expect("sized"),
                    bias: Tensor::zeros(1, fan_out),
                    activation,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != [1, l.weight.cols()] {
                return Err(Error::Shape {
                    op: "mlp",
                    detail: format!("layer {i}: bias {:?} vs weight {:?}", l.bias.shape(), l.weight.shape()),
                });
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(Error::Shape {
                    op: "mlp",
                    detail: format!("layer {i} expects {} inputs", l.weight.rows()),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].weight.rows()];
        w.extend(self.layers.iter().map(|l| l.weight.cols()));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weight then bias of every layer, in order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Push every parameter onto `tape` as a leaf (same order as [`Mlp::params`]).
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Forward pass using parameters previously bound to `tape`.
    pub fn forward(&self, tape: &mut Tape<T>, bound: &[Var], x: Var) -> Result<Var> {
        if bound.len() != 2 * self.layers.len() {
            return Err(Error::invalid("parameters bound to a different network"));
        }
        let mut h = x;
        for (layer, p) in self.layers.iter().zip(bound.chunks_exact(2)) {
            let z = tape.matvec(h, p[0])?;
            let z = tape.add_row(z, p[1])?;
            h = layer.activation.apply(tape, z);
        }
        Ok(h)
    }

    /// Output activations without gradient bookkeeping beyond one tape.
    pub fn eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let y = self.forward(&mut tape, &bound, xv)?;
        Ok(tape.value(y).clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> Default for AdamConfig<T> {
    fn default() -> Self {
        Self {
            lr: T::lit(1e-3),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig<T>,
    step: usize,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig<T>, shapes: &[[usize; 2]]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s[0], s[1])).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s[0], s[1])).collect(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// One update. Parameters are untouched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid("optimizer state does not match parameters"));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    detail: format!("parameter {i}: {:?} vs state {:?}", g.shape(), self.m[i].shape()),
                });
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { step: self.step });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = T::one() - beta1.powi(t);
        let c2 = T::one() - beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let (pd, gd) = (p.data_mut(), g.data());
            for (((w, &gi), mi), vi) in pd.iter_mut().zip(gd).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = beta1 * *mi + (T::one() - beta1) * gi;
                *vi = beta2 * *vi + (T::one() - beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w = *w - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
