use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activated output `y`.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Tanh => T::one() - y * y,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected layer `y = act(W x + b)`; `weights` is row-major
/// `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Layer { inputs, outputs, weights: vec![T::zero(); inputs * outputs], bias: vec![T::zero(); outputs], activation }
    }

    fn forward_into(&self, x: &[T], y: &mut Vec<T>) {
        y.clear();
        y.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, &b)| {
            let z = row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi);
            self.activation.apply(z)
        }));
    }
}

/// Feed-forward network with tanh hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

/// Activations recorded by [`Mlp::forward_cached`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// `activations[0]` is the input; `activations[k + 1]` is layer k's output.
    activations: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("cache holds the input at least")
    }
}

/// Parameter-shaped buffer: one (weights, bias) pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Gradients {
            layers: net.layers.iter().map(|l| (vec![T::zero(); l.weights.len()], vec![T::zero(); l.bias.len()])).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, &x)| *a += x);
            b.iter_mut().zip(ob).for_each(|(a, &x)| *a += x);
        }
    }

    pub fn scale(&mut self, k: T) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= k);
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b).copied()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
    }
}

/// Output of a backward pass.
#[derive(Debug, Clone)]
pub struct Backward<T> {
    pub params: Gradients<T>,
    pub input: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    /// All-zero network; `sizes` lists widths from input to output.
    pub fn zeros(sizes: &[usize], output: Activation) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| Layer::zeros(w[0], w[1], if k == last { output } else { Activation::Tanh }))
            .collect();
        Mlp { layers }
    }

    /// Gaussian weights with per-layer standard deviation 1/√fan_in, zero biases.
    pub fn gaussian<R: Rng + ?Sized>(sizes: &[usize], output: Activation, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, output);
        for layer in &mut net.layers {
            let std = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                let z: f64 = StandardNormal.sample(rng);
                *w = T::lit(z * std);
            }
        }
        net
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self, AgentError> {
        if layers.is_empty() {
            return Err(AgentError::Shape("network has no layers".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(AgentError::Shape(format!("layer {k} buffers do not match {}x{}", l.outputs, l.inputs)));
            }
            if k > 0 && layers[k - 1].outputs != l.inputs {
                return Err(AgentError::Shape(format!("layer {k} expects {} inputs, previous emits {}", l.inputs, layers[k - 1].outputs)));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, weights before bias.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_shape(&self, other: &Mlp<T>) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation
            })
    }

    fn check_input(&self, x: &[T]) -> Result<(), AgentError> {
        if x.len() == self.input_dim() {
            Ok(())
        } else {
            Err(AgentError::Dimension { expected: self.input_dim(), got: x.len() })
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, AgentError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &[T]) -> Result<ForwardCache<T>, AgentError> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut y = Vec::with_capacity(layer.outputs);
            layer.forward_into(activations.last().unwrap(), &mut y);
            activations.push(y);
        }
        Ok(ForwardCache { activations })
    }

    /// Reverse-mode gradients of `Σ grad_out · output` with respect to every
    /// parameter and to the input, using activations from `cache`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &[T]) -> Result<Backward<T>, AgentError> {
        let consistent = cache.activations.len() == self.layers.len() + 1
            && self.layers.iter().zip(&cache.activations).all(|(l, a)| a.len() == l.inputs)
            && cache.output().len() == self.output_dim();
        if !consistent {
            return Err(AgentError::CacheMismatch);
        }
        if grad_out.len() != self.output_dim() {
            return Err(AgentError::Dimension { expected: self.output_dim(), got: grad_out.len() });
        }
        let mut params = Gradients::zeros_like(self);
        let mut delta: Vec<T> = grad_out.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.activations[k];
            let y = &cache.activations[k + 1];
            // dL/dz = dL/dy * act'(z)
            for (d, &yo) in delta.iter_mut().zip(y) {
                *d *= layer.activation.derivative_from_output(yo);
            }
            let (gw, gb) = &mut params.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] = d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(x).for_each(|(g, &xi)| *g = d * xi);
            }
            let mut prev = vec![T::zero(); layer.inputs];
            for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                prev.iter_mut().zip(row).for_each(|(p, &w)| *p += w * d);
            }
            delta = prev;
        }
        Ok(Backward { params, input: delta })
    }

    /// `θ ← θ + step · g`.
    pub fn apply_gradients(&mut self, grads: &Gradients<T>, step: T) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.iter_mut().zip(gw).for_each(|(p, &g)| *p += step * g);
            layer.bias.iter_mut().zip(gb).for_each(|(p, &g)| *p += step * g);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }
}
