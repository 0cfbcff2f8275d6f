//! Dense-network numerics: parameters, forward and backward passes.
//!
//! Networks are plain MLPs, the only architectures required anywhere in
//! this crate. Weights are row-major `(out_dim, in_dim)`, and a gradient is
//! carried in a `ModelParams` of identical structure. Backward passes are
//! hand-derived; there is no general autodiff.

use crate::error::{CoreError, Result};
use crate::scalar::Real;

/// Per-layer activation. `Sine` carries its frequency multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    Sine { omega: f64 },
}

impl Activation {
    pub(crate) fn apply<T: Real>(&self, z: &mut [T]) {
        match *self {
            Activation::Identity => {}
            Activation::Relu => {
                for v in z.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            Activation::Sine { omega } => {
                let w = T::from64(omega);
                for v in z.iter_mut() {
                    *v = (w * *v).sin();
                }
            }
        }
    }

    /// Derivative with respect to the pre-activation, evaluated at `z`.
    pub(crate) fn derivative<T: Real>(&self, z: T) -> T {
        match *self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sine { omega } => {
                let w = T::from64(omega);
                w * (w * z).cos()
            }
        }
    }
}

/// One dense layer: `y = activation(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    in_dim: usize,
    out_dim: usize,
    /// Row-major (out_dim, in_dim).
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<T>,
        bias: Vec<T>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(CoreError::config("layer dimensions must be positive"));
        }
        if weights.len() != in_dim * out_dim {
            return Err(CoreError::shape(format!(
                "weight count {} != {}x{}",
                weights.len(),
                out_dim,
                in_dim
            )));
        }
        if bias.len() != out_dim {
            return Err(CoreError::shape(format!(
                "bias count {} != out_dim {}",
                bias.len(),
                out_dim
            )));
        }
        Ok(Layer { in_dim, out_dim, weights, bias, activation })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Result<Self> {
        Layer::new(in_dim, out_dim, vec![T::zero(); in_dim * out_dim], vec![T::zero(); out_dim], activation)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `z = W x + b` into `out` (no activation).
    fn affine(&self, x: &[T], out: &mut [T]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = self.bias[r];
            for (w, v) in row.iter().zip(x.iter()) {
                acc = acc + *w * *v;
            }
            *o = acc;
        }
    }
}

/// The parameter vector of an MLP: ordered layers with composing dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    layers: Vec<Layer<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(CoreError::config("model needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(CoreError::shape(format!(
                    "layer dims do not compose: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(ModelParams { layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Same structure, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                weights: vec![T::zero(); l.weights.len()],
                bias: vec![T::zero(); l.bias.len()],
                activation: l.activation,
            })
            .collect();
        ModelParams { layers }
    }

    /// Flattens layer by layer, weights then bias. This order is also the
    /// checkpoint byte order and the analog transmission priority.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Rebuilds parameters with this model's structure from a flat vector.
    pub fn unflatten(&self, flat: &[T]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(CoreError::shape(format!(
                "flat vector length {} != parameter count {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut out = self.zeros_like();
        let mut at = 0;
        for l in out.layers.iter_mut() {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// `self += scale * other`, shapes must match.
    pub fn add_scaled(&mut self, other: &Self, scale: T) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(CoreError::shape("layer count mismatch".to_string()));
        }
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            if a.in_dim != b.in_dim || a.out_dim != b.out_dim {
                return Err(CoreError::shape("layer shape mismatch".to_string()));
            }
            for (x, y) in a.weights.iter_mut().zip(b.weights.iter()) {
                *x += scale * *y;
            }
            for (x, y) in a.bias.iter_mut().zip(b.bias.iter()) {
                *x += scale * *y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for l in self.layers.iter_mut() {
            for v in l.weights.iter_mut() {
                *v *= s;
            }
            for v in l.bias.iter_mut() {
                *v *= s;
            }
        }
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                weights: l.weights.iter().map(|v| U::from64(v.f64())).collect(),
                bias: l.bias.iter().map(|v| U::from64(v.f64())).collect(),
                activation: l.activation,
            })
            .collect();
        ModelParams { layers }
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub struct ForwardTrace<T> {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<T>>,
    /// Pre-activation `z = Wx + b` per layer.
    preacts: Vec<Vec<T>>,
    output: Vec<T>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }
}

fn check_input<T: Real>(params: &ModelParams<T>, input: &[T]) -> Result<()> {
    if input.len() != params.in_dim() {
        return Err(CoreError::shape(format!(
            "input length {} != network input dim {}",
            input.len(),
            params.in_dim()
        )));
    }
    Ok(())
}

/// Forward pass of the MLP. Deterministic; output length = last out_dim.
pub fn mlp_forward<T: Real>(params: &ModelParams<T>, input: &[T]) -> Result<Vec<T>> {
    check_input(params, input)?;
    let mut cur = input.to_vec();
    for layer in &params.layers {
        let mut z = vec![T::zero(); layer.out_dim];
        layer.affine(&cur, &mut z);
        layer.activation.apply(&mut z);
        cur = z;
    }
    Ok(cur)
}

/// Forward pass that keeps per-layer inputs and pre-activations.
pub fn mlp_forward_trace<T: Real>(params: &ModelParams<T>, input: &[T]) -> Result<ForwardTrace<T>> {
    check_input(params, input)?;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut preacts = Vec::with_capacity(params.layers.len());
    let mut cur = input.to_vec();
    for layer in &params.layers {
        let mut z = vec![T::zero(); layer.out_dim];
        layer.affine(&cur, &mut z);
        inputs.push(cur);
        let mut a = z.clone();
        layer.activation.apply(&mut a);
        preacts.push(z);
        cur = a;
    }
    Ok(ForwardTrace { inputs, preacts, output: cur })
}

/// Backward pass from a recorded trace. Gradients are **added** into
/// `grads` (same structure as `params`); the returned vector is the
/// gradient with respect to the network input.
pub fn mlp_backward_trace<T: Real>(
    params: &ModelParams<T>,
    trace: &ForwardTrace<T>,
    output_grad: &[T],
    grads: &mut ModelParams<T>,
) -> Result<Vec<T>> {
    if output_grad.len() != params.out_dim() {
        return Err(CoreError::shape(format!(
            "output grad length {} != network output dim {}",
            output_grad.len(),
            params.out_dim()
        )));
    }
    let mut upstream = output_grad.to_vec();
    for (li, layer) in params.layers.iter().enumerate().rev() {
        let z = &trace.preacts[li];
        let x = &trace.inputs[li];
        let g = &mut grads.layers[li];
        // dL/dz = dL/da * act'(z)
        let mut dz = upstream;
        for (d, zv) in dz.iter_mut().zip(z.iter()) {
            *d = *d * layer.activation.derivative(*zv);
        }
        // dL/dW += dz ⊗ x ; dL/db += dz ; dL/dx = W^T dz
        let mut dx = vec![T::zero(); layer.in_dim];
        for (r, dzr) in dz.iter().enumerate() {
            let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
            let grow = &mut g.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
            for c in 0..layer.in_dim {
                grow[c] += *dzr * x[c];
                dx[c] += row[c] * *dzr;
            }
            g.bias[r] += *dzr;
        }
        upstream = dx;
    }
    Ok(upstream)
}

/// Gradient of the parameters for a given upstream output gradient.
///
/// Runs its own forward pass; returns `(parameter gradient, input gradient)`.
pub fn mlp_backward<T: Real>(
    params: &ModelParams<T>,
    input: &[T],
    output_grad: &[T],
) -> Result<(ModelParams<T>, Vec<T>)> {
    let trace = mlp_forward_trace(params, input)?;
    let mut grads = params.zeros_like();
    let input_grad = mlp_backward_trace(params, &trace, output_grad, &mut grads)?;
    Ok((grads, input_grad))
}
