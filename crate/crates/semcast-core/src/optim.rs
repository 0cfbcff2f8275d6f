//! Adam optimizer, for whole models and for flat parameter vectors.

use crate::error::{CoreError, Result};
use crate::nn::ModelParams;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam state over a flat parameter vector.
///
/// Also the backing store for [`OptState`]; fields/esc training uses it
/// directly on grid features, latent codes, and prior parameters.
#[derive(Debug, Clone)]
pub struct AdamVec<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
    pub hyper: AdamHyper,
}

impl<T: Real> AdamVec<T> {
    pub fn new(len: usize, hyper: AdamHyper) -> Self {
        AdamVec { m: vec![T::zero(); len], v: vec![T::zero(); len], step: 0, hyper }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Starts the next optimizer step and returns the bias-correction
    /// factors (1/(1-beta1^t), 1/(1-beta2^t)).
    fn begin_step(&mut self) -> (T, T) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 / (1.0 - self.hyper.beta1.powi(t));
        let c2 = 1.0 / (1.0 - self.hyper.beta2.powi(t));
        (T::from64(c1), T::from64(c2))
    }

    fn update_chunk(&mut self, offset: usize, params: &mut [T], grads: &[T], c1: T, c2: T) {
        let b1 = T::from64(self.hyper.beta1);
        let b2 = T::from64(self.hyper.beta2);
        let lr = T::from64(self.hyper.lr);
        let eps = T::from64(self.hyper.eps);
        let one = T::one();
        for (i, (p, g)) in params.iter_mut().zip(grads.iter()).enumerate() {
            let m = &mut self.m[offset + i];
            let v = &mut self.v[offset + i];
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let mhat = *m * c1;
            let vhat = *v * c2;
            *p = *p - lr * mhat / (vhat.sqrt() + eps);
        }
    }

    /// One bias-corrected Adam update over the whole vector.
    pub fn apply(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(CoreError::shape(format!(
                "adam state length {} vs params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(CoreError::non_finite(format!("gradient entry {i} is not finite")));
        }
        let (c1, c2) = self.begin_step();
        self.update_chunk(0, params, grads, c1, c2);
        Ok(())
    }
}

/// Adam state shaped like a [`ModelParams`], addressed in flatten order.
#[derive(Debug, Clone)]
pub struct OptState<T> {
    inner: AdamVec<T>,
}

impl<T: Real> OptState<T> {
    pub fn for_params(params: &ModelParams<T>, hyper: AdamHyper) -> Self {
        OptState { inner: AdamVec::new(params.param_count(), hyper) }
    }

    pub fn step_count(&self) -> u64 {
        self.inner.step_count()
    }

    pub fn hyper(&self) -> AdamHyper {
        self.inner.hyper
    }
}

/// One Adam update of a model in place. The moment buffers live in `state`
/// and are indexed in flatten order; `grads` must mirror the model shape.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut OptState<T>,
) -> Result<()> {
    if params.param_count() != state.inner.len() {
        return Err(CoreError::shape(format!(
            "optimizer state sized for {} parameters, model has {}",
            state.inner.len(),
            params.param_count()
        )));
    }
    if params.param_count() != grads.param_count() || params.layers().len() != grads.layers().len() {
        return Err(CoreError::shape("gradient shape differs from parameters".to_string()));
    }
    for (li, (p, g)) in params.layers().iter().zip(grads.layers().iter()).enumerate() {
        if p.in_dim() != g.in_dim() || p.out_dim() != g.out_dim() {
            return Err(CoreError::shape(format!("gradient layer {li} shape differs")));
        }
        if let Some(j) = g.weights.iter().chain(g.bias.iter()).position(|v| !v.is_finite()) {
            return Err(CoreError::non_finite(format!(
                "layer {li} gradient entry {j} is not finite"
            )));
        }
    }
    let (c1, c2) = state.inner.begin_step();
    let mut at = 0;
    for (p, g) in params.layers_mut().iter_mut().zip(grads.layers().iter()) {
        state.inner.update_chunk(at, &mut p.weights, &g.weights, c1, c2);
        at += g.weights.len();
        state.inner.update_chunk(at, &mut p.bias, &g.bias, c1, c2);
        at += g.bias.len();
    }
    Ok(())
}
