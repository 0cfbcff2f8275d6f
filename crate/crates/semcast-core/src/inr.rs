//! Fitting coordinate networks to signals.
//!
//! A signal becomes a function: train an MLP to map lattice coordinates to
//! sample values, then treat the weights as the signal's representation.
//! `siren_init` builds the sine-activated network with the initialization
//! that keeps activations well-scaled at high frequencies; `fit_inr` runs
//! Adam against the signal's own lattice; `sample_inr` renders the function
//! back onto any lattice, including finer ones than it was trained on.

use crate::encoding::Encoding;
use crate::error::{CoreError, Result};
use crate::loss::mse;
use crate::nn::{mlp_backward_trace, mlp_forward, mlp_forward_trace, Activation, Layer, ModelParams};
use crate::optim::{adam_step, AdamHyper, OptState};
use crate::rng::Prng;
use crate::scalar::Real;
use crate::signal::{lattice_coords, SignalTensor};

/// Sine-activated MLP with the scale-aware init: first layer uniform in
/// `±1/fan_in`, later layers uniform in `±sqrt(6/fan_in)/omega0`, biases
/// zero. All layers use `sin(omega0·z)` except the identity output layer.
pub fn siren_init<T: Real>(dims: &[usize], omega0: f64, seed: u64) -> Result<ModelParams<T>> {
    if dims.len() < 2 {
        return Err(CoreError::config("siren needs at least input and output dims"));
    }
    if !(omega0 > 0.0) {
        return Err(CoreError::config("omega0 must be positive"));
    }
    let mut rng = Prng::seed(seed);
    let last = dims.len() - 2;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (i, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        if fan_in == 0 || fan_out == 0 {
            return Err(CoreError::config("siren layer dims must be positive"));
        }
        let bound = if i == 0 {
            1.0 / fan_in as f64
        } else {
            (6.0 / fan_in as f64).sqrt() / omega0
        };
        let weights = (0..fan_in * fan_out)
            .map(|_| T::from64(rng.uniform_in(-bound, bound)))
            .collect();
        let bias = vec![T::zero(); fan_out];
        let activation = if i == last {
            Activation::Identity
        } else {
            Activation::Sine { omega: omega0 }
        };
        layers.push(Layer::new(fan_in, fan_out, weights, bias, activation)?);
    }
    ModelParams::new(layers)
}

/// Encodes every lattice site of `shape` once, in row-major order.
pub fn encode_lattice<T: Real>(enc: &Encoding<T>, shape: &[usize]) -> Result<Vec<Vec<T>>> {
    if enc.input_dim() != shape.len() {
        return Err(CoreError::shape(format!(
            "encoding expects {}-d coordinates, lattice is {}-d",
            enc.input_dim(),
            shape.len()
        )));
    }
    lattice_coords::<T>(shape).iter().map(|x| enc.encode(x)).collect()
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub steps: usize,
    pub lr: f64,
    /// Minibatch size; `None` trains on the full lattice every step.
    pub batch: Option<usize>,
    /// Stop early once the training MSE drops to this value.
    pub target_mse: Option<f64>,
    /// Record the loss every this many steps (step 0 always recorded).
    pub record_every: usize,
    /// Drives minibatch sampling only; full-batch fits ignore it.
    pub seed: u64,
}

impl FitConfig {
    pub fn new(steps: usize, lr: f64) -> Self {
        FitConfig { steps, lr, batch: None, target_mse: None, record_every: 1, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport<T> {
    /// Best iterate seen, judged by full-lattice MSE.
    pub params: ModelParams<T>,
    /// Training-loss trace at the recording cadence.
    pub curve: Vec<f64>,
    /// Full-lattice MSE of the starting parameters.
    pub initial_mse: f64,
    /// Full-lattice MSE of the returned parameters.
    pub final_mse: f64,
    pub steps_run: usize,
    /// Step at which the loss or an update went non-finite, if any.
    pub diverged_at: Option<usize>,
}

fn full_lattice_mse<T: Real>(
    params: &ModelParams<T>,
    inputs: &[Vec<T>],
    targets: &[T],
    channels: usize,
) -> Result<f64> {
    let mut pred = Vec::with_capacity(targets.len());
    for x in inputs {
        pred.extend(mlp_forward(params, x)?);
    }
    let _ = channels;
    mse(&pred, targets)
}

/// Fits `start` to the signal with Adam. Returns the best iterate rather
/// than the last one, so the reported MSE never exceeds the initial MSE.
pub fn fit_inr<T: Real>(
    start: ModelParams<T>,
    enc: &Encoding<T>,
    signal: &SignalTensor<T>,
    cfg: &FitConfig,
) -> Result<FitReport<T>> {
    if enc.encoded_dim() != start.in_dim() {
        return Err(CoreError::shape(format!(
            "encoded dim {} != network input dim {}",
            enc.encoded_dim(),
            start.in_dim()
        )));
    }
    if start.out_dim() != signal.channels() {
        return Err(CoreError::shape(format!(
            "network output dim {} != signal channels {}",
            start.out_dim(),
            signal.channels()
        )));
    }
    if cfg.record_every == 0 {
        return Err(CoreError::config("record_every must be at least 1"));
    }
    if !(cfg.lr > 0.0) || !cfg.lr.is_finite() {
        return Err(CoreError::config("learning rate must be positive and finite"));
    }

    let inputs = encode_lattice(enc, signal.shape())?;
    let targets = signal.values();
    let c = signal.channels();
    let sites = inputs.len();
    let batch = match cfg.batch {
        Some(b) if b == 0 => return Err(CoreError::config("batch size must be positive")),
        Some(b) if b < sites => Some(b),
        _ => None,
    };

    let initial_mse = full_lattice_mse(&start, &inputs, targets, c)?;
    let mut params = start.clone();
    let mut state = OptState::for_params(&params, AdamHyper::with_lr(cfg.lr));
    let mut rng = Prng::seed(cfg.seed);

    let mut curve = Vec::new();
    let mut diverged_at = None;
    let mut steps_run = 0;
    // Best-so-far snapshot by training loss; the start params seed it.
    let mut best: (f64, ModelParams<T>) = (initial_mse, start.clone());

    let mut batch_idx: Vec<usize> = Vec::new();
    for step in 0..cfg.steps {
        batch_idx.clear();
        match batch {
            Some(b) => batch_idx.extend((0..b).map(|_| rng.index(sites))),
            None => batch_idx.extend(0..sites),
        }

        let mut grads = params.zeros_like();
        let mut loss_acc = 0.0f64;
        let denom = (batch_idx.len() * c) as f64;
        let gscale = T::from64(2.0 / denom);
        let mut ok = true;
        for &i in &batch_idx {
            let trace = mlp_forward_trace(&params, &inputs[i])?;
            let t = &targets[i * c..(i + 1) * c];
            let mut dy = vec![T::zero(); c];
            for k in 0..c {
                let diff = trace.output()[k] - t[k];
                loss_acc += diff.f64() * diff.f64();
                dy[k] = gscale * diff;
            }
            if !loss_acc.is_finite() {
                ok = false;
                break;
            }
            mlp_backward_trace(&params, &trace, &dy, &mut grads)?;
        }
        let loss = loss_acc / denom;
        if !ok || !loss.is_finite() {
            diverged_at = Some(step);
            break;
        }

        if step % cfg.record_every == 0 {
            curve.push(loss);
        }
        if loss < best.0 {
            best = (loss, params.clone());
        }
        if let Some(target) = cfg.target_mse {
            if loss <= target {
                steps_run = step;
                break;
            }
        }

        if adam_step(&mut params, &grads, &mut state).is_err() {
            diverged_at = Some(step);
            break;
        }
        steps_run = step + 1;
    }

    // Judge the surviving candidates on the full lattice and keep the best.
    let mut final_params = best.1;
    let mut final_mse = full_lattice_mse(&final_params, &inputs, targets, c)?;
    if diverged_at.is_none() && params.all_finite() {
        let cur = full_lattice_mse(&params, &inputs, targets, c)?;
        if cur.is_finite() && cur < final_mse {
            final_mse = cur;
            final_params = params;
        }
    }
    if final_mse > initial_mse {
        final_params = start;
        final_mse = initial_mse;
    }

    Ok(FitReport { params: final_params, curve, initial_mse, final_mse, steps_run, diverged_at })
}

/// Renders the network onto a lattice of the given shape. The value range
/// is carried by the caller since the network itself has no notion of it.
pub fn sample_inr<T: Real>(
    params: &ModelParams<T>,
    enc: &Encoding<T>,
    shape: &[usize],
    lo: f64,
    hi: f64,
) -> Result<SignalTensor<T>> {
    let inputs = encode_lattice(enc, shape)?;
    if params.in_dim() != enc.encoded_dim() {
        return Err(CoreError::shape(format!(
            "encoded dim {} != network input dim {}",
            enc.encoded_dim(),
            params.in_dim()
        )));
    }
    let c = params.out_dim();
    let mut values = Vec::with_capacity(inputs.len() * c);
    for x in &inputs {
        values.extend(mlp_forward(params, x)?);
    }
    SignalTensor::new(shape.to_vec(), c, lo, hi, values)
}

/// Mean absolute disagreement between sampling at `shape` and average-pooling
/// a 2x-per-axis rendering down to `shape`. Diagnostic only; spectral content
/// above the training rate makes this legitimately nonzero.
pub fn resolution_consistency<T: Real>(
    params: &ModelParams<T>,
    enc: &Encoding<T>,
    shape: &[usize],
) -> Result<f64> {
    let coarse = sample_inr(params, enc, shape, 0.0, 1.0)?;
    let fine_shape: Vec<usize> = shape.iter().map(|&s| 2 * s).collect();
    let fine = sample_inr(params, enc, &fine_shape, 0.0, 1.0)?;
    let c = params.out_dim();
    let d = shape.len();
    let block = 1usize << d;

    // Strides over the fine lattice, row-major, last axis fastest.
    let mut strides = vec![1usize; d];
    for i in (0..d.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * fine_shape[i + 1];
    }

    let mut acc = 0.0f64;
    let mut idx = vec![0usize; d];
    for (site, x) in coarse.values().chunks(c).enumerate() {
        let mut rem = site;
        for i in (0..d).rev() {
            idx[i] = rem % shape[i];
            rem /= shape[i];
        }
        for k in 0..c {
            let mut pooled = 0.0f64;
            for corner in 0..block {
                let mut fine_site = 0usize;
                for i in 0..d {
                    let off = (corner >> i) & 1;
                    fine_site += (2 * idx[i] + off) * strides[i];
                }
                pooled += fine.values()[fine_site * c + k].f64();
            }
            pooled /= block as f64;
            acc += (x[k].f64() - pooled).abs();
        }
    }
    Ok(acc / (coarse.values().len() as f64))
}
