//! Meta-learned initializations: train a network start point so that a few
//! plain gradient steps specialize it to any task from a family.
//!
//! Fast adaptation is deliberately bare: exactly k full-grid SGD steps with
//! a fixed learning rate and no optimizer state, so adapting for k1 + k2
//! steps equals adapting for k1 and then k2 bit for bit. That makes the
//! receiver's view (init + step count) an exact description of the model.

use crate::encoding::Encoding;
use crate::error::{CoreError, Result};
use crate::inr::encode_lattice;
use crate::nn::{mlp_backward_trace, mlp_forward_trace, ModelParams};
use crate::optim::{adam_step, AdamHyper, OptState};
use crate::rng::Prng;
use crate::scalar::Real;
use crate::signal::SignalTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaAlgorithm {
    /// Outer gradient = post-adaptation gradient, adaptation treated as
    /// constant (no second-order terms).
    FirstOrderMaml,
    /// Outer gradient = init minus adapted parameters.
    Reptile,
}

#[derive(Debug, Clone)]
pub struct MetaConfig {
    pub algorithm: MetaAlgorithm,
    /// Inner adaptation steps per task; at least 1.
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub outer_lr: f64,
    /// Tasks sampled (with replacement) per outer iteration.
    pub task_batch: usize,
    pub outer_iters: usize,
    pub seed: u64,
}

impl MetaConfig {
    pub fn new(inner_steps: usize, inner_lr: f64, outer_lr: f64) -> Self {
        MetaConfig {
            algorithm: MetaAlgorithm::FirstOrderMaml,
            inner_steps,
            inner_lr,
            outer_lr,
            task_batch: 4,
            outer_iters: 100,
            seed: 0,
        }
    }
}

/// Full-grid MSE and its parameter gradient at one point.
fn grid_loss_grad<T: Real>(
    params: &ModelParams<T>,
    inputs: &[Vec<T>],
    signal: &SignalTensor<T>,
) -> Result<(f64, ModelParams<T>)> {
    let c = signal.channels();
    let n_scalars = inputs.len() * c;
    let values = signal.values();
    let mut grads = params.zeros_like();
    let gscale = T::from64(2.0 / n_scalars as f64);
    let mut acc = 0.0f64;
    for (site, input) in inputs.iter().enumerate() {
        let tr = mlp_forward_trace(params, input)?;
        let mut dy = vec![T::zero(); c];
        for k in 0..c {
            let diff = tr.output()[k] - values[site * c + k];
            acc += diff.f64() * diff.f64();
            dy[k] = gscale * diff;
        }
        mlp_backward_trace(params, &tr, &dy, &mut grads)?;
    }
    Ok((acc / n_scalars as f64, grads))
}

/// Exactly k plain full-grid SGD steps from `params`; k = 0 is the identity.
pub fn fast_adapt<T: Real>(
    params: &ModelParams<T>,
    enc: &Encoding<T>,
    signal: &SignalTensor<T>,
    steps: usize,
    lr: f64,
) -> Result<ModelParams<T>> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(CoreError::config("adaptation learning rate must be positive"));
    }
    let inputs = encode_lattice(enc, signal.shape())?;
    let mut current = params.clone();
    let neg_lr = T::from64(-lr);
    for _ in 0..steps {
        let (_, grads) = grid_loss_grad(&current, &inputs, signal)?;
        current.add_scaled(&grads, neg_lr)?;
    }
    Ok(current)
}

/// Plain-SGD steps until full-grid MSE falls to `target_mse`, or None if
/// `max_steps` is not enough. Step count 0 means the start already qualifies.
pub fn steps_to_target<T: Real>(
    params: &ModelParams<T>,
    enc: &Encoding<T>,
    signal: &SignalTensor<T>,
    lr: f64,
    target_mse: f64,
    max_steps: usize,
) -> Result<Option<usize>> {
    let inputs = encode_lattice(enc, signal.shape())?;
    let mut current = params.clone();
    let neg_lr = T::from64(-lr);
    for step in 0..=max_steps {
        let (loss, grads) = grid_loss_grad(&current, &inputs, signal)?;
        if loss <= target_mse {
            return Ok(Some(step));
        }
        if step < max_steps {
            current.add_scaled(&grads, neg_lr)?;
        }
    }
    Ok(None)
}

/// Meta-trains an initialization over a task family. Returns the trained
/// init and the per-iteration meta-objective (mean post-adaptation loss of
/// the sampled batch). Divergence rolls back to the last finite init.
pub fn meta_train<T: Real>(
    init: ModelParams<T>,
    enc: &Encoding<T>,
    tasks: &[SignalTensor<T>],
    cfg: &MetaConfig,
) -> Result<(ModelParams<T>, Vec<f64>)> {
    if tasks.len() < 2 {
        return Err(CoreError::config("meta-training needs at least two tasks"));
    }
    if cfg.inner_steps == 0 {
        return Err(CoreError::config("meta-training needs at least one inner step"));
    }
    if cfg.task_batch == 0 {
        return Err(CoreError::config("task batch must be positive"));
    }
    let shape = tasks[0].shape().to_vec();
    for t in tasks {
        if t.shape() != shape.as_slice() || t.channels() != tasks[0].channels() {
            return Err(CoreError::shape("meta tasks must share a lattice layout".to_string()));
        }
    }
    let inputs = encode_lattice(enc, &shape)?;

    let mut rng = Prng::seed(cfg.seed);
    let mut theta = init;
    let mut state = OptState::for_params(&theta, AdamHyper::with_lr(cfg.outer_lr));
    let mut curve = Vec::with_capacity(cfg.outer_iters);
    let inv_lr = T::from64(1.0 / cfg.inner_lr);
    let batch_scale = T::from64(1.0 / cfg.task_batch as f64);

    for _ in 0..cfg.outer_iters {
        let snapshot = theta.clone();
        let mut outer_grads = theta.zeros_like();
        let mut meta_loss = 0.0f64;
        let mut finite = true;
        for _ in 0..cfg.task_batch {
            let task = &tasks[rng.index(tasks.len())];
            let mut adapted = theta.clone();
            let neg_inner = T::from64(-cfg.inner_lr);
            for _ in 0..cfg.inner_steps {
                let (_, grads) = grid_loss_grad(&adapted, &inputs, task)?;
                adapted.add_scaled(&grads, neg_inner)?;
            }
            let (loss, post_grads) = grid_loss_grad(&adapted, &inputs, task)?;
            if !loss.is_finite() {
                finite = false;
                break;
            }
            meta_loss += loss;
            match cfg.algorithm {
                MetaAlgorithm::FirstOrderMaml => {
                    outer_grads.add_scaled(&post_grads, batch_scale)?;
                }
                MetaAlgorithm::Reptile => {
                    // (theta - adapted) / inner_lr plays the role of the
                    // outer gradient; Adam rescales it anyway.
                    let mut diff = theta.clone();
                    diff.add_scaled(&adapted, -T::one())?;
                    diff.scale(inv_lr);
                    outer_grads.add_scaled(&diff, batch_scale)?;
                }
            }
        }
        if !finite || !outer_grads.all_finite() {
            theta = snapshot;
            break;
        }
        curve.push(meta_loss / cfg.task_batch as f64);
        if adam_step(&mut theta, &outer_grads, &mut state).is_err() {
            theta = snapshot;
            break;
        }
        if !theta.all_finite() {
            theta = snapshot;
            break;
        }
    }
    Ok((theta, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inr::siren_init;
    use crate::signal::lattice_coords;

    fn sinusoid_task(shift: f64, sites: usize) -> SignalTensor<f32> {
        let coords = lattice_coords::<f32>(&[sites]);
        let values = coords
            .iter()
            .map(|x| ((x[0] as f64 - shift) * std::f64::consts::PI).sin() as f32)
            .collect();
        SignalTensor::new(vec![sites], 1, -1.0, 1.0, values).unwrap()
    }

    fn tiny_net(seed: u64) -> (ModelParams<f32>, Encoding<f32>) {
        let params = siren_init(&[1, 16, 16, 1], 30.0, seed).unwrap();
        (params, Encoding::none(1).unwrap())
    }

    #[test]
    fn zero_steps_is_the_identity() {
        let (params, enc) = tiny_net(1);
        let task = sinusoid_task(0.0, 16);
        let adapted = fast_adapt(&params, &enc, &task, 0, 1e-3).unwrap();
        assert_eq!(adapted.flatten(), params.flatten());
    }

    #[test]
    fn adaptation_composes_exactly() {
        let (params, enc) = tiny_net(2);
        let task = sinusoid_task(0.25, 16);
        let eight = fast_adapt(&params, &enc, &task, 8, 1e-3).unwrap();
        let three = fast_adapt(&params, &enc, &task, 3, 1e-3).unwrap();
        let then_five = fast_adapt(&three, &enc, &task, 5, 1e-3).unwrap();
        let a: Vec<u32> = eight.flatten().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = then_five.flatten().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn one_step_matches_the_closed_form() {
        // A single identity layer on a one-site lattice: the site is x = 0,
        // so the prediction is the bias and only the bias has gradient
        // 2 (b - t). One step moves b to b - 2 lr (b - t).
        use crate::nn::{Activation, Layer};
        let b0 = 0.7f64;
        let target = -0.3f64;
        let lr = 0.05f64;
        let params = ModelParams::new(vec![
            Layer::new(1, 1, vec![0.4], vec![b0], Activation::Identity).unwrap(),
        ])
        .unwrap();
        let enc = Encoding::none(1).unwrap();
        let task = SignalTensor::new(vec![1], 1, -1.0, 1.0, vec![target]).unwrap();
        let adapted = fast_adapt(&params, &enc, &task, 1, lr).unwrap();
        let expected = b0 - 2.0 * lr * (b0 - target);
        let flat = adapted.flatten();
        assert!((flat[0] - 0.4).abs() < 1e-15, "weight should not move");
        assert!((flat[1] - expected).abs() < 1e-15, "bias {} vs {}", flat[1], expected);
    }

    #[test]
    fn adaptation_reduces_task_loss() {
        let (params, enc) = tiny_net(3);
        let task = sinusoid_task(0.1, 32);
        let inputs = encode_lattice(&enc, task.shape()).unwrap();
        let (before, _) = grid_loss_grad(&params, &inputs, &task).unwrap();
        let adapted = fast_adapt(&params, &enc, &task, 50, 5e-3).unwrap();
        let (after, _) = grid_loss_grad(&adapted, &inputs, &task).unwrap();
        assert!(after < before, "loss {} did not drop below {}", after, before);
    }

    #[test]
    fn identical_tasks_meta_train_to_a_solved_init() {
        let (init, enc) = tiny_net(4);
        let task = sinusoid_task(0.0, 16);
        let tasks = vec![task.clone(), task.clone(), task.clone(), task.clone()];
        let mut cfg = MetaConfig::new(3, 5e-3, 1e-3);
        cfg.outer_iters = 400;
        cfg.seed = 9;
        let (theta, curve) = meta_train(init, &enc, &tasks, &cfg).unwrap();
        assert!(!curve.is_empty());
        let adapted = fast_adapt(&theta, &enc, &task, 3, 5e-3).unwrap();
        let inputs = encode_lattice(&enc, task.shape()).unwrap();
        let (loss, _) = grid_loss_grad(&adapted, &inputs, &task).unwrap();
        assert!(loss < 1e-3, "post-adaptation mse {}", loss);
    }

    #[test]
    fn meta_training_is_seeded() {
        let (init, enc) = tiny_net(5);
        let tasks = vec![sinusoid_task(0.0, 16), sinusoid_task(0.3, 16)];
        let mut cfg = MetaConfig::new(2, 5e-3, 1e-3);
        cfg.outer_iters = 10;
        let (a, ca) = meta_train(init.clone(), &enc, &tasks, &cfg).unwrap();
        let (b, cb) = meta_train(init, &enc, &tasks, &cfg).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert_eq!(ca, cb);
    }

    #[test]
    fn meta_init_beats_a_random_init_on_held_out_shifts() {
        let (init, enc) = tiny_net(6);
        let train_tasks: Vec<_> =
            (0..8).map(|i| sinusoid_task(i as f64 * 0.11, 16)).collect();
        let mut cfg = MetaConfig::new(3, 5e-3, 2e-3);
        cfg.outer_iters = 300;
        cfg.seed = 7;
        let (theta, _) = meta_train(init.clone(), &enc, &train_tasks, &cfg).unwrap();
        let mut wins = 0;
        for i in 0..3 {
            let held_out = sinusoid_task(0.05 + i as f64 * 0.17, 16);
            let inputs = encode_lattice(&enc, held_out.shape()).unwrap();
            let meta_adapted = fast_adapt(&theta, &enc, &held_out, 3, 5e-3).unwrap();
            let cold_adapted = fast_adapt(&init, &enc, &held_out, 3, 5e-3).unwrap();
            let (meta_loss, _) = grid_loss_grad(&meta_adapted, &inputs, &held_out).unwrap();
            let (cold_loss, _) = grid_loss_grad(&cold_adapted, &inputs, &held_out).unwrap();
            if meta_loss < cold_loss {
                wins += 1;
            }
        }
        assert!(wins >= 2, "meta init won only {} of 3 held-out tasks", wins);
    }

    #[test]
    fn reptile_also_improves_the_init() {
        let (init, enc) = tiny_net(8);
        let tasks = vec![sinusoid_task(0.0, 16), sinusoid_task(0.2, 16)];
        let mut cfg = MetaConfig::new(2, 5e-3, 2e-3);
        cfg.algorithm = MetaAlgorithm::Reptile;
        cfg.outer_iters = 200;
        let (theta, curve) = meta_train(init, &enc, &tasks, &cfg).unwrap();
        assert!(theta.all_finite());
        let early: f64 = curve[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = curve[curve.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(late < early, "meta objective {} did not drop below {}", late, early);
    }

    #[test]
    fn divergence_rolls_back_to_finite_parameters() {
        let (init, enc) = tiny_net(10);
        let tasks = vec![sinusoid_task(0.0, 16), sinusoid_task(0.4, 16)];
        let mut cfg = MetaConfig::new(2, 1e9, 1e9);
        cfg.outer_iters = 20;
        let (theta, _) = meta_train(init, &enc, &tasks, &cfg).unwrap();
        assert!(theta.all_finite());
    }

    #[test]
    fn step_counting_reports_reachability() {
        let (params, enc) = tiny_net(11);
        let task = sinusoid_task(0.0, 16);
        let reachable = steps_to_target(&params, &enc, &task, 5e-3, 1.0, 50).unwrap();
        assert_eq!(reachable, Some(0));
        let unreachable = steps_to_target(&params, &enc, &task, 1e-9, 1e-12, 5).unwrap();
        assert_eq!(unreachable, None);
    }

    #[test]
    fn meta_training_rejects_degenerate_setups() {
        let (init, enc) = tiny_net(12);
        let one_task = vec![sinusoid_task(0.0, 16)];
        assert!(meta_train(init.clone(), &enc, &one_task, &MetaConfig::new(1, 1e-3, 1e-3)).is_err());
        let tasks = vec![sinusoid_task(0.0, 16), sinusoid_task(0.1, 16)];
        let mut cfg = MetaConfig::new(1, 1e-3, 1e-3);
        cfg.inner_steps = 0;
        assert!(meta_train(init, &enc, &tasks, &cfg).is_err());
    }
}
