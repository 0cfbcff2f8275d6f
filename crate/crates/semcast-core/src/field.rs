//! Conditional neural fields: a decoder MLP over encoded coordinates plus a
//! latent, where the latent is either one global vector or a query into
//! multi-level feature grids.
//!
//! Latents are obtained by auto-decoding: gradient descent on the latent
//! (and optionally the decoder and prior) against reconstruction error plus
//! a rate penalty. Training perturbs features with uniform noise matching
//! the quantization bin, so the decoder tolerates the rounding applied at
//! transmission. Reconstruction from the first k grid levels only is the
//! receiver's view mid-transmission; training with level dropout keeps that
//! partial view usable.

use crate::encoding::Encoding;
use crate::error::{CoreError, Result};
use crate::grid::{scatter_query_grad, FeatureGridSet};
use crate::inr::encode_lattice;
use crate::loss::mse;
use crate::nn::{mlp_backward, mlp_backward_trace, mlp_forward, mlp_forward_trace, ModelParams};
use crate::optim::{adam_step, AdamHyper, AdamVec, OptState};
use crate::prior::LatentPrior;
use crate::rng::Prng;
use crate::scalar::Real;
use crate::signal::{lattice_coords, SignalTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Global,
    Local,
}

#[derive(Debug, Clone)]
pub struct FieldModel<T> {
    decoder: ModelParams<T>,
    encoding: Encoding<T>,
    conditioning: Conditioning,
    latent_dim: usize,
}

impl<T: Real> FieldModel<T> {
    pub fn new(
        decoder: ModelParams<T>,
        encoding: Encoding<T>,
        conditioning: Conditioning,
        latent_dim: usize,
    ) -> Result<Self> {
        if latent_dim == 0 {
            return Err(CoreError::config("field latent dim must be positive"));
        }
        if decoder.in_dim() != encoding.encoded_dim() + latent_dim {
            return Err(CoreError::shape(format!(
                "decoder input {} != encoded {} + latent {}",
                decoder.in_dim(),
                encoding.encoded_dim(),
                latent_dim
            )));
        }
        Ok(FieldModel { decoder, encoding, conditioning, latent_dim })
    }

    pub fn decoder(&self) -> &ModelParams<T> {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.decoder
    }

    pub fn encoding(&self) -> &Encoding<T> {
        &self.encoding
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }
}

/// Where the latent comes from at evaluation time.
pub enum LatentRef<'a, T> {
    Global(&'a [T]),
    Local(&'a FeatureGridSet<T>),
}

fn assemble_input<T: Real>(enc: &[T], z: &[T], buf: &mut Vec<T>) {
    buf.clear();
    buf.extend_from_slice(enc);
    buf.extend_from_slice(z);
}

/// Evaluates the field at one coordinate: decoder(encode(x) ++ z).
pub fn field_eval<T: Real>(
    model: &FieldModel<T>,
    latent: &LatentRef<'_, T>,
    x: &[T],
) -> Result<Vec<T>> {
    let enc = model.encoding.encode(x)?;
    let z = match latent {
        LatentRef::Global(z) => {
            if z.len() != model.latent_dim {
                return Err(CoreError::shape(format!(
                    "global latent len {} != field latent dim {}",
                    z.len(),
                    model.latent_dim
                )));
            }
            if matches!(model.conditioning, Conditioning::Local) {
                return Err(CoreError::config("model is locally conditioned"));
            }
            z.to_vec()
        }
        LatentRef::Local(grids) => {
            if matches!(model.conditioning, Conditioning::Global) {
                return Err(CoreError::config("model is globally conditioned"));
            }
            if grids.query_dim() != model.latent_dim {
                return Err(CoreError::shape(format!(
                    "grid query dim {} != field latent dim {}",
                    grids.query_dim(),
                    model.latent_dim
                )));
            }
            grids.query_all(x)?
        }
    };
    let mut input = Vec::with_capacity(enc.len() + z.len());
    assemble_input(&enc, &z, &mut input);
    mlp_forward(&model.decoder, &input)
}

/// Samples the field on a lattice using only the first `lods` grid levels;
/// the remaining levels read as zero, exactly as a receiver that has not
/// yet gotten them would see.
pub fn progressive_reconstruct<T: Real>(
    model: &FieldModel<T>,
    grids: &FeatureGridSet<T>,
    lods: usize,
    shape: &[usize],
    lo: f64,
    hi: f64,
) -> Result<SignalTensor<T>> {
    if lods > grids.level_count() {
        return Err(CoreError::config("received LOD count exceeds level count"));
    }
    if grids.query_dim() != model.latent_dim {
        return Err(CoreError::shape(format!(
            "grid query dim {} != field latent dim {}",
            grids.query_dim(),
            model.latent_dim
        )));
    }
    let coords = lattice_coords::<T>(shape);
    let enc_inputs = encode_lattice(&model.encoding, shape)?;
    let c = model.decoder.out_dim();
    let mut values = Vec::with_capacity(coords.len() * c);
    let mut input = Vec::with_capacity(model.decoder.in_dim());
    for (x, e) in coords.iter().zip(enc_inputs.iter()) {
        let z = grids.query(x, lods)?;
        assemble_input(e, &z, &mut input);
        values.extend(mlp_forward(&model.decoder, &input)?);
    }
    SignalTensor::new(shape.to_vec(), c, lo, hi, values)
}

/// Total code length of the grids' quantized features, each level charged
/// under its own prior component.
pub fn grid_entropy_bits<T: Real>(
    grids: &FeatureGridSet<T>,
    prior: &LatentPrior<T>,
) -> Result<f64> {
    if prior.components() != grids.level_count() {
        return Err(CoreError::shape(format!(
            "prior has {} components, grids have {} levels",
            prior.components(),
            grids.level_count()
        )));
    }
    let mut bits = 0.0;
    for (l, level) in grids.levels().iter().enumerate() {
        for v in level.features() {
            bits += prior.bits_for_value(l, v.f64())?;
        }
    }
    Ok(bits)
}

#[derive(Debug, Clone)]
pub struct AutoDecodeConfig {
    pub steps: usize,
    pub lr_latent: f64,
    /// 0 freezes the decoder.
    pub lr_decoder: f64,
    /// 0 freezes the prior.
    pub lr_prior: f64,
    /// Weight of the code-length term on the latent values. The prior's own
    /// parameters always follow their likelihood at weight 1, so entropy
    /// estimates stay honest even when the rate pressure is off.
    pub rate_lambda: f64,
    /// Randomly mask fine levels during training so partial reconstructions
    /// degrade smoothly.
    pub level_dropout: bool,
    pub seed: u64,
    pub record_every: usize,
}

impl AutoDecodeConfig {
    pub fn new(steps: usize, lr: f64) -> Self {
        AutoDecodeConfig {
            steps,
            lr_latent: lr,
            lr_decoder: lr,
            lr_prior: lr,
            rate_lambda: 0.0,
            level_dropout: false,
            seed: 0,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AutoDecodeReport {
    /// Recorded objective (MSE + rate_lambda x bits) per recording step.
    pub curve: Vec<f64>,
    pub steps_run: usize,
    pub diverged_at: Option<usize>,
    /// Full-depth clean reconstruction MSE after training.
    pub final_mse: f64,
    /// Quantized code length of the final grids.
    pub final_rate_bits: f64,
}

fn flat_features<T: Real>(g: &FeatureGridSet<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(g.total_feature_count());
    for l in g.levels() {
        out.extend_from_slice(l.features());
    }
    out
}

fn set_features<T: Real>(g: &mut FeatureGridSet<T>, flat: &[T]) {
    let mut off = 0;
    for l in g.levels_mut() {
        let f = l.features_mut();
        f.copy_from_slice(&flat[off..off + f.len()]);
        off += f.len();
    }
}

/// Fits grid latents (and optionally decoder and prior) to one signal by
/// full-lattice gradient descent on MSE + rate_lambda x code length.
pub fn auto_decode_fit<T: Real>(
    model: &mut FieldModel<T>,
    grids: &mut FeatureGridSet<T>,
    prior: &mut LatentPrior<T>,
    signal: &SignalTensor<T>,
    cfg: &AutoDecodeConfig,
) -> Result<AutoDecodeReport> {
    if !matches!(model.conditioning, Conditioning::Local) {
        return Err(CoreError::config("auto_decode_fit needs a locally conditioned model"));
    }
    if grids.query_dim() != model.latent_dim {
        return Err(CoreError::shape("grid query dim != latent dim".to_string()));
    }
    if prior.components() != grids.level_count() {
        return Err(CoreError::shape("prior components != level count".to_string()));
    }
    if model.decoder.out_dim() != signal.channels() {
        return Err(CoreError::shape("decoder output != signal channels".to_string()));
    }
    if grids.dim() != signal.shape().len() {
        return Err(CoreError::shape("grid dim != signal dim".to_string()));
    }
    if cfg.record_every == 0 {
        return Err(CoreError::config("record_every must be at least 1"));
    }

    let coords = lattice_coords::<T>(signal.shape());
    let enc_inputs = encode_lattice(&model.encoding, signal.shape())?;
    let targets = signal.values();
    let c = signal.channels();
    let sites = coords.len();
    let levels = grids.level_count();
    let enc_dim = model.encoding.encoded_dim();

    let mut rng = Prng::seed(cfg.seed);
    let mut dec_state = OptState::for_params(&model.decoder, AdamHyper::with_lr(cfg.lr_decoder.max(f64::MIN_POSITIVE)));
    let mut feat_state = AdamVec::<T>::new(grids.total_feature_count(), AdamHyper::with_lr(cfg.lr_latent.max(f64::MIN_POSITIVE)));
    let mut prior_state = AdamVec::<T>::new(2 * levels, AdamHyper::with_lr(cfg.lr_prior.max(f64::MIN_POSITIVE)));

    let mut curve = Vec::new();
    let mut diverged_at = None;
    let mut steps_run = 0;
    let mut input = Vec::with_capacity(model.decoder.in_dim());

    'outer: for step in 0..cfg.steps {
        let active = if cfg.level_dropout { rng.index(levels + 1) } else { levels };

        // Quantization-aware view of the features for this step.
        let mut noisy = grids.clone();
        for level in noisy.levels_mut() {
            for f in level.features_mut().iter_mut() {
                *f += T::from64(prior.qat_noise(&mut rng));
            }
        }

        let mut dec_grads = model.decoder.zeros_like();
        let mut grid_grads = grids.clone();
        for level in grid_grads.levels_mut() {
            for f in level.features_mut().iter_mut() {
                *f = T::zero();
            }
        }

        // Distortion term over the full lattice.
        let denom = (sites * c) as f64;
        let gscale = T::from64(2.0 / denom);
        let mut loss_acc = 0.0f64;
        for i in 0..sites {
            let (z, trace) = noisy.query_trace(&coords[i], active)?;
            assemble_input(&enc_inputs[i], &z, &mut input);
            let fwd = mlp_forward_trace(&model.decoder, &input)?;
            let t = &targets[i * c..(i + 1) * c];
            let mut dy = vec![T::zero(); c];
            for k in 0..c {
                let diff = fwd.output()[k] - t[k];
                loss_acc += diff.f64() * diff.f64();
                dy[k] = gscale * diff;
            }
            let igrad = mlp_backward_trace(&model.decoder, &fwd, &dy, &mut dec_grads)?;
            scatter_query_grad(&trace, &igrad[enc_dim..], &mut grid_grads)?;
        }
        let mse_term = loss_acc / denom;

        // Rate term on the noisy features; prior parameters always get
        // their likelihood gradient, the features only a lambda-scaled one.
        let mut rate_total = 0.0f64;
        let mut d_mu = vec![T::zero(); levels];
        let mut d_ls = vec![T::zero(); levels];
        for (l, level) in noisy.levels().iter().enumerate() {
            let gl = grid_grads.levels_mut()[l].features_mut();
            for (j, v) in level.features().iter().enumerate() {
                let (bits, g) = prior.rate_bits(l, v.f64());
                rate_total += bits;
                gl[j] += T::from64(cfg.rate_lambda * g.d_value);
                d_mu[l] += T::from64(g.d_mu);
                d_ls[l] += T::from64(g.d_log_scale);
            }
        }

        let loss = mse_term + cfg.rate_lambda * rate_total;
        if !loss.is_finite() {
            diverged_at = Some(step);
            break;
        }
        if step % cfg.record_every == 0 {
            curve.push(loss);
        }

        if cfg.lr_decoder > 0.0 {
            if adam_step(&mut model.decoder, &dec_grads, &mut dec_state).is_err() {
                diverged_at = Some(step);
                break 'outer;
            }
        }
        if cfg.lr_latent > 0.0 {
            let mut flat = flat_features(grids);
            let gflat = flat_features(&grid_grads);
            if feat_state.apply(&mut flat, &gflat).is_err() {
                diverged_at = Some(step);
                break 'outer;
            }
            set_features(grids, &flat);
        }
        if cfg.lr_prior > 0.0 {
            let mut pvec: Vec<T> = prior.mu().to_vec();
            pvec.extend_from_slice(prior.log_scale());
            let mut gvec = d_mu.clone();
            gvec.extend_from_slice(&d_ls);
            if prior_state.apply(&mut pvec, &gvec).is_err() {
                diverged_at = Some(step);
                break 'outer;
            }
            let (mu, ls) = prior.params_mut();
            mu.copy_from_slice(&pvec[..levels]);
            ls.copy_from_slice(&pvec[levels..]);
        }
        steps_run = step + 1;
    }

    let recon = progressive_reconstruct(
        model,
        grids,
        levels,
        signal.shape(),
        signal.lo(),
        signal.hi(),
    )?;
    let final_mse = mse(recon.values(), targets)?;
    let final_rate_bits = grid_entropy_bits(grids, prior)?;
    Ok(AutoDecodeReport { curve, steps_run, diverged_at, final_mse, final_rate_bits })
}

/// Auto-decodes one global latent vector against a signal. The latent gets
/// the same quantization-noise treatment as grid features; components are
/// assigned to the prior round-robin.
pub fn auto_decode_fit_global<T: Real>(
    model: &mut FieldModel<T>,
    z: &mut [T],
    prior: &LatentPrior<T>,
    signal: &SignalTensor<T>,
    cfg: &AutoDecodeConfig,
) -> Result<AutoDecodeReport> {
    if !matches!(model.conditioning, Conditioning::Global) {
        return Err(CoreError::config("auto_decode_fit_global needs a globally conditioned model"));
    }
    if z.len() != model.latent_dim {
        return Err(CoreError::shape("latent length != latent dim".to_string()));
    }
    if z.len() % prior.components() != 0 {
        return Err(CoreError::shape("latent length not a multiple of prior components".to_string()));
    }
    if model.decoder.out_dim() != signal.channels() {
        return Err(CoreError::shape("decoder output != signal channels".to_string()));
    }
    if cfg.record_every == 0 {
        return Err(CoreError::config("record_every must be at least 1"));
    }

    let enc_inputs = encode_lattice(&model.encoding, signal.shape())?;
    let targets = signal.values();
    let c = signal.channels();
    let sites = enc_inputs.len();
    let enc_dim = model.encoding.encoded_dim();
    let m = z.len();
    let pc = prior.components();

    let mut rng = Prng::seed(cfg.seed);
    let mut dec_state = OptState::for_params(&model.decoder, AdamHyper::with_lr(cfg.lr_decoder.max(f64::MIN_POSITIVE)));
    let mut z_state = AdamVec::<T>::new(m, AdamHyper::with_lr(cfg.lr_latent.max(f64::MIN_POSITIVE)));

    let mut curve = Vec::new();
    let mut diverged_at = None;
    let mut steps_run = 0;
    let mut input = Vec::with_capacity(model.decoder.in_dim());

    for step in 0..cfg.steps {
        let mut noisy = z.to_vec();
        for v in noisy.iter_mut() {
            *v += T::from64(prior.qat_noise(&mut rng));
        }

        let mut dec_grads = model.decoder.zeros_like();
        let mut dz = vec![T::zero(); m];
        let denom = (sites * c) as f64;
        let gscale = T::from64(2.0 / denom);
        let mut loss_acc = 0.0f64;
        for i in 0..sites {
            assemble_input(&enc_inputs[i], &noisy, &mut input);
            let fwd = mlp_forward_trace(&model.decoder, &input)?;
            let t = &targets[i * c..(i + 1) * c];
            let mut dy = vec![T::zero(); c];
            for k in 0..c {
                let diff = fwd.output()[k] - t[k];
                loss_acc += diff.f64() * diff.f64();
                dy[k] = gscale * diff;
            }
            let igrad = mlp_backward_trace(&model.decoder, &fwd, &dy, &mut dec_grads)?;
            for (a, b) in dz.iter_mut().zip(igrad[enc_dim..].iter()) {
                *a += *b;
            }
        }
        let mse_term = loss_acc / denom;

        let mut rate_total = 0.0f64;
        for (j, v) in noisy.iter().enumerate() {
            let (bits, g) = prior.rate_bits(j % pc, v.f64());
            rate_total += bits;
            dz[j] += T::from64(cfg.rate_lambda * g.d_value);
        }

        let loss = mse_term + cfg.rate_lambda * rate_total;
        if !loss.is_finite() {
            diverged_at = Some(step);
            break;
        }
        if step % cfg.record_every == 0 {
            curve.push(loss);
        }

        if cfg.lr_decoder > 0.0 {
            if adam_step(&mut model.decoder, &dec_grads, &mut dec_state).is_err() {
                diverged_at = Some(step);
                break;
            }
        }
        if cfg.lr_latent > 0.0 && z_state.apply(z, &dz).is_err() {
            diverged_at = Some(step);
            break;
        }
        steps_run = step + 1;
    }

    let mut final_pred = Vec::with_capacity(sites * c);
    for e in &enc_inputs {
        assemble_input(e, z, &mut input);
        final_pred.extend(mlp_forward(&model.decoder, &input)?);
    }
    let final_mse = mse(&final_pred, targets)?;
    let final_rate_bits = prior.entropy_bits(z)?;
    Ok(AutoDecodeReport { curve, steps_run, diverged_at, final_mse, final_rate_bits })
}

/// Feed-forward alternative to auto-decoding a global latent: a small MLP
/// maps the flattened signal to z in one pass.
pub fn global_encode<T: Real>(
    encoder: &ModelParams<T>,
    signal: &SignalTensor<T>,
) -> Result<Vec<T>> {
    if encoder.in_dim() != signal.values().len() {
        return Err(CoreError::shape(format!(
            "encoder input {} != flattened signal {}",
            encoder.in_dim(),
            signal.values().len()
        )));
    }
    mlp_forward(encoder, signal.values())
}

/// Joint reconstruction training of a feed-forward global encoder and the
/// field decoder over a small dataset. Plain MSE; rate handling stays with
/// the auto-decoder path.
pub fn fit_feedforward_global<T: Real>(
    encoder: &mut ModelParams<T>,
    model: &mut FieldModel<T>,
    signals: &[SignalTensor<T>],
    steps: usize,
    lr: f64,
) -> Result<Vec<f64>> {
    if signals.is_empty() {
        return Err(CoreError::config("need at least one signal"));
    }
    if !matches!(model.conditioning, Conditioning::Global) {
        return Err(CoreError::config("feed-forward encoder is global-only"));
    }
    if encoder.out_dim() != model.latent_dim {
        return Err(CoreError::shape("encoder output != latent dim".to_string()));
    }
    for s in signals {
        if !signals[0].same_layout(s) {
            return Err(CoreError::shape("signals must share a layout".to_string()));
        }
    }
    if encoder.in_dim() != signals[0].values().len() {
        return Err(CoreError::shape("encoder input != flattened signal".to_string()));
    }

    let enc_inputs = encode_lattice(&model.encoding, signals[0].shape())?;
    let c = signals[0].channels();
    let sites = enc_inputs.len();
    let enc_dim = model.encoding.encoded_dim();

    let mut enc_state = OptState::for_params(encoder, AdamHyper::with_lr(lr));
    let mut dec_state = OptState::for_params(&model.decoder, AdamHyper::with_lr(lr));
    let mut curve = Vec::with_capacity(steps);
    let mut input = Vec::with_capacity(model.decoder.in_dim());

    for _ in 0..steps {
        let mut enc_grads = encoder.zeros_like();
        let mut dec_grads = model.decoder.zeros_like();
        let denom = (signals.len() * sites * c) as f64;
        let gscale = T::from64(2.0 / denom);
        let mut loss_acc = 0.0f64;

        for signal in signals {
            let z = mlp_forward(encoder, signal.values())?;
            let targets = signal.values();
            let mut dz = vec![T::zero(); z.len()];
            for i in 0..sites {
                assemble_input(&enc_inputs[i], &z, &mut input);
                let fwd = mlp_forward_trace(&model.decoder, &input)?;
                let t = &targets[i * c..(i + 1) * c];
                let mut dy = vec![T::zero(); c];
                for k in 0..c {
                    let diff = fwd.output()[k] - t[k];
                    loss_acc += diff.f64() * diff.f64();
                    dy[k] = gscale * diff;
                }
                let igrad = mlp_backward_trace(&model.decoder, &fwd, &dy, &mut dec_grads)?;
                for (a, b) in dz.iter_mut().zip(igrad[enc_dim..].iter()) {
                    *a += *b;
                }
            }
            let (sig_enc_grads, _) = mlp_backward(encoder, signal.values(), &dz)?;
            enc_grads.add_scaled(&sig_enc_grads, T::one())?;
        }

        let loss = loss_acc / denom;
        if !loss.is_finite() {
            break;
        }
        curve.push(loss);
        adam_step(encoder, &enc_grads, &mut enc_state)?;
        adam_step(&mut model.decoder, &dec_grads, &mut dec_state)?;
    }
    Ok(curve)
}
