//! Explicit coding of images: patch analysis/synthesis transforms, a latent
//! prior for rate accounting, entropy-guided channel-use allocation, and
//! per-instance decoder adaptation with a transmitted sparse model update.
//!
//! Training optimizes MSE through a noisy latent channel plus a weighted
//! code-length term. The prior's parameters always follow their likelihood
//! objective at weight 1; `rate_lambda` scales only the pressure applied to
//! the latent values, so entropy estimates stay honest even at lambda 0.

use crate::error::{CoreError, Result};
use crate::loss::mse;
use crate::nn::{
    mlp_backward_trace, mlp_forward, mlp_forward_trace, Activation, Layer, ModelParams,
};
use crate::optim::{adam_step, AdamHyper, AdamVec, OptState};
use crate::prior::{dequantize, quantize, LatentPrior, PriorFamily};
use crate::rng::Prng;
use crate::scalar::Real;
use crate::signal::SignalTensor;

// --- patch tiling ---------------------------------------------------------

/// How an image maps onto a whole number of p x p patches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchLayout {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub patch: usize,
    pub patches_y: usize,
    pub patches_x: usize,
}

impl PatchLayout {
    pub fn new(height: usize, width: usize, channels: usize, patch: usize) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || patch == 0 {
            return Err(CoreError::config("patch layout dims must be positive"));
        }
        Ok(PatchLayout {
            height,
            width,
            channels,
            patch,
            patches_y: height.div_ceil(patch),
            patches_x: width.div_ceil(patch),
        })
    }

    pub fn patch_count(&self) -> usize {
        self.patches_y * self.patches_x
    }

    pub fn patch_len(&self) -> usize {
        self.patch * self.patch * self.channels
    }

    /// True when the image needed reflect padding to fill the tiling.
    pub fn padded(&self) -> bool {
        self.height % self.patch != 0 || self.width % self.patch != 0
    }
}

/// Folds an out-of-range index back into [0, n) by mirroring at the edges.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Cuts a 2-d signal into flattened p x p patches in raster order,
/// reflect-padding the bottom/right edges when needed.
pub fn extract_patches<T: Real>(
    signal: &SignalTensor<T>,
    patch: usize,
) -> Result<(Vec<Vec<T>>, PatchLayout)> {
    let shape = signal.shape();
    if shape.len() != 2 {
        return Err(CoreError::shape(format!(
            "patch coding expects a 2-d signal, got {}-d",
            shape.len()
        )));
    }
    let (h, w, c) = (shape[0], shape[1], signal.channels());
    let layout = PatchLayout::new(h, w, c, patch)?;
    let values = signal.values();
    let mut patches = Vec::with_capacity(layout.patch_count());
    for py in 0..layout.patches_y {
        for px in 0..layout.patches_x {
            let mut flat = Vec::with_capacity(layout.patch_len());
            for dy in 0..patch {
                let y = reflect((py * patch + dy) as isize, h);
                for dx in 0..patch {
                    let x = reflect((px * patch + dx) as isize, w);
                    let site = y * w + x;
                    flat.extend_from_slice(&values[site * c..(site + 1) * c]);
                }
            }
            patches.push(flat);
        }
    }
    Ok((patches, layout))
}

/// Tiles patches back into a signal, cropping any padding and clamping
/// values to the declared range.
pub fn assemble_patches<T: Real>(
    patches: &[Vec<T>],
    layout: &PatchLayout,
    lo: f64,
    hi: f64,
) -> Result<SignalTensor<T>> {
    if patches.len() != layout.patch_count() {
        return Err(CoreError::shape(format!(
            "patch count {} != layout count {}",
            patches.len(),
            layout.patch_count()
        )));
    }
    let (h, w, c, p) = (layout.height, layout.width, layout.channels, layout.patch);
    let tlo = T::from64(lo);
    let thi = T::from64(hi);
    let mut values = vec![T::zero(); h * w * c];
    for (pi, flat) in patches.iter().enumerate() {
        if flat.len() != layout.patch_len() {
            return Err(CoreError::shape("patch length mismatch".to_string()));
        }
        let py = pi / layout.patches_x;
        let px = pi % layout.patches_x;
        for dy in 0..p {
            let y = py * p + dy;
            if y >= h {
                continue;
            }
            for dx in 0..p {
                let x = px * p + dx;
                if x >= w {
                    continue;
                }
                let site = y * w + x;
                for k in 0..c {
                    let v = flat[(dy * p + dx) * c + k];
                    values[site * c + k] = v.max(tlo).min(thi);
                }
            }
        }
    }
    SignalTensor::new(vec![h, w], c, lo, hi, values)
}

// --- model ----------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EscModel<T> {
    pub analysis: ModelParams<T>,
    pub synthesis: ModelParams<T>,
    pub prior: LatentPrior<T>,
    patch: usize,
    latent_dim: usize,
    channels: usize,
}

impl<T: Real> EscModel<T> {
    pub fn new(
        analysis: ModelParams<T>,
        synthesis: ModelParams<T>,
        prior: LatentPrior<T>,
        patch: usize,
        channels: usize,
    ) -> Result<Self> {
        let patch_len = patch * patch * channels;
        if patch == 0 || channels == 0 {
            return Err(CoreError::config("patch and channel count must be positive"));
        }
        if analysis.in_dim() != patch_len {
            return Err(CoreError::shape(format!(
                "analysis input {} != patch length {}",
                analysis.in_dim(),
                patch_len
            )));
        }
        let latent_dim = analysis.out_dim();
        if synthesis.in_dim() != latent_dim || synthesis.out_dim() != patch_len {
            return Err(CoreError::shape(format!(
                "synthesis must map {} -> {}, maps {} -> {}",
                latent_dim,
                patch_len,
                synthesis.in_dim(),
                synthesis.out_dim()
            )));
        }
        if prior.components() != latent_dim {
            return Err(CoreError::shape(format!(
                "prior components {} != latent dim {}",
                prior.components(),
                latent_dim
            )));
        }
        Ok(EscModel { analysis, synthesis, prior, patch, latent_dim, channels })
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

/// One latent vector per patch, raster order.
pub fn analysis_transform<T: Real>(
    model: &EscModel<T>,
    image: &SignalTensor<T>,
) -> Result<(Vec<Vec<T>>, PatchLayout)> {
    if image.channels() != model.channels {
        return Err(CoreError::shape(format!(
            "image has {} channels, model expects {}",
            image.channels(),
            model.channels
        )));
    }
    let (patches, layout) = extract_patches(image, model.patch)?;
    let latents = patches
        .iter()
        .map(|p| mlp_forward(&model.analysis, p))
        .collect::<Result<Vec<_>>>()?;
    Ok((latents, layout))
}

/// Decodes per-patch latents and tiles them into an image, clamped to the
/// declared signal range.
pub fn synthesis_transform<T: Real>(
    model: &EscModel<T>,
    latents: &[Vec<T>],
    layout: &PatchLayout,
    lo: f64,
    hi: f64,
) -> Result<SignalTensor<T>> {
    if latents.len() != layout.patch_count() {
        return Err(CoreError::shape(format!(
            "latent count {} != patch count {}",
            latents.len(),
            layout.patch_count()
        )));
    }
    let decoded = latents
        .iter()
        .map(|z| {
            if z.len() != model.latent_dim {
                return Err(CoreError::shape("latent dim mismatch".to_string()));
            }
            mlp_forward(&model.synthesis, z)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_patches(&decoded, layout, lo, hi)
}

// --- rate allocation ------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RateAllocation {
    uses: Vec<usize>,
    budget: usize,
    uniform_fallback: bool,
}

impl RateAllocation {
    pub fn uses(&self) -> &[usize] {
        &self.uses
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// True when all entropies were zero and the budget was spread evenly.
    pub fn uniform_fallback(&self) -> bool {
        self.uniform_fallback
    }
}

/// Splits `budget` channel uses across latents proportionally to their
/// entropy share, integerized by largest remainder with index tie-breaks.
/// `cap` bounds any single entry (at most one symbol per latent dimension).
pub fn rate_allocate(entropies: &[f64], budget: usize, cap: usize) -> Result<RateAllocation> {
    if entropies.is_empty() {
        return Err(CoreError::config("rate allocation needs at least one latent"));
    }
    if entropies.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(CoreError::config("entropies must be finite and nonnegative"));
    }
    if cap == 0 && budget > 0 {
        return Err(CoreError::config("cap 0 cannot carry a positive budget"));
    }
    let total: f64 = entropies.iter().sum();
    let uniform_fallback = total == 0.0 && budget > 0;
    let weights: Vec<f64> = if uniform_fallback {
        vec![1.0; entropies.len()]
    } else {
        entropies.to_vec()
    };
    let wsum: f64 = weights.iter().sum();

    let mut uses = vec![0usize; weights.len()];
    if budget == 0 {
        return Ok(RateAllocation { uses, budget, uniform_fallback: false });
    }
    let capacity = weights.iter().filter(|w| **w > 0.0).count().saturating_mul(cap);
    if budget > capacity {
        return Err(CoreError::config(format!(
            "budget {} exceeds allocatable capacity {}",
            budget, capacity
        )));
    }

    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        let quota = budget as f64 * w / wsum;
        let floor = (quota.floor() as usize).min(cap);
        uses[i] = floor;
        assigned += floor;
        remainders.push((i, quota - quota.floor()));
    }
    // Hand out the leftovers by descending remainder, lowest index first;
    // capped entries sit out. Repeat passes until the budget is exact.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    while assigned < budget {
        let before = assigned;
        for (i, _) in &remainders {
            if assigned == budget {
                break;
            }
            if uses[*i] < cap {
                uses[*i] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            return Err(CoreError::config("allocation cannot reach budget under cap"));
        }
    }
    Ok(RateAllocation { uses, budget, uniform_fallback })
}

/// Code length of each patch's latent under the model prior.
pub fn per_patch_entropy<T: Real>(
    model: &EscModel<T>,
    latents: &[Vec<T>],
) -> Result<Vec<f64>> {
    latents.iter().map(|z| model.prior.entropy_bits(z)).collect()
}

/// Latent dimensions ordered most-informative-first under the prior
/// (descending scale, index tie-break). Both ends derive the same order
/// from the shared prior, so it costs no side information.
pub fn dim_priority<T: Real>(prior: &LatentPrior<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..prior.components()).collect();
    order.sort_by(|a, b| {
        prior
            .scale(*b)
            .partial_cmp(&prior.scale(*a))
            .unwrap()
            .then(a.cmp(b))
    });
    order
}

// --- training -------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EscTrainConfig {
    pub patch: usize,
    pub latent_dim: usize,
    /// Width of the two hidden layers in each transform.
    pub hidden: usize,
    /// Latent-channel SNR during training; infinite means noiseless.
    pub snr_db: f64,
    pub rate_lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub delta: f64,
    pub prior_family: PriorFamily,
    pub seed: u64,
}

impl EscTrainConfig {
    pub fn new(patch: usize, latent_dim: usize) -> Self {
        EscTrainConfig {
            patch,
            latent_dim,
            hidden: 32,
            snr_db: f64::INFINITY,
            rate_lambda: 0.0,
            epochs: 100,
            lr: 1e-3,
            delta: 0.05,
            prior_family: PriorFamily::Laplace,
            seed: 0,
        }
    }
}

/// ReLU MLP with uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights and an
/// identity output layer.
fn transform_init<T: Real>(dims: &[usize], rng: &mut Prng) -> Result<ModelParams<T>> {
    let last = dims.len() - 2;
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (i, pair) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| T::from64(rng.uniform_in(-bound, bound)))
            .collect();
        let activation = if i == last { Activation::Identity } else { Activation::Relu };
        layers.push(Layer::new(fan_in, fan_out, weights, vec![T::zero(); fan_out], activation)?);
    }
    ModelParams::new(layers)
}

/// Trains analysis/synthesis/prior end to end: per-image gradient steps on
/// MSE through a latent AWGN channel plus rate_lambda x code length. The
/// channel noise power tracks the current latent power so the training SNR
/// means what it says. Returns the model and the per-epoch loss curve.
pub fn train_esc<T: Real>(
    dataset: &[SignalTensor<T>],
    cfg: &EscTrainConfig,
) -> Result<(EscModel<T>, Vec<f64>)> {
    if dataset.is_empty() {
        return Err(CoreError::config("training needs at least one image"));
    }
    let channels = dataset[0].channels();
    for s in dataset {
        if s.channels() != channels || s.shape().len() != 2 {
            return Err(CoreError::shape("dataset images must be 2-d with equal channels".to_string()));
        }
    }
    let patch_len = cfg.patch * cfg.patch * channels;
    let m = cfg.latent_dim;

    let mut rng = Prng::seed(cfg.seed);
    let analysis = transform_init::<T>(&[patch_len, cfg.hidden, cfg.hidden, m], &mut rng)?;
    let synthesis = transform_init::<T>(&[m, cfg.hidden, cfg.hidden, patch_len], &mut rng)?;
    let prior = LatentPrior::new(cfg.prior_family, m, cfg.delta)?;
    let mut model = EscModel::new(analysis, synthesis, prior, cfg.patch, channels)?;

    let patched: Vec<Vec<Vec<T>>> = dataset
        .iter()
        .map(|s| extract_patches(s, cfg.patch).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;

    let mut a_state = OptState::for_params(&model.analysis, AdamHyper::with_lr(cfg.lr));
    let mut s_state = OptState::for_params(&model.synthesis, AdamHyper::with_lr(cfg.lr));
    let mut p_state = AdamVec::<T>::new(2 * m, AdamHyper::with_lr(cfg.lr));

    let noise_factor = if cfg.snr_db.is_infinite() {
        0.0
    } else {
        10f64.powf(-cfg.snr_db / 10.0)
    };

    let mut curve = Vec::with_capacity(cfg.epochs);
    'epochs: for _ in 0..cfg.epochs {
        let mut epoch_loss = 0.0f64;
        for patches in &patched {
            let n_scalars = patches.len() * patch_len;

            // Analysis pass and latent power.
            let mut a_traces = Vec::with_capacity(patches.len());
            let mut power = 0.0f64;
            for p in patches {
                let tr = mlp_forward_trace(&model.analysis, p)?;
                for v in tr.output() {
                    power += v.f64() * v.f64();
                }
                a_traces.push(tr);
            }
            power /= (patches.len() * m) as f64;
            let noise_std = (power * noise_factor).sqrt();

            // Noisy latents through synthesis; distortion gradients.
            let mut a_grads = model.analysis.zeros_like();
            let mut s_grads = model.synthesis.zeros_like();
            let mut d_mu = vec![T::zero(); m];
            let mut d_ls = vec![T::zero(); m];
            let gscale = T::from64(2.0 / n_scalars as f64);
            let mut mse_acc = 0.0f64;
            let mut rate_acc = 0.0f64;
            for (p, tr) in patches.iter().zip(a_traces.iter()) {
                let mut noisy: Vec<T> = tr.output().to_vec();
                if noise_std > 0.0 {
                    for v in noisy.iter_mut() {
                        *v += T::from64(noise_std * rng.normal());
                    }
                }
                let s_tr = mlp_forward_trace(&model.synthesis, &noisy)?;
                let mut dy = vec![T::zero(); patch_len];
                for k in 0..patch_len {
                    let diff = s_tr.output()[k] - p[k];
                    mse_acc += diff.f64() * diff.f64();
                    dy[k] = gscale * diff;
                }
                let mut dz = mlp_backward_trace(&model.synthesis, &s_tr, &dy, &mut s_grads)?;

                // Rate term on a quantization-noise view of the latents.
                for (j, v) in tr.output().iter().enumerate() {
                    let noised = v.f64() + model.prior.qat_noise(&mut rng);
                    let (bits, g) = model.prior.rate_bits(j, noised);
                    rate_acc += bits;
                    dz[j] += T::from64(cfg.rate_lambda * g.d_value);
                    d_mu[j] += T::from64(g.d_mu);
                    d_ls[j] += T::from64(g.d_log_scale);
                }
                mlp_backward_trace(&model.analysis, tr, &dz, &mut a_grads)?;
            }
            let loss = mse_acc / n_scalars as f64 + cfg.rate_lambda * rate_acc;
            if !loss.is_finite() {
                break 'epochs;
            }
            epoch_loss += loss;

            if adam_step(&mut model.analysis, &a_grads, &mut a_state).is_err()
                || adam_step(&mut model.synthesis, &s_grads, &mut s_state).is_err()
            {
                break 'epochs;
            }
            let mut pvec: Vec<T> = model.prior.mu().to_vec();
            pvec.extend_from_slice(model.prior.log_scale());
            let mut gvec = d_mu;
            gvec.extend_from_slice(&d_ls);
            if p_state.apply(&mut pvec, &gvec).is_err() {
                break 'epochs;
            }
            let (mu, ls) = model.prior.params_mut();
            mu.copy_from_slice(&pvec[..m]);
            ls.copy_from_slice(&pvec[m..]);
        }
        curve.push(epoch_loss / patched.len() as f64);
    }
    Ok((model, curve))
}

// --- online decoder adaptation --------------------------------------------

/// Sparse quantized change to the synthesis parameters, in flatten order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelUpdate {
    /// (flat parameter index, bin count) with unique ascending indices.
    entries: Vec<(usize, i64)>,
    /// Bin width of the quantized deltas.
    delta_u: f64,
    /// Scale of the zero-location Laplace prior the deltas are coded under.
    prior_scale: f64,
}

impl ModelUpdate {
    pub fn empty(delta_u: f64) -> Self {
        ModelUpdate { entries: Vec::new(), delta_u, prior_scale: 1.0 }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, i64)] {
        &self.entries
    }

    pub fn delta_u(&self) -> f64 {
        self.delta_u
    }

    pub fn prior_scale(&self) -> f64 {
        self.prior_scale
    }

    /// Applies the update to a base model; both ends run exactly this.
    pub fn apply<T: Real>(&self, base: &ModelParams<T>) -> Result<ModelParams<T>> {
        let mut flat = base.flatten();
        let mut last: Option<usize> = None;
        for &(idx, bins) in &self.entries {
            if idx >= flat.len() {
                return Err(CoreError::shape(format!(
                    "update index {} out of range {}",
                    idx,
                    flat.len()
                )));
            }
            if let Some(prev) = last {
                if idx <= prev {
                    return Err(CoreError::config("update indices must be unique and ascending"));
                }
            }
            last = Some(idx);
            flat[idx] += T::from64(dequantize(bins, self.delta_u));
        }
        base.unflatten(&flat)
    }

    /// Transmission cost: coded delta values, flat-coded indices, and a
    /// fixed 96-bit header (bin width, prior scale, entry count).
    pub fn overhead_bits(&self, param_count: usize) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let prior = LatentPrior::<f64>::with_params(
            PriorFamily::Laplace,
            vec![0.0],
            vec![self.prior_scale.ln()],
            self.delta_u,
        )
        .expect("valid delta and scale by construction");
        let value_bits: f64 = self
            .entries
            .iter()
            .map(|&(_, bins)| {
                -prior.bin_prob(0, bins).max(crate::prior::MIN_BIN_PROB).log2()
            })
            .sum();
        let index_bits = (param_count as f64).log2().ceil().max(1.0);
        value_bits + self.entries.len() as f64 * index_bits + 96.0
    }
}

#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub steps: usize,
    pub lr: f64,
    /// Quantization bin for the parameter deltas.
    pub delta_u: f64,
    /// Converts overhead bits into the RD cost used by the fallback rule.
    pub rd_lambda: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptOutcome<T> {
    pub update: ModelUpdate,
    pub reconstruction: SignalTensor<T>,
    pub overhead_bits: f64,
    pub base_mse: f64,
    pub adapted_mse: f64,
    pub fell_back: bool,
}

/// Fine-tunes the synthesis transform on one instance, quantizes the
/// parameter change into a sparse update, and keeps it only if it lowers
/// the instance RD cost (distortion + rd_lambda x overhead bits). The
/// returned reconstruction is exactly what a receiver holding the base
/// model and the update would produce from clean latents.
pub fn online_adapt_decoder<T: Real>(
    model: &EscModel<T>,
    image: &SignalTensor<T>,
    cfg: &AdaptConfig,
) -> Result<AdaptOutcome<T>> {
    if !(cfg.delta_u > 0.0) || !cfg.delta_u.is_finite() {
        return Err(CoreError::config("delta_u must be positive and finite"));
    }
    let (latents, layout) = analysis_transform(model, image)?;
    let lo = image.lo();
    let hi = image.hi();
    let base_recon = synthesis_transform(model, &latents, &layout, lo, hi)?;
    let base_mse = mse(base_recon.values(), image.values())?;

    if cfg.steps == 0 {
        return Ok(AdaptOutcome {
            update: ModelUpdate::empty(cfg.delta_u),
            reconstruction: base_recon,
            overhead_bits: 0.0,
            base_mse,
            adapted_mse: base_mse,
            fell_back: false,
        });
    }

    // Fine-tune a copy of the synthesis transform against the clean latents.
    let (patches, _) = extract_patches(image, model.patch())?;
    let patch_len = layout.patch_len();
    let n_scalars = patches.len() * patch_len;
    let mut tuned = model.synthesis.clone();
    let mut state = OptState::for_params(&tuned, AdamHyper::with_lr(cfg.lr));
    for _ in 0..cfg.steps {
        let mut grads = tuned.zeros_like();
        let gscale = T::from64(2.0 / n_scalars as f64);
        let mut finite = true;
        for (z, p) in latents.iter().zip(patches.iter()) {
            let tr = mlp_forward_trace(&tuned, z)?;
            let mut dy = vec![T::zero(); patch_len];
            for k in 0..patch_len {
                let diff = tr.output()[k] - p[k];
                if !diff.is_finite() {
                    finite = false;
                    break;
                }
                dy[k] = gscale * diff;
            }
            if !finite {
                break;
            }
            mlp_backward_trace(&tuned, &tr, &dy, &mut grads)?;
        }
        if !finite || adam_step(&mut tuned, &grads, &mut state).is_err() {
            break;
        }
    }

    // Quantize the dense delta into sparse entries.
    let base_flat = model.synthesis.flatten();
    let tuned_flat = tuned.flatten();
    let mut entries = Vec::new();
    let mut abs_sum = 0.0f64;
    for (i, (b, t)) in base_flat.iter().zip(tuned_flat.iter()).enumerate() {
        let bins = quantize((*t - *b).f64(), cfg.delta_u)?;
        if bins != 0 {
            abs_sum += dequantize(bins, cfg.delta_u).abs();
            entries.push((i, bins));
        }
    }
    let prior_scale = if entries.is_empty() {
        1.0
    } else {
        (abs_sum / entries.len() as f64).max(1e-9)
    };
    let update = ModelUpdate { entries, delta_u: cfg.delta_u, prior_scale };

    // Receiver-faithful adapted model and the RD decision.
    let adapted_model = EscModel::new(
        model.analysis.clone(),
        update.apply(&model.synthesis)?,
        model.prior.clone(),
        model.patch(),
        model.channels(),
    )?;
    let adapted_recon = synthesis_transform(&adapted_model, &latents, &layout, lo, hi)?;
    let adapted_mse = mse(adapted_recon.values(), image.values())?;
    let overhead = update.overhead_bits(base_flat.len());

    let rd_base = base_mse;
    let rd_adapted = adapted_mse + cfg.rd_lambda * overhead;
    if update.is_empty() || rd_adapted >= rd_base {
        return Ok(AdaptOutcome {
            update: ModelUpdate::empty(cfg.delta_u),
            reconstruction: base_recon,
            overhead_bits: 0.0,
            base_mse,
            adapted_mse,
            fell_back: true,
        });
    }
    Ok(AdaptOutcome {
        update,
        reconstruction: adapted_recon,
        overhead_bits: overhead,
        base_mse,
        adapted_mse,
        fell_back: false,
    })
}
