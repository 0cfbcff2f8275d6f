//! Transmission schemes: the encode, transmit, decode paths with explicit
//! channel-use accounting.
//!
//! Conventions shared by every scheme:
//! - Static experiment setup (architectures, signal dimensions, shared
//!   initializations, codec transforms) is known at both ends and costs
//!   nothing per instance; anything derived from the instance travels and
//!   is charged.
//! - Analog stages spend one pilot symbol on the power scale, modeled as
//!   delivered intact. Instance side information (rate allocations, decoder
//!   updates, per-instance decoders) travels digitally and is charged
//!   ceil(bits / capacity) channel uses at the nominal SNR.
//! - A scheme given a budget spends exactly that many uses, with unused
//!   symbols logged as padding. When the mandatory metadata cannot fit,
//!   nothing is sent: the point is marked failed and the reconstruction is
//!   the mid-range fallback.
//! - The wire runs at f64 so a noiseless channel with a sufficient budget
//!   returns the transmitted f32 values bit-exactly after the scale
//!   round trip.

use anyhow::{bail, Result};
use semcast_core::channel::{
    bandwidth_report, channel_transmit, denormalize, digital_link, power_normalize, ChannelConfig,
};
use semcast_core::ckpt::{encode_encoding, encode_mlp, encode_prior, Container};
use semcast_core::encoding::Encoding;
use semcast_core::esc::{
    analysis_transform, dim_priority, online_adapt_decoder, per_patch_entropy, rate_allocate,
    synthesis_transform, train_esc, AdaptConfig, EscModel, EscTrainConfig,
};
use semcast_core::field::{
    auto_decode_fit, progressive_reconstruct, AutoDecodeConfig, AutoDecodeReport, Conditioning,
    FieldModel,
};
use semcast_core::inr::{fit_inr, sample_inr, siren_init, FitConfig, FitReport};
use semcast_core::loss::{mse, Psnr};
use semcast_core::meta::{fast_adapt, meta_train, MetaAlgorithm, MetaConfig};
use semcast_core::prior::PriorFamily;
use semcast_core::{Encoder, GridSet, Model, Prior, Scalar, Signal};

use crate::config::{AdaptCfg, Config, EscCfg, FieldCfg, InrCfg};

/// Which layers keep their symbols when the budget truncates an analog
/// parameter transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncationOrder {
    EarlierFirst,
    LaterFirst,
}

impl TruncationOrder {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "earlier-first" => Ok(TruncationOrder::EarlierFirst),
            "later-first" => Ok(TruncationOrder::LaterFirst),
            other => bail!("unknown truncation order {other:?}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Scheme {
    IscAnalog {
        params: Model,
        enc: Encoder,
        truncation: TruncationOrder,
    },
    /// Both ends share a meta-learned initialization; only the adaptation
    /// delta travels, which concentrates transmit power on what is new.
    IscMeta {
        init: Model,
        enc: Encoder,
        adapt_steps: usize,
        adapt_lr: f64,
        truncation: TruncationOrder,
    },
    EscAnalog {
        model: EscModel<Scalar>,
    },
    EscAdaptive {
        model: EscModel<Scalar>,
        adapt: AdaptConfig,
    },
    HscFieldGrid {
        model: FieldModel<Scalar>,
        grids: GridSet,
        prior: Prior,
    },
    DigitalBaseline {
        bits_per_sample: u32,
    },
}

impl Scheme {
    pub fn id(&self) -> &'static str {
        match self {
            Scheme::IscAnalog { .. } => "isc-analog",
            Scheme::IscMeta { .. } => "isc-meta",
            Scheme::EscAnalog { .. } => "esc-analog",
            Scheme::EscAdaptive { .. } => "esc-adaptive",
            Scheme::HscFieldGrid { .. } => "hsc-fieldgrid",
            Scheme::DigitalBaseline { .. } => "digital-baseline",
        }
    }
}

/// One rate-distortion measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RDPoint {
    pub scheme: String,
    pub snr_db: f64,
    /// Channel uses per source scalar, always n / k.
    pub ratio: f64,
    /// Channel uses spent, metadata included.
    pub n: usize,
    /// Source scalars.
    pub k: usize,
    pub mse: f64,
    pub psnr: Psnr,
    /// Digital side-information bits that accompanied the payload.
    pub overhead_bits: f64,
    pub seed: u64,
    pub failed: bool,
}

impl RDPoint {
    pub const CSV_HEADER: &'static str = "scheme,snr_db,ratio,n,k,mse,psnr,overhead_bits,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{},{},{:.6e},{},{:.1},{}",
            self.scheme,
            self.snr_db,
            self.ratio,
            self.n,
            self.k,
            self.mse,
            self.psnr,
            self.overhead_bits,
            self.seed
        )
    }
}

#[derive(Debug, Clone)]
pub struct TransmissionOutcome {
    pub point: RDPoint,
    pub reconstruction: Signal,
    /// (stage name, channel uses) in wire order; sums to `point.n`.
    pub stages: Vec<(String, usize)>,
}

impl TransmissionOutcome {
    pub fn stage_total(&self) -> usize {
        self.stages.iter().map(|s| s.1).sum()
    }
}

pub fn run_transmission(
    scheme: &Scheme,
    signal: &Signal,
    channel: &ChannelConfig,
    budget: usize,
) -> Result<TransmissionOutcome> {
    let out = match scheme {
        Scheme::IscAnalog { params, enc, truncation } => {
            run_isc("isc-analog", None, params, enc, *truncation, signal, channel, budget)?
        }
        Scheme::IscMeta { init, enc, adapt_steps, adapt_lr, truncation } => {
            let adapted = fast_adapt(init, enc, signal, *adapt_steps, *adapt_lr)?;
            run_isc("isc-meta", Some(init), &adapted, enc, *truncation, signal, channel, budget)?
        }
        Scheme::EscAnalog { model } => run_esc("esc-analog", model, None, signal, channel, budget)?,
        Scheme::EscAdaptive { model, adapt } => {
            run_esc("esc-adaptive", model, Some(adapt), signal, channel, budget)?
        }
        Scheme::HscFieldGrid { model, grids, prior } => {
            run_hsc(model, grids, prior, signal, channel, budget)?
        }
        Scheme::DigitalBaseline { bits_per_sample } => {
            run_digital(*bits_per_sample, signal, channel, budget)?
        }
    };
    debug_assert_eq!(out.stage_total(), out.point.n);
    Ok(out)
}

// --- wire building blocks ---------------------------------------------------

/// Unit-power analog round trip at f64: normalize, transmit, denormalize.
fn analog_wire(values: &[f64], channel: &ChannelConfig) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let norm = power_normalize(values)?;
    let out = channel_transmit(&norm.symbols, channel)?;
    Ok(denormalize(&out.symbols, norm.scale))
}

/// Channel uses needed to land `bits` of side information error-free at the
/// nominal SNR (capacity argument; zero at infinite SNR).
fn side_info_uses(bits: f64, snr_db: f64) -> usize {
    if bits <= 0.0 || snr_db == f64::INFINITY {
        return 0;
    }
    let per_use = 0.5 * (1.0 + 10f64.powf(snr_db / 10.0)).log2();
    (bits / per_use).ceil() as usize
}

/// Bits needed to count 0..=max.
fn count_bits(max: usize) -> f64 {
    (u64::BITS - (max as u64).leading_zeros()) as f64
}

/// Flat parameter indices in transmission priority order: whole layers,
/// weights then bias within each layer.
fn priority_indices(params: &Model, order: TruncationOrder) -> Vec<usize> {
    let mut spans = Vec::with_capacity(params.layers().len());
    let mut at = 0usize;
    for l in params.layers() {
        let len = l.in_dim() * l.out_dim() + l.out_dim();
        spans.push(at..at + len);
        at += len;
    }
    if order == TruncationOrder::LaterFirst {
        spans.reverse();
    }
    spans.into_iter().flatten().collect()
}

fn rd_point(
    id: &str,
    channel: &ChannelConfig,
    n: usize,
    recon: &Signal,
    signal: &Signal,
    overhead_bits: f64,
    failed: bool,
) -> Result<RDPoint> {
    let err = mse(recon.values(), signal.values())?;
    Ok(RDPoint {
        scheme: id.to_string(),
        snr_db: channel.snr_db,
        ratio: bandwidth_report(n, signal.len())?.ratio,
        n,
        k: signal.len(),
        mse: err,
        psnr: Psnr::from_mse(err, signal.peak())?,
        overhead_bits,
        seed: channel.seed,
        failed,
    })
}

fn failed_outcome(
    id: &str,
    signal: &Signal,
    channel: &ChannelConfig,
    n: usize,
    stages: Vec<(String, usize)>,
    overhead_bits: f64,
) -> Result<TransmissionOutcome> {
    let reconstruction = signal.failure_fill();
    let point = rd_point(id, channel, n, &reconstruction, signal, overhead_bits, true)?;
    Ok(TransmissionOutcome { point, reconstruction, stages })
}

// --- per-scheme paths ---------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn run_isc(
    id: &'static str,
    base: Option<&Model>,
    params: &Model,
    enc: &Encoder,
    truncation: TruncationOrder,
    signal: &Signal,
    channel: &ChannelConfig,
    budget: usize,
) -> Result<TransmissionOutcome> {
    if budget == 0 {
        return failed_outcome(id, signal, channel, 0, Vec::new(), 0.0);
    }
    let flat = params.flatten();
    let carried: Vec<f64> = match base {
        None => flat.iter().map(|v| *v as f64).collect(),
        Some(b) => {
            flat.iter().zip(b.flatten()).map(|(a, b0)| *a as f64 - b0 as f64).collect()
        }
    };
    let prio = priority_indices(params, truncation);
    let avail = budget - 1;
    let sent = prio.len().min(avail);
    let payload: Vec<f64> = prio[..sent].iter().map(|&i| carried[i]).collect();
    let received = analog_wire(&payload, channel)?;

    // Unsent slots fall back to the shared default: zero, or the shared
    // initialization when a base is in play.
    let mut rec = vec![0.0f64; carried.len()];
    for (slot, &i) in prio[..sent].iter().enumerate() {
        rec[i] = received[slot];
    }
    let rec32: Vec<Scalar> = match base {
        None => rec.iter().map(|v| *v as Scalar).collect(),
        Some(b) => {
            b.flatten().iter().zip(&rec).map(|(b0, d)| (*b0 as f64 + d) as Scalar).collect()
        }
    };
    let rx_params = params.unflatten(&rec32)?;
    let reconstruction = sample_inr(&rx_params, enc, signal.shape(), signal.lo(), signal.hi())?;

    let payload_name = if base.is_some() { "delta" } else { "parameters" };
    let stages = vec![
        ("pilot".to_string(), 1),
        (payload_name.to_string(), sent),
        ("padding".to_string(), avail - sent),
    ];
    let point = rd_point(id, channel, budget, &reconstruction, signal, 0.0, false)?;
    Ok(TransmissionOutcome { point, reconstruction, stages })
}

fn run_esc(
    id: &'static str,
    model: &EscModel<Scalar>,
    adapt: Option<&AdaptConfig>,
    signal: &Signal,
    channel: &ChannelConfig,
    budget: usize,
) -> Result<TransmissionOutcome> {
    let m = model.latent_dim();

    // Decoder-side adaptation happens before any payload travels; the
    // receiver applies the same sparse update to its synthesis copy.
    let (rx_model, update_bits) = match adapt {
        None => (model.clone(), 0.0),
        Some(cfg) => {
            let outcome = online_adapt_decoder(model, signal, cfg)?;
            let synthesis = outcome.update.apply(&model.synthesis)?;
            let rx = EscModel::new(
                model.analysis.clone(),
                synthesis,
                model.prior.clone(),
                model.patch(),
                model.channels(),
            )?;
            (rx, outcome.overhead_bits)
        }
    };

    let (latents, layout) = analysis_transform(model, signal)?;
    let patches = latents.len();
    let alloc_bits = patches as f64 * count_bits(m);
    let overhead_bits = alloc_bits + update_bits;
    let si_uses = side_info_uses(overhead_bits, channel.snr_db);
    if budget < si_uses + 1 {
        return failed_outcome(id, signal, channel, 0, Vec::new(), overhead_bits);
    }

    let capacity = patches * m;
    let payload_budget = (budget - si_uses - 1).min(capacity);
    let padding = budget - si_uses - 1 - payload_budget;

    let entropies = per_patch_entropy(model, &latents)?;
    let alloc = rate_allocate(&entropies, payload_budget, m)?;
    let order = dim_priority(&model.prior);

    let mut payload = Vec::with_capacity(payload_budget);
    for (z, &uses) in latents.iter().zip(alloc.uses()) {
        for &d in &order[..uses] {
            payload.push(z[d] as f64);
        }
    }
    let received = analog_wire(&payload, channel)?;

    // Dimensions that did not travel read as the prior mean.
    let mu = model.prior.mu();
    let mut rx_latents = Vec::with_capacity(patches);
    let mut at = 0;
    for &uses in alloc.uses() {
        let mut z = mu.to_vec();
        for &d in &order[..uses] {
            z[d] = received[at] as Scalar;
            at += 1;
        }
        rx_latents.push(z);
    }
    let reconstruction =
        synthesis_transform(&rx_model, &rx_latents, &layout, signal.lo(), signal.hi())?;

    let stages = vec![
        ("side-info".to_string(), si_uses),
        ("pilot".to_string(), 1),
        ("latents".to_string(), payload_budget),
        ("padding".to_string(), padding),
    ];
    let point = rd_point(id, channel, budget, &reconstruction, signal, overhead_bits, false)?;
    Ok(TransmissionOutcome { point, reconstruction, stages })
}

fn run_hsc(
    model: &FieldModel<Scalar>,
    grids: &GridSet,
    prior: &Prior,
    signal: &Signal,
    channel: &ChannelConfig,
    budget: usize,
) -> Result<TransmissionOutcome> {
    // The per-instance decoder, input encoding, and prior travel digitally.
    let mut c = Container::new();
    c.add("decoder", encode_mlp(model.decoder(), 0))?;
    c.add("encoding", encode_encoding(model.encoding())?)?;
    c.add("prior", encode_prior(prior))?;
    let model_bits = (c.encode().len() * 8) as f64;
    let si_uses = side_info_uses(model_bits, channel.snr_db);
    if budget < si_uses + 1 {
        return failed_outcome("hsc-fieldgrid", signal, channel, 0, Vec::new(), model_bits);
    }

    // Whole grid levels ride the analog payload coarse-first; a level is
    // only usable once every one of its symbols has arrived.
    let avail = budget - si_uses - 1;
    let mut stages = vec![("model".to_string(), si_uses), ("pilot".to_string(), 1)];
    let mut payload = Vec::new();
    let mut lods = 0;
    let mut used = 0;
    for level in grids.levels() {
        let len = level.features().len();
        if used + len > avail {
            break;
        }
        payload.extend(level.features().iter().map(|v| *v as f64));
        stages.push((format!("level-{lods}"), len));
        used += len;
        lods += 1;
    }
    let received = analog_wire(&payload, channel)?;

    let level_sizes: Vec<Vec<usize>> =
        grids.levels().iter().map(|l| l.sizes().to_vec()).collect();
    let mut rx = GridSet::zeros(&level_sizes, grids.feature_dim())?;
    let mut at = 0;
    for level in rx.levels_mut().iter_mut().take(lods) {
        for f in level.features_mut() {
            *f = received[at] as Scalar;
            at += 1;
        }
    }
    let reconstruction =
        progressive_reconstruct(model, &rx, lods, signal.shape(), signal.lo(), signal.hi())?;

    stages.push(("padding".to_string(), avail - used));
    let point =
        rd_point("hsc-fieldgrid", channel, budget, &reconstruction, signal, model_bits, false)?;
    Ok(TransmissionOutcome { point, reconstruction, stages })
}

fn run_digital(
    bits_per_sample: u32,
    signal: &Signal,
    channel: &ChannelConfig,
    budget: usize,
) -> Result<TransmissionOutcome> {
    let payload_bits = signal.len() as f64 * bits_per_sample as f64;
    let link = digital_link(payload_bits, budget, channel.snr_db)?;
    let stages = vec![("payload".to_string(), budget)];
    if !link.delivered {
        return failed_outcome("digital-baseline", signal, channel, budget, stages, 0.0);
    }
    let reconstruction = quantize_signal(signal, bits_per_sample);
    let point =
        rd_point("digital-baseline", channel, budget, &reconstruction, signal, 0.0, false)?;
    Ok(TransmissionOutcome { point, reconstruction, stages })
}

/// Uniform scalar quantization over the declared range.
fn quantize_signal(signal: &Signal, bits: u32) -> Signal {
    let levels = (1u32 << bits) as f64 - 1.0;
    let lo = signal.lo();
    let span = signal.hi() - lo;
    let values = signal
        .values()
        .iter()
        .map(|v| {
            let t = (((*v as f64 - lo) / span) * levels).round().clamp(0.0, levels);
            (lo + t * span / levels) as Scalar
        })
        .collect();
    signal.with_values(values).expect("length preserved")
}

// --- model builders -----------------------------------------------------------

const ENCODER_SEED_SALT: u64 = 0x5eed_0001;

pub fn inr_encoder(cfg: &InrCfg, input_dim: usize, seed: u64) -> Result<Encoder> {
    match cfg.encoding.as_str() {
        "none" => Ok(Encoding::none(input_dim)?),
        "fourier" => Ok(Encoding::fourier(
            input_dim,
            cfg.frequencies,
            cfg.sigma,
            seed.wrapping_add(ENCODER_SEED_SALT),
        )?),
        other => bail!("unknown encoding {other:?}; expected none or fourier"),
    }
}

pub struct IscFit {
    pub params: Model,
    pub enc: Encoder,
    pub report: FitReport<Scalar>,
}

pub fn fit_isc(cfg: &InrCfg, signal: &Signal, seed: u64) -> Result<IscFit> {
    let enc = inr_encoder(cfg, signal.shape().len(), seed)?;
    let mut dims = vec![enc.encoded_dim()];
    dims.extend(&cfg.hidden);
    dims.push(signal.channels());
    let start = siren_init(&dims, cfg.omega0, seed)?;
    let fit = FitConfig {
        steps: cfg.steps,
        lr: cfg.lr,
        batch: cfg.batch,
        target_mse: None,
        record_every: cfg.steps.max(1),
        seed,
    };
    let report = fit_inr(start, &enc, signal, &fit)?;
    Ok(IscFit { params: report.params.clone(), enc, report })
}

pub fn train_esc_model(cfg: &EscCfg, signals: &[Signal], seed: u64) -> Result<EscModel<Scalar>> {
    let train = EscTrainConfig {
        patch: cfg.patch,
        latent_dim: cfg.latent_dim,
        hidden: cfg.hidden,
        snr_db: cfg.train_snr_db,
        rate_lambda: cfg.rate_lambda,
        epochs: cfg.epochs,
        lr: cfg.lr,
        delta: cfg.delta,
        prior_family: PriorFamily::Laplace,
        seed,
    };
    Ok(train_esc(signals, &train)?.0)
}

pub struct FieldFit {
    pub model: FieldModel<Scalar>,
    pub grids: GridSet,
    pub prior: Prior,
    pub report: AutoDecodeReport,
}

/// Auto-decodes a grid-conditioned field to one signal; the positional
/// encoding settings are shared with the INR section.
pub fn fit_field(cfg: &FieldCfg, inr: &InrCfg, signal: &Signal, seed: u64) -> Result<FieldFit> {
    let dim = signal.shape().len();
    if cfg.levels.is_empty() {
        bail!("field needs at least one grid level");
    }
    for sizes in &cfg.levels {
        if sizes.len() != dim {
            bail!("grid level {sizes:?} does not match a {dim}-d signal");
        }
    }
    let enc = inr_encoder(inr, dim, seed)?;
    let latent = cfg.features * cfg.levels.len();
    let dims = vec![enc.encoded_dim() + latent, cfg.hidden, cfg.hidden, signal.channels()];
    let decoder = siren_init(&dims, inr.omega0, seed)?;
    let mut model = FieldModel::new(decoder, enc, Conditioning::Local, latent)?;
    let mut grids = GridSet::randomized(&cfg.levels, cfg.features, 0.1, seed.wrapping_add(1))?;
    let mut prior = Prior::new(PriorFamily::Laplace, cfg.levels.len(), cfg.delta)?;
    let mut ad = AutoDecodeConfig::new(cfg.steps, cfg.lr);
    ad.rate_lambda = cfg.rate_lambda;
    ad.level_dropout = true;
    ad.seed = seed;
    ad.record_every = cfg.steps.max(1);
    let report = auto_decode_fit(&mut model, &mut grids, &mut prior, signal, &ad)?;
    Ok(FieldFit { model, grids, prior, report })
}

fn meta_algorithm(name: &str) -> Result<MetaAlgorithm> {
    match name {
        "first-order-maml" => Ok(MetaAlgorithm::FirstOrderMaml),
        "reptile" => Ok(MetaAlgorithm::Reptile),
        other => bail!("unknown meta algorithm {other:?}"),
    }
}

/// Meta-trains an image-family initialization for the delta-transmission
/// scheme. The family is drawn from the configured signal generator at
/// seeds far from the evaluation set.
pub fn meta_image_init(cfg: &Config, seed: u64) -> Result<(Model, Encoder, Vec<f64>)> {
    let mut family = cfg.signal.clone();
    family.seed = cfg.signal.seed.wrapping_add(100_000);
    family.count = cfg.meta.tasks;
    let tasks = crate::synth::load_signals(&family)?;

    let enc = inr_encoder(&cfg.inr, tasks[0].shape().len(), seed)?;
    let mut dims = vec![enc.encoded_dim()];
    dims.extend(&cfg.inr.hidden);
    dims.push(tasks[0].channels());
    let start = siren_init(&dims, cfg.inr.omega0, seed)?;
    let mc = MetaConfig {
        algorithm: meta_algorithm(&cfg.meta.algorithm)?,
        inner_steps: cfg.meta.inner_steps,
        inner_lr: cfg.meta.inner_lr,
        outer_lr: cfg.meta.outer_lr,
        task_batch: cfg.meta.task_batch,
        outer_iters: cfg.meta.outer_iters,
        seed,
    };
    let (init, curve) = meta_train(start, &enc, &tasks, &mc)?;
    Ok((init, enc, curve))
}

pub fn adapt_config(cfg: &AdaptCfg) -> AdaptConfig {
    AdaptConfig { steps: cfg.steps, lr: cfg.lr, delta_u: cfg.delta_u, rd_lambda: cfg.rd_lambda }
}

/// Builds the configured scheme for one signal of the set. ESC transforms
/// train on the whole set; INR and field models fit the indexed signal.
pub fn build_scheme(cfg: &Config, signals: &[Signal], idx: usize) -> Result<Scheme> {
    let seed = cfg.experiment.seed;
    let truncation = TruncationOrder::parse(&cfg.experiment.truncation)?;
    match cfg.experiment.scheme.as_str() {
        "isc-analog" => {
            let f = fit_isc(&cfg.inr, &signals[idx], seed)?;
            Ok(Scheme::IscAnalog { params: f.params, enc: f.enc, truncation })
        }
        "isc-meta" => {
            let (init, enc, _) = meta_image_init(cfg, seed)?;
            Ok(Scheme::IscMeta {
                init,
                enc,
                adapt_steps: cfg.meta.adapt_steps,
                adapt_lr: cfg.meta.inner_lr,
                truncation,
            })
        }
        "esc-analog" => Ok(Scheme::EscAnalog { model: train_esc_model(&cfg.esc, signals, seed)? }),
        "esc-adaptive" => Ok(Scheme::EscAdaptive {
            model: train_esc_model(&cfg.esc, signals, seed)?,
            adapt: adapt_config(&cfg.adapt),
        }),
        "hsc-fieldgrid" => {
            let f = fit_field(&cfg.field, &cfg.inr, &signals[idx], seed)?;
            Ok(Scheme::HscFieldGrid { model: f.model, grids: f.grids, prior: f.prior })
        }
        "digital-baseline" => {
            Ok(Scheme::DigitalBaseline { bits_per_sample: cfg.digital.bits_per_sample })
        }
        other => bail!("unknown scheme {other:?}"),
    }
}

/// The channel for one sweep cell.
pub fn channel_config(channel: &str, block_len: usize, snr_db: f64, seed: u64) -> ChannelConfig {
    match channel {
        "rayleigh" => ChannelConfig::rayleigh(snr_db, block_len, seed),
        _ => ChannelConfig::awgn(snr_db, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{blobs_image, stripes_image};
    use semcast_core::signal::SignalTensor;

    fn tiny_inr() -> (Model, Encoder) {
        let enc = Encoding::none(2).unwrap();
        let params = siren_init(&[2, 8, 1], 30.0, 5).unwrap();
        (params, enc)
    }

    fn tiny_esc(signal: &Signal) -> EscModel<Scalar> {
        let mut cfg = EscTrainConfig::new(2, 3);
        cfg.hidden = 8;
        cfg.epochs = 20;
        cfg.seed = 9;
        train_esc(std::slice::from_ref(signal), &cfg).unwrap().0
    }

    #[test]
    fn priority_order_walks_layers_both_ways() {
        let params = siren_init(&[2, 3, 1], 30.0, 0).unwrap();
        // Layer 0 holds 2*3+3 = 9 params, layer 1 holds 3*1+1 = 4.
        let early = priority_indices(&params, TruncationOrder::EarlierFirst);
        let late = priority_indices(&params, TruncationOrder::LaterFirst);
        assert_eq!(early, (0..13).collect::<Vec<_>>());
        assert_eq!(late[..4], [9, 10, 11, 12]);
        assert_eq!(late[4..], (0..9).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn noiseless_full_budget_isc_is_bit_exact() {
        let (params, enc) = tiny_inr();
        let signal = blobs_image(6, 6, 1).unwrap();
        let scheme = Scheme::IscAnalog {
            params: params.clone(),
            enc: enc.clone(),
            truncation: TruncationOrder::EarlierFirst,
        };
        let channel = ChannelConfig::awgn(f64::INFINITY, 0);
        let budget = params.param_count() + 1;
        let out = run_transmission(&scheme, &signal, &channel, budget).unwrap();
        let direct = sample_inr(&params, &enc, signal.shape(), 0.0, 1.0).unwrap();
        let exact = out
            .reconstruction
            .values()
            .iter()
            .zip(direct.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(exact, "noiseless parameter round trip must be bitwise");
        assert!(!out.point.failed);
        assert_eq!(out.point.n, budget);
        assert_eq!(out.stage_total(), budget);
    }

    #[test]
    fn zero_budget_fails_with_midrange_reconstruction() {
        let (params, enc) = tiny_inr();
        let signal = blobs_image(5, 5, 2).unwrap();
        let scheme = Scheme::IscAnalog { params, enc, truncation: TruncationOrder::EarlierFirst };
        let out =
            run_transmission(&scheme, &signal, &ChannelConfig::awgn(10.0, 0), 0).unwrap();
        assert!(out.point.failed);
        assert_eq!(out.point.n, 0);
        assert_eq!(out.point.ratio, 0.0);
        assert_eq!(out.reconstruction.values(), signal.failure_fill().values());
        assert!(out.point.mse.is_finite());
    }

    #[test]
    fn truncation_keeps_the_prioritized_layer() {
        let (params, enc) = tiny_inr();
        let signal = blobs_image(4, 4, 3).unwrap();
        let channel = ChannelConfig::awgn(f64::INFINITY, 0);
        // Layer 0 holds 2*8+8 = 24 params; grant exactly that many symbols.
        let budget = 24 + 1;
        let flat = params.flatten();

        let early = Scheme::IscAnalog {
            params: params.clone(),
            enc: enc.clone(),
            truncation: TruncationOrder::EarlierFirst,
        };
        let out = run_transmission(&early, &signal, &channel, budget).unwrap();
        assert_eq!(out.stages[1], ("parameters".to_string(), 24));

        let late = Scheme::IscAnalog { params, enc, truncation: TruncationOrder::LaterFirst };
        let out_late = run_transmission(&late, &signal, &channel, budget).unwrap();
        // Later-first fills the 9 final-layer slots first, then part of
        // layer 0; the two receivers disagree exactly on the tail slots.
        assert_eq!(out_late.stages[1], ("parameters".to_string(), 24));
        assert_ne!(out.reconstruction.values(), out_late.reconstruction.values());
        let _ = flat;
    }

    #[test]
    fn meta_delta_of_zero_steps_reproduces_the_shared_init() {
        let (init, enc) = tiny_inr();
        let signal = blobs_image(5, 5, 4).unwrap();
        let scheme = Scheme::IscMeta {
            init: init.clone(),
            enc: enc.clone(),
            adapt_steps: 0,
            adapt_lr: 1e-2,
            truncation: TruncationOrder::EarlierFirst,
        };
        let channel = ChannelConfig::awgn(f64::INFINITY, 3);
        let budget = init.param_count() + 1;
        let out = run_transmission(&scheme, &signal, &channel, budget).unwrap();
        let direct = sample_inr(&init, &enc, signal.shape(), 0.0, 1.0).unwrap();
        assert_eq!(out.reconstruction.values(), direct.values());
        assert_eq!(out.stages[1].0, "delta");
    }

    #[test]
    fn noiseless_full_budget_esc_matches_clean_codec_output() {
        let signal = blobs_image(6, 6, 7).unwrap();
        let model = tiny_esc(&signal);
        let (latents, layout) = analysis_transform(&model, &signal).unwrap();
        let clean = synthesis_transform(&model, &latents, &layout, 0.0, 1.0).unwrap();

        let scheme = Scheme::EscAnalog { model };
        let channel = ChannelConfig::awgn(f64::INFINITY, 0);
        // 9 patches x 3 dims fit entirely; side info is free at infinite SNR.
        let out = run_transmission(&scheme, &signal, &channel, 9 * 3 + 1).unwrap();
        let exact = out
            .reconstruction
            .values()
            .iter()
            .zip(clean.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(exact, "full-budget latents must arrive bitwise over a clean channel");
        assert_eq!(out.stage_total(), out.point.n);
    }

    #[test]
    fn esc_starved_of_payload_decodes_prior_means() {
        let signal = blobs_image(6, 6, 7).unwrap();
        let model = tiny_esc(&signal);
        let mu = model.prior.mu().to_vec();
        let (latents, layout) = analysis_transform(&model, &signal).unwrap();
        let mean_latents = vec![mu; latents.len()];
        let mean_recon =
            synthesis_transform(&model, &mean_latents, &layout, 0.0, 1.0).unwrap();

        let scheme = Scheme::EscAnalog { model };
        let out = run_transmission(
            &scheme,
            &signal,
            &ChannelConfig::awgn(f64::INFINITY, 0),
            1,
        )
        .unwrap();
        assert_eq!(out.reconstruction.values(), mean_recon.values());
        assert!(!out.point.failed);
    }

    #[test]
    fn esc_fails_when_side_info_cannot_fit() {
        let signal = blobs_image(6, 6, 7).unwrap();
        let model = tiny_esc(&signal);
        let scheme = Scheme::EscAnalog { model };
        // At 0 dB each use carries half a bit; 9 patches x 2 bits = 18 bits
        // of allocation side info need 36 uses.
        let out =
            run_transmission(&scheme, &signal, &ChannelConfig::awgn(0.0, 0), 10).unwrap();
        assert!(out.point.failed);
        assert_eq!(out.point.n, 0);
        assert!(out.point.overhead_bits > 0.0);
    }

    #[test]
    fn adaptive_esc_counts_update_bits_and_still_decodes() {
        let train = blobs_image(6, 6, 7).unwrap();
        let model = tiny_esc(&train);
        let target = stripes_image(6, 6, 3).unwrap();
        let base = Scheme::EscAnalog { model: model.clone() };
        let adaptive = Scheme::EscAdaptive {
            model,
            adapt: AdaptConfig { steps: 25, lr: 1e-3, delta_u: 1e-4, rd_lambda: 0.0 },
        };
        let channel = ChannelConfig::awgn(f64::INFINITY, 0);
        let out_base = run_transmission(&base, &target, &channel, 28).unwrap();
        let out = run_transmission(&adaptive, &target, &channel, 28).unwrap();
        assert!(out.point.overhead_bits > out_base.point.overhead_bits);
        assert!(out.point.mse <= out_base.point.mse + 1e-9);
        assert_eq!(out.stage_total(), out.point.n);
    }

    fn tiny_field(signal: &Signal) -> (FieldModel<Scalar>, GridSet, Prior) {
        let field = FieldCfg {
            levels: vec![vec![2, 2], vec![3, 3]],
            features: 1,
            hidden: 8,
            steps: 30,
            lr: 2e-3,
            rate_lambda: 0.0,
            delta: 0.02,
        };
        let inr = InrCfg { hidden: vec![8], encoding: "none".to_string(), ..Default::default() };
        let f = fit_field(&field, &inr, signal, 3).unwrap();
        (f.model, f.grids, f.prior)
    }

    #[test]
    fn hsc_sends_whole_levels_and_reports_model_bits() {
        let signal = blobs_image(5, 5, 2).unwrap();
        let (model, grids, prior) = tiny_field(&signal);
        let scheme = Scheme::HscFieldGrid { model: model.clone(), grids: grids.clone(), prior };
        let channel = ChannelConfig::awgn(f64::INFINITY, 0);

        // Budget for the pilot plus only the coarse 2x2 level.
        let out = run_transmission(&scheme, &signal, &channel, 1 + 4 + 3).unwrap();
        let names: Vec<&str> = out.stages.iter().map(|s| s.0.as_str()).collect();
        assert_eq!(names, ["model", "pilot", "level-0", "padding"]);
        assert!(out.point.overhead_bits > 0.0);

        // Budget for everything: matches the model's own full-depth output.
        let full = run_transmission(&scheme, &signal, &channel, 1 + 4 + 9).unwrap();
        let direct = progressive_reconstruct(&model, &grids, 2, signal.shape(), 0.0, 1.0).unwrap();
        assert_eq!(full.reconstruction.values(), direct.values());
        assert!(full.point.mse <= out.point.mse + 1e-9);
    }

    #[test]
    fn digital_link_fails_below_threshold_and_quantizes_above() {
        let signal = blobs_image(4, 4, 1).unwrap();
        let scheme = Scheme::DigitalBaseline { bits_per_sample: 8 };
        // 16 samples x 8 bits = 128 bits; at 10 dB one use carries 1.73 bits.
        let enough = run_transmission(
            &scheme,
            &signal,
            &ChannelConfig::awgn(10.0, 0),
            80,
        )
        .unwrap();
        assert!(!enough.point.failed);
        assert!(enough.point.mse < 1e-4, "8-bit quantization error is tiny");

        let starved =
            run_transmission(&scheme, &signal, &ChannelConfig::awgn(10.0, 0), 70).unwrap();
        assert!(starved.point.failed);
        assert_eq!(starved.point.n, 70);
        assert_eq!(starved.reconstruction.values(), signal.failure_fill().values());
    }

    #[test]
    fn every_scheme_accounts_for_each_symbol() {
        let signal = blobs_image(6, 6, 11).unwrap();
        let (params, enc) = tiny_inr();
        let esc_model = tiny_esc(&signal);
        let (fm, fg, fp) = tiny_field(&signal);
        let schemes = vec![
            Scheme::IscAnalog {
                params: params.clone(),
                enc: enc.clone(),
                truncation: TruncationOrder::EarlierFirst,
            },
            Scheme::IscMeta {
                init: params,
                enc,
                adapt_steps: 2,
                adapt_lr: 1e-3,
                truncation: TruncationOrder::LaterFirst,
            },
            Scheme::EscAnalog { model: esc_model.clone() },
            Scheme::EscAdaptive {
                model: esc_model,
                adapt: AdaptConfig { steps: 3, lr: 1e-3, delta_u: 1e-3, rd_lambda: 0.0 },
            },
            Scheme::HscFieldGrid { model: fm, grids: fg, prior: fp },
            Scheme::DigitalBaseline { bits_per_sample: 4 },
        ];
        for scheme in &schemes {
            for budget in [0usize, 1, 7, 40, 400] {
                for snr in [f64::INFINITY, 12.0] {
                    let channel = ChannelConfig::awgn(snr, 2);
                    let out = run_transmission(scheme, &signal, &channel, budget)
                        .unwrap_or_else(|e| panic!("{} at {budget}: {e}", scheme.id()));
                    assert_eq!(
                        out.stage_total(),
                        out.point.n,
                        "stage log must sum to n for {} at budget {budget}",
                        scheme.id()
                    );
                    let expect =
                        bandwidth_report(out.point.n, out.point.k).unwrap().ratio;
                    assert_eq!(out.point.ratio, expect);
                    assert!(out.point.mse.is_finite());
                    assert_eq!(out.point.seed, 2);
                }
            }
        }
    }

    #[test]
    fn noisy_runs_are_seed_deterministic() {
        let signal = blobs_image(6, 6, 1).unwrap();
        let (params, enc) = tiny_inr();
        let scheme = Scheme::IscAnalog { params, enc, truncation: TruncationOrder::EarlierFirst };
        let a = run_transmission(&scheme, &signal, &ChannelConfig::awgn(8.0, 42), 30).unwrap();
        let b = run_transmission(&scheme, &signal, &ChannelConfig::awgn(8.0, 42), 30).unwrap();
        let c = run_transmission(&scheme, &signal, &ChannelConfig::awgn(8.0, 43), 30).unwrap();
        assert_eq!(a.reconstruction.values(), b.reconstruction.values());
        assert_ne!(a.reconstruction.values(), c.reconstruction.values());
        assert_eq!(a.point, b.point);
    }

    #[test]
    fn csv_row_has_the_fixed_column_count() {
        let signal = SignalTensor::constant(vec![4, 4], 1, 0.0, 1.0, 0.25).unwrap();
        let scheme = Scheme::DigitalBaseline { bits_per_sample: 8 };
        let out =
            run_transmission(&scheme, &signal, &ChannelConfig::awgn(20.0, 1), 100).unwrap();
        let row = out.point.csv_row();
        assert_eq!(row.split(',').count(), RDPoint::CSV_HEADER.split(',').count());
        assert!(row.starts_with("digital-baseline,20,"));
    }
}
