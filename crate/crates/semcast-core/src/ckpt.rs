//! Binary checkpoints: little-endian formats for MLPs, positional
//! encodings, priors, and quantized feature grids, plus a named-blob
//! container that bundles them into single model files.
//!
//! Network weights are stored as f32. Grid features are stored as
//! quantized integers at the prior's bin width, so a saved grid file holds
//! exactly what a receiver would decode.

use crate::encoding::{Encoding, EncodingMode};
use crate::error::{CoreError, Result};
use crate::esc::EscModel;
use crate::field::{Conditioning, FieldModel};
use crate::grid::{FeatureGridSet, GridLevel};
use crate::nn::{Activation, Layer, ModelParams};
use crate::prior::{dequantize, quantize, LatentPrior, PriorFamily};
use crate::scalar::Real;

const MLP_MAGIC: &[u8; 8] = b"SEMCAST1";
const GRID_MAGIC: &[u8; 8] = b"SEMGRID1";
const ENC_MAGIC: &[u8; 8] = b"SEMENCD1";
const PRIOR_MAGIC: &[u8; 8] = b"SEMPRIO1";
const TOC_MAGIC: &[u8; 8] = b"SEMCTOC1";

/// Marks a checkpointed MLP as a meta-learned initialization rather than a
/// fitted model.
pub const FLAG_META_INIT: u8 = 1;

// --- byte cursors -----------------------------------------------------------

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::format("checkpoint truncated"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        if self.take(8)? != expected {
            return Err(CoreError::format(format!(
                "bad magic, expected {:?}",
                std::str::from_utf8(expected).unwrap()
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(CoreError::format("trailing bytes after checkpoint"));
        }
        Ok(())
    }
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_i32(buf: &mut Vec<u8>, v: i32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f32(buf: &mut Vec<u8>, v: f32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

// --- MLP --------------------------------------------------------------------

pub fn encode_mlp<T: Real>(params: &ModelParams<T>, flags: u8) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MLP_MAGIC);
    buf.push(flags);
    push_u32(&mut buf, params.layers().len() as u32);
    for layer in params.layers() {
        push_u32(&mut buf, layer.in_dim() as u32);
        push_u32(&mut buf, layer.out_dim() as u32);
        let (tag, omega) = match layer.activation {
            Activation::Identity => (0u8, 0.0f32),
            Activation::Relu => (1, 0.0),
            Activation::Sine { omega } => (2, omega as f32),
        };
        buf.push(tag);
        push_f32(&mut buf, omega);
    }
    for layer in params.layers() {
        for w in &layer.weights {
            push_f32(&mut buf, w.f64() as f32);
        }
        for b in &layer.bias {
            push_f32(&mut buf, b.f64() as f32);
        }
    }
    buf
}

pub fn decode_mlp<T: Real>(bytes: &[u8]) -> Result<(ModelParams<T>, u8)> {
    let mut r = Reader::new(bytes);
    r.magic(MLP_MAGIC)?;
    let flags = r.u8()?;
    let layer_count = r.u32()? as usize;
    if layer_count == 0 || layer_count > 1024 {
        return Err(CoreError::format(format!("implausible layer count {layer_count}")));
    }
    let mut headers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let tag = r.u8()?;
        let omega = r.f32()?;
        let activation = match tag {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Sine { omega: omega as f64 },
            other => return Err(CoreError::format(format!("unknown activation tag {other}"))),
        };
        headers.push((in_dim, out_dim, activation));
    }
    let mut layers = Vec::with_capacity(layer_count);
    for (in_dim, out_dim, activation) in headers {
        let mut weights = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim * out_dim {
            weights.push(T::from64(r.f32()? as f64));
        }
        let mut bias = Vec::with_capacity(out_dim);
        for _ in 0..out_dim {
            bias.push(T::from64(r.f32()? as f64));
        }
        layers.push(Layer::new(in_dim, out_dim, weights, bias, activation)?);
    }
    r.done()?;
    Ok((ModelParams::new(layers)?, flags))
}

// --- positional encoding ------------------------------------------------------

/// Encodings are stored as their generating parameters and rebuilt from the
/// seed, so hand-built matrices cannot be checkpointed.
pub fn encode_encoding<T: Real>(enc: &Encoding<T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(ENC_MAGIC);
    match enc.mode() {
        EncodingMode::None => {
            buf.push(0);
            push_u32(&mut buf, enc.input_dim() as u32);
            push_u32(&mut buf, 0);
            push_f64(&mut buf, 0.0);
            push_u64(&mut buf, 0);
        }
        EncodingMode::Fourier => {
            if !(enc.sigma() > 0.0) {
                return Err(CoreError::config(
                    "encoding was built from an explicit matrix and has no seed to store",
                ));
            }
            buf.push(1);
            push_u32(&mut buf, enc.input_dim() as u32);
            push_u32(&mut buf, enc.freq_count() as u32);
            push_f64(&mut buf, enc.sigma());
            push_u64(&mut buf, enc.seed());
        }
    }
    Ok(buf)
}

pub fn decode_encoding<T: Real>(bytes: &[u8]) -> Result<Encoding<T>> {
    let mut r = Reader::new(bytes);
    r.magic(ENC_MAGIC)?;
    let mode = r.u8()?;
    let input_dim = r.u32()? as usize;
    let freq_count = r.u32()? as usize;
    let sigma = r.f64()?;
    let seed = r.u64()?;
    r.done()?;
    match mode {
        0 => Encoding::none(input_dim),
        1 => Encoding::fourier(input_dim, freq_count, sigma, seed),
        other => Err(CoreError::format(format!("unknown encoding mode {other}"))),
    }
}

// --- prior --------------------------------------------------------------------

pub fn encode_prior<T: Real>(prior: &LatentPrior<T>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PRIOR_MAGIC);
    buf.push(match prior.family() {
        PriorFamily::Gaussian => 0,
        PriorFamily::Laplace => 1,
    });
    push_u32(&mut buf, prior.components() as u32);
    push_f64(&mut buf, prior.delta());
    for m in prior.mu() {
        push_f64(&mut buf, m.f64());
    }
    for s in prior.log_scale() {
        push_f64(&mut buf, s.f64());
    }
    buf
}

pub fn decode_prior<T: Real>(bytes: &[u8]) -> Result<LatentPrior<T>> {
    let mut r = Reader::new(bytes);
    r.magic(PRIOR_MAGIC)?;
    let family = match r.u8()? {
        0 => PriorFamily::Gaussian,
        1 => PriorFamily::Laplace,
        other => return Err(CoreError::format(format!("unknown prior family {other}"))),
    };
    let components = r.u32()? as usize;
    let delta = r.f64()?;
    let mut mu = Vec::with_capacity(components);
    for _ in 0..components {
        mu.push(T::from64(r.f64()?));
    }
    let mut log_scale = Vec::with_capacity(components);
    for _ in 0..components {
        log_scale.push(T::from64(r.f64()?));
    }
    r.done()?;
    LatentPrior::with_params(family, mu, log_scale, delta)
}

// --- feature grids --------------------------------------------------------------

/// Serializes grids with their per-level prior, quantizing every feature at
/// the prior's bin width. The byte order (levels coarse to fine, row-major
/// vertices, features interleaved) is also the transmission order.
pub fn encode_grids<T: Real>(
    grids: &FeatureGridSet<T>,
    prior: &LatentPrior<T>,
) -> Result<Vec<u8>> {
    if prior.components() != grids.level_count() {
        return Err(CoreError::shape(format!(
            "prior has {} components for {} grid levels",
            prior.components(),
            grids.level_count()
        )));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(GRID_MAGIC);
    buf.push(grids.dim() as u8);
    buf.push(grids.level_count() as u8);
    push_u32(&mut buf, grids.feature_dim() as u32);
    push_f64(&mut buf, prior.delta());
    buf.push(match prior.family() {
        PriorFamily::Gaussian => 0,
        PriorFamily::Laplace => 1,
    });
    for level in grids.levels() {
        for s in level.sizes() {
            push_u32(&mut buf, *s as u32);
        }
    }
    for l in 0..grids.level_count() {
        push_f64(&mut buf, prior.mu()[l].f64());
        push_f64(&mut buf, prior.log_scale()[l].f64());
    }
    for level in grids.levels() {
        for v in level.features() {
            let bins = quantize(v.f64(), prior.delta())?;
            let bins32 = i32::try_from(bins)
                .map_err(|_| CoreError::format("quantized feature exceeds i32 range"))?;
            push_i32(&mut buf, bins32);
        }
    }
    Ok(buf)
}

pub fn decode_grids<T: Real>(bytes: &[u8]) -> Result<(FeatureGridSet<T>, LatentPrior<T>)> {
    let mut r = Reader::new(bytes);
    r.magic(GRID_MAGIC)?;
    let dim = r.u8()? as usize;
    let level_count = r.u8()? as usize;
    let feature_dim = r.u32()? as usize;
    let delta = r.f64()?;
    let family = match r.u8()? {
        0 => PriorFamily::Gaussian,
        1 => PriorFamily::Laplace,
        other => return Err(CoreError::format(format!("unknown prior family {other}"))),
    };
    if level_count == 0 {
        return Err(CoreError::format("grid checkpoint has no levels"));
    }
    let mut sizes = Vec::with_capacity(level_count);
    for _ in 0..level_count {
        let mut s = Vec::with_capacity(dim);
        for _ in 0..dim {
            s.push(r.u32()? as usize);
        }
        sizes.push(s);
    }
    let mut mu = Vec::with_capacity(level_count);
    let mut log_scale = Vec::with_capacity(level_count);
    for _ in 0..level_count {
        mu.push(T::from64(r.f64()?));
        log_scale.push(T::from64(r.f64()?));
    }
    let mut levels = Vec::with_capacity(level_count);
    for s in sizes {
        let vertices: usize = s.iter().product();
        let mut features = Vec::with_capacity(vertices * feature_dim);
        for _ in 0..vertices * feature_dim {
            features.push(T::from64(dequantize(r.i32()? as i64, delta)));
        }
        levels.push(GridLevel::new(s, feature_dim, features)?);
    }
    r.done()?;
    let grids = FeatureGridSet::new(levels, feature_dim)?;
    let prior = LatentPrior::with_params(family, mu, log_scale, delta)?;
    Ok((grids, prior))
}

// --- named-blob container ---------------------------------------------------------

/// An ordered set of named byte blobs with a table of contents.
#[derive(Debug, Clone, Default)]
pub struct Container {
    entries: Vec<(String, Vec<u8>)>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn add(&mut self, name: &str, blob: Vec<u8>) -> Result<()> {
        if name.is_empty() || name.len() > 255 || !name.is_ascii() {
            return Err(CoreError::config("blob names must be short ASCII"));
        }
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(CoreError::config(format!("duplicate blob name {name:?}")));
        }
        self.entries.push((name.to_string(), blob));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&[u8]> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_slice())
            .ok_or_else(|| CoreError::format(format!("container has no blob {name:?}")))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut toc_len = 8 + 4;
        for (name, _) in &self.entries {
            toc_len += 1 + name.len() + 8 + 8;
        }
        let mut buf = Vec::new();
        buf.extend_from_slice(TOC_MAGIC);
        push_u32(&mut buf, self.entries.len() as u32);
        let mut offset = toc_len as u64;
        for (name, blob) in &self.entries {
            buf.push(name.len() as u8);
            buf.extend_from_slice(name.as_bytes());
            push_u64(&mut buf, offset);
            push_u64(&mut buf, blob.len() as u64);
            offset += blob.len() as u64;
        }
        for (_, blob) in &self.entries {
            buf.extend_from_slice(blob);
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(TOC_MAGIC)?;
        let count = r.u32()? as usize;
        if count > 255 {
            return Err(CoreError::format(format!("implausible blob count {count}")));
        }
        let mut toc = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u8()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CoreError::format("blob name is not UTF-8"))?
                .to_string();
            let offset = r.u64()? as usize;
            let len = r.u64()? as usize;
            toc.push((name, offset, len));
        }
        let mut container = Container::new();
        for (name, offset, len) in toc {
            if offset + len > bytes.len() || offset < r.pos {
                return Err(CoreError::format(format!("blob {name:?} out of bounds")));
            }
            container.add(&name, bytes[offset..offset + len].to_vec())?;
        }
        Ok(container)
    }
}

// --- bundled model files ------------------------------------------------------------

pub fn save_esc<T: Real>(model: &EscModel<T>) -> Result<Vec<u8>> {
    let mut c = Container::new();
    c.add("analysis", encode_mlp(&model.analysis, 0))?;
    c.add("synthesis", encode_mlp(&model.synthesis, 0))?;
    c.add("prior", encode_prior(&model.prior))?;
    let mut info = Vec::new();
    push_u32(&mut info, model.patch() as u32);
    push_u32(&mut info, model.channels() as u32);
    c.add("info", info)?;
    Ok(c.encode())
}

pub fn load_esc<T: Real>(bytes: &[u8]) -> Result<EscModel<T>> {
    let c = Container::decode(bytes)?;
    let (analysis, _) = decode_mlp(c.get("analysis")?)?;
    let (synthesis, _) = decode_mlp(c.get("synthesis")?)?;
    let prior = decode_prior(c.get("prior")?)?;
    let mut r = Reader::new(c.get("info")?);
    let patch = r.u32()? as usize;
    let channels = r.u32()? as usize;
    r.done()?;
    EscModel::new(analysis, synthesis, prior, patch, channels)
}

/// Saves a grid-conditioned field model: decoder, encoding, and the
/// quantized grids with their per-level prior.
pub fn save_field<T: Real>(
    model: &FieldModel<T>,
    grids: &FeatureGridSet<T>,
    prior: &LatentPrior<T>,
) -> Result<Vec<u8>> {
    if model.conditioning() != Conditioning::Local {
        return Err(CoreError::config("only grid-conditioned field models are checkpointed"));
    }
    let mut c = Container::new();
    c.add("decoder", encode_mlp(model.decoder(), 0))?;
    c.add("encoding", encode_encoding(model.encoding())?)?;
    c.add("grids", encode_grids(grids, prior)?)?;
    Ok(c.encode())
}

pub fn load_field<T: Real>(
    bytes: &[u8],
) -> Result<(FieldModel<T>, FeatureGridSet<T>, LatentPrior<T>)> {
    let c = Container::decode(bytes)?;
    let (decoder, _) = decode_mlp(c.get("decoder")?)?;
    let encoding = decode_encoding(c.get("encoding")?)?;
    let (grids, prior) = decode_grids(c.get("grids")?)?;
    let latent_dim = grids.query_dim();
    let model = FieldModel::new(decoder, encoding, Conditioning::Local, latent_dim)?;
    Ok((model, grids, prior))
}
