//! Deterministic synthetic signals: test images and the shifted-sinusoid
//! task family used for meta-learning experiments.

use anyhow::Result;
use semcast_core::rng::Prng;
use semcast_core::signal::{lattice_coords, SignalTensor};
use semcast_core::Scalar;

/// Soft blobs: a sum of Gaussian bumps with seed-derived centers, widths,
/// and amplitudes, normalized into [0, 1].
pub fn blobs_image(height: usize, width: usize, seed: u64) -> Result<SignalTensor<Scalar>> {
    let mut rng = Prng::seed(seed);
    let count = 4 + rng.index(4);
    let mut bumps = Vec::with_capacity(count);
    for _ in 0..count {
        let cy = rng.uniform_in(-0.8, 0.8);
        let cx = rng.uniform_in(-0.8, 0.8);
        let s = rng.uniform_in(0.1, 0.45);
        let a = rng.uniform_in(0.3, 1.0);
        bumps.push((cy, cx, s, a));
    }
    let mut values = Vec::with_capacity(height * width);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for p in lattice_coords::<f64>(&[height, width]) {
        let mut v = 0.0;
        for (cy, cx, s, a) in &bumps {
            let d2 = (p[0] - cy) * (p[0] - cy) + (p[1] - cx) * (p[1] - cx);
            v += a * (-d2 / (2.0 * s * s)).exp();
        }
        min = min.min(v);
        max = max.max(v);
        values.push(v);
    }
    let span = (max - min).max(1e-12);
    let scaled = values.iter().map(|v| ((v - min) / span) as Scalar).collect();
    Ok(SignalTensor::new(vec![height, width], 1, 0.0, 1.0, scaled)?)
}

/// Oriented sinusoidal stripes with seed-derived angle, frequency, and phase.
pub fn stripes_image(height: usize, width: usize, seed: u64) -> Result<SignalTensor<Scalar>> {
    let mut rng = Prng::seed(seed);
    let angle = rng.uniform_in(0.0, std::f64::consts::PI);
    let freq = rng.uniform_in(1.0, 4.0);
    let phase = rng.uniform_in(0.0, std::f64::consts::TAU);
    let (sin_a, cos_a) = angle.sin_cos();
    let values = lattice_coords::<f64>(&[height, width])
        .iter()
        .map(|p| {
            let t = p[0] * sin_a + p[1] * cos_a;
            (0.5 + 0.5 * (std::f64::consts::PI * freq * t + phase).sin()) as Scalar
        })
        .collect();
    Ok(SignalTensor::new(vec![height, width], 1, 0.0, 1.0, values)?)
}

pub fn constant_image(height: usize, width: usize, value: f64) -> Result<SignalTensor<Scalar>> {
    Ok(SignalTensor::constant(vec![height, width], 1, 0.0, 1.0, value as Scalar)?)
}

/// Blobs overlaid with seed-hashed per-pixel texture, so the signal carries
/// energy at both coarse and fine scales.
pub fn textured_image(
    height: usize,
    width: usize,
    seed: u64,
    texture: f64,
) -> Result<SignalTensor<Scalar>> {
    let base = blobs_image(height, width, seed)?;
    let mut rng = Prng::seed(seed ^ 0xa076_1d64_78bd_642f);
    let values = base
        .values()
        .iter()
        .map(|v| {
            let t = rng.uniform_in(-texture, texture);
            ((*v as f64) * (1.0 - texture) + 0.5 * texture + t * 0.5).clamp(0.0, 1.0) as Scalar
        })
        .collect();
    Ok(base.with_values(values)?)
}

/// One task from the shifted-sinusoid family on a 1-d lattice.
pub fn sinusoid_task(sites: usize, shift: f64) -> Result<SignalTensor<Scalar>> {
    let values = lattice_coords::<f64>(&[sites])
        .iter()
        .map(|x| ((x[0] - shift) * std::f64::consts::PI).sin() as Scalar)
        .collect();
    Ok(SignalTensor::new(vec![sites], 1, -1.0, 1.0, values)?)
}

/// A seed-derived batch of sinusoid tasks with distinct shifts.
pub fn sinusoid_family(sites: usize, count: usize, seed: u64) -> Result<Vec<SignalTensor<Scalar>>> {
    let mut rng = Prng::seed(seed);
    (0..count)
        .map(|_| sinusoid_task(sites, rng.uniform_in(-1.0, 1.0)))
        .collect()
}

/// Materializes the signal set a config describes: `count` seeded variants
/// of the named generator, or a single image loaded from disk.
pub fn load_signals(cfg: &crate::config::SignalCfg) -> Result<Vec<SignalTensor<Scalar>>> {
    if cfg.kind == "image" {
        let path = cfg.path.as_ref().expect("validated: image kind carries a path");
        let img = semcast_core::image::read_image::<Scalar>(std::path::Path::new(path))?;
        return Ok(vec![img]);
    }
    let (h, w) = match cfg.size.as_slice() {
        [h, w] => (*h, *w),
        [n] => (*n, *n),
        _ => unreachable!("validated: size has 1 or 2 axes"),
    };
    (0..cfg.count)
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            match cfg.kind.as_str() {
                "blobs" => blobs_image(h, w, seed),
                "stripes" => stripes_image(h, w, seed),
                "constant" => constant_image(h, w, cfg.value),
                other => anyhow::bail!("unknown signal kind {other:?}"),
            }
        })
        .collect()
}
