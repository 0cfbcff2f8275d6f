//! Simulated transmission: power normalization, AWGN and block-fading
//! channels, an idealized digital link, and bandwidth bookkeeping.
//!
//! Channels assume unit-power input, so run `power_normalize` first; the
//! noise variance is then 10^(-snr_db/10) per real symbol. An infinite
//! `snr_db` is the noiseless sentinel and consumes no randomness.

use crate::error::{CoreError, Result};
use crate::rng::Prng;
use crate::scalar::Real;

// --- power normalization ----------------------------------------------------

/// Symbols scaled to unit mean square, plus what the receiver needs to undo it.
#[derive(Debug, Clone)]
pub struct Normalized<T> {
    pub symbols: Vec<T>,
    /// Factor that was applied; divide by it to denormalize. Zero when the
    /// input was all zeros.
    pub scale: f64,
    /// True when the input carried no energy and was passed through as zeros.
    pub degenerate: bool,
}

pub fn power_normalize<T: Real>(x: &[T]) -> Result<Normalized<T>> {
    if x.is_empty() {
        return Err(CoreError::shape("cannot normalize an empty symbol vector".to_string()));
    }
    let mut energy = 0.0f64;
    for v in x {
        let f = v.f64();
        if !f.is_finite() {
            return Err(CoreError::non_finite("power normalization input"));
        }
        energy += f * f;
    }
    let mean_square = energy / x.len() as f64;
    if mean_square == 0.0 {
        return Ok(Normalized { symbols: vec![T::zero(); x.len()], scale: 0.0, degenerate: true });
    }
    let scale = 1.0 / mean_square.sqrt();
    let s = T::from64(scale);
    Ok(Normalized {
        symbols: x.iter().map(|v| *v * s).collect(),
        scale,
        degenerate: false,
    })
}

/// Undoes `power_normalize` given the recorded scale.
pub fn denormalize<T: Real>(y: &[T], scale: f64) -> Vec<T> {
    if scale == 0.0 {
        return vec![T::zero(); y.len()];
    }
    let inv = T::from64(1.0 / scale);
    y.iter().map(|v| *v * inv).collect()
}

// --- channels ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    Awgn,
    /// Block fading: one gain h = sqrt((g1^2 + g2^2) / 2) per block of
    /// `block_len` symbols, equalized coherently at the receiver.
    Rayleigh { block_len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        ChannelConfig { kind: ChannelKind::Awgn, snr_db, seed }
    }

    pub fn rayleigh(snr_db: f64, block_len: usize, seed: u64) -> Self {
        ChannelConfig { kind: ChannelKind::Rayleigh { block_len }, snr_db, seed }
    }
}

/// Received symbols after equalization, with the per-symbol channel gains
/// the equalizer divided out (all ones for AWGN).
#[derive(Debug, Clone)]
pub struct ChannelOutput<T> {
    pub symbols: Vec<T>,
    pub gains: Vec<f64>,
}

pub fn channel_transmit<T: Real>(x: &[T], cfg: &ChannelConfig) -> Result<ChannelOutput<T>> {
    if x.is_empty() {
        return Err(CoreError::shape("cannot transmit an empty symbol vector".to_string()));
    }
    if cfg.snr_db.is_nan() || cfg.snr_db == f64::NEG_INFINITY {
        return Err(CoreError::config("channel snr must be a number or +inf"));
    }
    let noise_std = if cfg.snr_db.is_infinite() {
        0.0
    } else {
        10f64.powf(-cfg.snr_db / 20.0)
    };
    let mut rng = Prng::seed(cfg.seed);
    match cfg.kind {
        ChannelKind::Awgn => {
            let symbols = if noise_std == 0.0 {
                x.to_vec()
            } else {
                x.iter().map(|v| *v + T::from64(noise_std * rng.normal())).collect()
            };
            Ok(ChannelOutput { symbols, gains: vec![1.0; x.len()] })
        }
        ChannelKind::Rayleigh { block_len } => {
            if block_len == 0 {
                return Err(CoreError::config("fading block length must be positive"));
            }
            let mut symbols = Vec::with_capacity(x.len());
            let mut gains = Vec::with_capacity(x.len());
            for block in x.chunks(block_len) {
                let (g1, g2) = (rng.normal(), rng.normal());
                let h = ((g1 * g1 + g2 * g2) / 2.0).sqrt();
                for v in block {
                    let y = v.f64() * h
                        + if noise_std == 0.0 { 0.0 } else { noise_std * rng.normal() };
                    symbols.push(T::from64(y / h));
                    gains.push(h);
                }
            }
            Ok(ChannelOutput { symbols, gains })
        }
    }
}

// --- digital reference link -------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DigitalOutcome {
    pub delivered: bool,
    pub capacity_bits: f64,
}

/// Idealized digital transmission: the payload arrives intact iff it fits
/// within n times the real-Gaussian channel capacity 0.5 log2(1 + snr).
pub fn digital_link(payload_bits: f64, channel_uses: usize, snr_db: f64) -> Result<DigitalOutcome> {
    if !(payload_bits >= 0.0) {
        return Err(CoreError::config("payload bits must be nonnegative"));
    }
    if snr_db.is_nan() {
        return Err(CoreError::config("link snr must not be NaN"));
    }
    let capacity_bits = if snr_db.is_infinite() && snr_db > 0.0 {
        f64::INFINITY
    } else {
        let snr = 10f64.powf(snr_db / 10.0);
        channel_uses as f64 * 0.5 * (1.0 + snr).log2()
    };
    Ok(DigitalOutcome { delivered: payload_bits <= capacity_bits, capacity_bits })
}

// --- bandwidth bookkeeping ---------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthReport {
    pub channel_uses: usize,
    pub source_scalars: usize,
    pub ratio: f64,
}

/// Channel uses per source scalar.
pub fn bandwidth_report(channel_uses: usize, source_scalars: usize) -> Result<BandwidthReport> {
    if source_scalars == 0 {
        return Err(CoreError::config("source must contain at least one scalar"));
    }
    Ok(BandwidthReport {
        channel_uses,
        source_scalars,
        ratio: channel_uses as f64 / source_scalars as f64,
    })
}

/// Real symbols available in an OFDM allocation: 14 symbols per subcarrier
/// per 1 ms slot.
pub fn ofdm_budget(duration_s: f64, subcarriers: usize) -> Result<usize> {
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        return Err(CoreError::config("duration must be finite and nonnegative"));
    }
    Ok((duration_s * 1000.0 * 14.0 * subcarriers as f64).floor() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_matches_hand_computation() {
        // Mean square of [3, 4] is 12.5, so the scale is 1/sqrt(12.5).
        let n = power_normalize(&[3.0f64, 4.0]).unwrap();
        assert!((n.scale - 1.0 / 12.5f64.sqrt()).abs() < 1e-12);
        assert!((n.symbols[0] - 0.8485281374238570).abs() < 1e-12);
        assert!((n.symbols[1] - 1.1313708498984760).abs() < 1e-12);
        let ms: f64 = n.symbols.iter().map(|v| v * v).sum::<f64>() / 2.0;
        assert!((ms - 1.0).abs() < 1e-12);
        assert!(!n.degenerate);
    }

    #[test]
    fn zero_input_is_flagged_not_divided() {
        let n = power_normalize(&[0.0f32; 5]).unwrap();
        assert!(n.degenerate);
        assert_eq!(n.scale, 0.0);
        assert!(n.symbols.iter().all(|v| *v == 0.0));
        assert!(denormalize(&n.symbols, n.scale).iter().all(|v: &f32| *v == 0.0));
    }

    #[test]
    fn denormalize_inverts_the_scale() {
        let x = vec![0.5f64, -2.0, 3.25];
        let n = power_normalize(&x).unwrap();
        let back = denormalize(&n.symbols, n.scale);
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn awgn_noise_variance_matches_the_snr() {
        // 10 dB over a unit-power signal means noise variance 0.1. Feed
        // zeros so the output is the noise itself, and check the sample
        // variance of a million draws to within 1%.
        let x = vec![0.0f64; 1_000_000];
        let out = channel_transmit(&x, &ChannelConfig::awgn(10.0, 7)).unwrap();
        let mean: f64 = out.symbols.iter().sum::<f64>() / x.len() as f64;
        let var: f64 =
            out.symbols.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
        assert!((var - 0.1).abs() < 0.001, "sample variance {}", var);
    }

    #[test]
    fn noiseless_awgn_is_a_bit_exact_copy() {
        let x = vec![0.25f32, -1.5, 3.0];
        let out = channel_transmit(&x, &ChannelConfig::awgn(f64::INFINITY, 3)).unwrap();
        assert_eq!(out.symbols, x);
        assert!(out.gains.iter().all(|g| *g == 1.0));
    }

    #[test]
    fn channel_noise_is_seeded() {
        let x = vec![1.0f64; 64];
        let a = channel_transmit(&x, &ChannelConfig::awgn(5.0, 11)).unwrap();
        let b = channel_transmit(&x, &ChannelConfig::awgn(5.0, 11)).unwrap();
        let c = channel_transmit(&x, &ChannelConfig::awgn(5.0, 12)).unwrap();
        assert_eq!(a.symbols, b.symbols);
        assert_ne!(a.symbols, c.symbols);
    }

    #[test]
    fn different_seeds_give_independent_noise() {
        // Bin two noise streams by the quartiles of their common marginal
        // and run a chi-square independence test on the 4x4 table
        // (9 degrees of freedom, critical value 27.877 at the 0.001 level).
        let n = 4096usize;
        let x = vec![0.0f64; n];
        let a = channel_transmit(&x, &ChannelConfig::awgn(10.0, 100)).unwrap().symbols;
        let b = channel_transmit(&x, &ChannelConfig::awgn(10.0, 200)).unwrap().symbols;
        let sigma = 0.1f64.sqrt();
        let edges = [-0.6744897501960817 * sigma, 0.0, 0.6744897501960817 * sigma];
        let bin = |v: f64| edges.iter().filter(|e| v > **e).count();
        let mut table = [[0.0f64; 4]; 4];
        for (va, vb) in a.iter().zip(b.iter()) {
            table[bin(*va)][bin(*vb)] += 1.0;
        }
        let rows: Vec<f64> = (0..4).map(|i| table[i].iter().sum()).collect();
        let cols: Vec<f64> = (0..4).map(|j| (0..4).map(|i| table[i][j]).sum()).collect();
        let mut chi2 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let expected = rows[i] * cols[j] / n as f64;
                chi2 += (table[i][j] - expected).powi(2) / expected;
            }
        }
        assert!(chi2 < 27.877, "chi-square statistic {}", chi2);
    }

    #[test]
    fn fading_gains_are_constant_per_block() {
        let x = vec![1.0f64; 12];
        let out = channel_transmit(&x, &ChannelConfig::rayleigh(10.0, 4, 5)).unwrap();
        for block in out.gains.chunks(4) {
            assert!(block.iter().all(|g| *g == block[0]));
        }
        assert_ne!(out.gains[0], out.gains[4]);
        assert_ne!(out.gains[4], out.gains[8]);
    }

    #[test]
    fn fading_has_unit_average_power_gain() {
        let x = vec![0.0f64; 40_000];
        let out = channel_transmit(&x, &ChannelConfig::rayleigh(f64::INFINITY, 1, 9)).unwrap();
        let mean_h2: f64 =
            out.gains.iter().map(|h| h * h).sum::<f64>() / out.gains.len() as f64;
        assert!((mean_h2 - 1.0).abs() < 0.02, "mean squared gain {}", mean_h2);
    }

    #[test]
    fn noiseless_fading_equalizes_back_to_the_input() {
        let x = vec![0.5f64, -1.25, 2.0, 0.0, 3.5, -0.75];
        let out = channel_transmit(&x, &ChannelConfig::rayleigh(f64::INFINITY, 2, 21)).unwrap();
        for (y, v) in out.symbols.iter().zip(x.iter()) {
            assert!((y - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn digital_delivery_flips_once_at_the_capacity_threshold() {
        // 1000 bits over 500 uses needs 2 bits per use, which the channel
        // reaches exactly at snr 2^4 - 1 = 15, about 11.76 dB.
        let payload = 1000.0;
        let n = 500;
        let threshold_db = 10.0 * 15f64.log10();
        assert!(!digital_link(payload, n, threshold_db - 0.01).unwrap().delivered);
        assert!(digital_link(payload, n, threshold_db + 1e-9).unwrap().delivered);
        let mut last = false;
        for step in 0..260 {
            let snr = -5.0 + 0.1 * step as f64;
            let now = digital_link(payload, n, snr).unwrap().delivered;
            assert!(now || !last, "delivery regressed at {} dB", snr);
            last = now;
        }
    }

    #[test]
    fn infinite_snr_always_delivers() {
        let out = digital_link(1e12, 1, f64::INFINITY).unwrap();
        assert!(out.delivered);
        assert!(out.capacity_bits.is_infinite());
    }

    #[test]
    fn bandwidth_ratio_divides_uses_by_scalars() {
        let r = bandwidth_report(6980, 196_608).unwrap();
        assert!((r.ratio - 0.0355).abs() < 5e-4);
        assert!(bandwidth_report(1, 0).is_err());
    }

    #[test]
    fn ofdm_budget_counts_symbols_per_slot() {
        assert_eq!(ofdm_budget(1.0, 1).unwrap(), 14_000);
        assert_eq!(ofdm_budget(0.5, 12).unwrap(), 84_000);
        assert_eq!(ofdm_budget(0.0, 4).unwrap(), 0);
    }
}
