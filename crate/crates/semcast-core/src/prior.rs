//! Learned probability model over latent values.
//!
//! Each component (a latent dimension, or one grid level) carries a
//! location and a log-scale under a Laplace or Gaussian family. Values are
//! quantized to bins of width `delta`; the negative log bin mass is the
//! ideal code length, which is what transmission accounting charges and
//! what the rate term of training penalizes. During training the hard
//! rounding is replaced by additive uniform noise so the rate stays
//! differentiable; `rate_bits` evaluates that continuous surrogate along
//! with analytic gradients for the value and both prior parameters.

use crate::error::{CoreError, Result};
use crate::rng::Prng;
use crate::scalar::Real;

/// Bin probabilities are floored here when charging bits, bounding the
/// cost of any single value at 20 bits.
pub const MIN_BIN_PROB: f64 = 9.5367431640625e-7; // 2^-20

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorFamily {
    Gaussian,
    Laplace,
}

/// Survival function of the standardized density, valid for z >= 0.
fn std_survival(family: PriorFamily, z: f64) -> f64 {
    match family {
        PriorFamily::Gaussian => 0.5 * libm::erfc(z / std::f64::consts::SQRT_2),
        PriorFamily::Laplace => 0.5 * (-z).exp(),
    }
}

fn std_pdf(family: PriorFamily, z: f64) -> f64 {
    match family {
        PriorFamily::Gaussian => {
            (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
        }
        PriorFamily::Laplace => 0.5 * (-z.abs()).exp(),
    }
}

/// Probability mass of the standardized density on (z_lo, z_hi), computed
/// through survival functions so tail bins do not cancel to garbage.
fn std_mass(family: PriorFamily, z_lo: f64, z_hi: f64) -> f64 {
    if z_lo >= 0.0 {
        (std_survival(family, z_lo) - std_survival(family, z_hi)).max(0.0)
    } else if z_hi <= 0.0 {
        (std_survival(family, -z_hi) - std_survival(family, -z_lo)).max(0.0)
    } else {
        (1.0 - std_survival(family, z_hi) - std_survival(family, -z_lo)).max(0.0)
    }
}

/// Nearest-bin index at width `delta`; halfway points round away from zero.
pub fn quantize(v: f64, delta: f64) -> Result<i64> {
    if !v.is_finite() {
        return Err(CoreError::non_finite("quantize input"));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(CoreError::config("quantization width must be positive and finite"));
    }
    Ok((v / delta).round() as i64)
}

pub fn dequantize(k: i64, delta: f64) -> f64 {
    k as f64 * delta
}

/// Gradients of the continuous rate surrogate at one value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateGrad {
    pub d_value: f64,
    pub d_mu: f64,
    pub d_log_scale: f64,
}

impl RateGrad {
    pub const ZERO: RateGrad = RateGrad { d_value: 0.0, d_mu: 0.0, d_log_scale: 0.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrior<T> {
    family: PriorFamily,
    mu: Vec<T>,
    log_scale: Vec<T>,
    delta: f64,
}

impl<T: Real> LatentPrior<T> {
    /// Standard prior: every component at location 0, scale 1.
    pub fn new(family: PriorFamily, components: usize, delta: f64) -> Result<Self> {
        Self::with_params(family, vec![T::zero(); components], vec![T::zero(); components], delta)
    }

    pub fn with_params(
        family: PriorFamily,
        mu: Vec<T>,
        log_scale: Vec<T>,
        delta: f64,
    ) -> Result<Self> {
        if mu.is_empty() || mu.len() != log_scale.len() {
            return Err(CoreError::shape(format!(
                "prior needs matching nonempty mu/log_scale, got {} and {}",
                mu.len(),
                log_scale.len()
            )));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(CoreError::config("prior bin width must be positive and finite"));
        }
        if mu.iter().chain(log_scale.iter()).any(|v| !v.f64().is_finite()) {
            return Err(CoreError::non_finite("prior parameters"));
        }
        Ok(LatentPrior { family, mu, log_scale, delta })
    }

    pub fn family(&self) -> PriorFamily {
        self.family
    }

    pub fn components(&self) -> usize {
        self.mu.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn log_scale(&self) -> &[T] {
        &self.log_scale
    }

    pub fn scale(&self, component: usize) -> f64 {
        self.log_scale[component].f64().exp()
    }

    /// Mutable views for the trainer; order is (mu, log_scale).
    pub fn params_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.mu, &mut self.log_scale)
    }

    fn standardize(&self, component: usize, t: f64) -> f64 {
        (t - self.mu[component].f64()) / self.scale(component)
    }

    /// True probability mass of bin `k` for one component (no floor).
    pub fn bin_prob(&self, component: usize, k: i64) -> f64 {
        let lo = (k as f64 - 0.5) * self.delta;
        let hi = (k as f64 + 0.5) * self.delta;
        std_mass(
            self.family,
            self.standardize(component, lo),
            self.standardize(component, hi),
        )
    }

    /// Code length of one value: quantize, then charge the floored bin mass.
    pub fn bits_for_value(&self, component: usize, v: f64) -> Result<f64> {
        let k = quantize(v, self.delta)?;
        Ok(-self.bin_prob(component, k).max(MIN_BIN_PROB).log2())
    }

    /// Total code length of a value list. Values are assigned to components
    /// round-robin (`index % components`), which matches both interleaved
    /// latent vectors and single-component streams.
    pub fn entropy_bits(&self, values: &[T]) -> Result<f64> {
        if values.len() % self.components() != 0 {
            return Err(CoreError::shape(format!(
                "value count {} not a multiple of {} components",
                values.len(),
                self.components()
            )));
        }
        let c = self.components();
        let mut bits = 0.0f64;
        for (i, v) in values.iter().enumerate() {
            bits += self.bits_for_value(i % c, v.f64())?;
        }
        Ok(bits)
    }

    /// Per-component code-length totals over the same round-robin layout.
    pub fn entropy_bits_per_component(&self, values: &[T]) -> Result<Vec<f64>> {
        if values.len() % self.components() != 0 {
            return Err(CoreError::shape(format!(
                "value count {} not a multiple of {} components",
                values.len(),
                self.components()
            )));
        }
        let c = self.components();
        let mut bits = vec![0.0f64; c];
        for (i, v) in values.iter().enumerate() {
            bits[i % c] += self.bits_for_value(i % c, v.f64())?;
        }
        Ok(bits)
    }

    /// Continuous rate surrogate: code length of the width-`delta` interval
    /// centered on `x`, with gradients. In the floored region the rate
    /// saturates at 20 bits and all gradients are zero.
    pub fn rate_bits(&self, component: usize, x: f64) -> (f64, RateGrad) {
        let b = self.scale(component);
        let half = 0.5 * self.delta;
        let z_lo = self.standardize(component, x - half);
        let z_hi = self.standardize(component, x + half);
        let p = std_mass(self.family, z_lo, z_hi);
        if p <= MIN_BIN_PROB {
            return (-MIN_BIN_PROB.log2(), RateGrad::ZERO);
        }
        let g_lo = std_pdf(self.family, z_lo);
        let g_hi = std_pdf(self.family, z_hi);
        let ln2 = std::f64::consts::LN_2;
        let d_value = -(g_hi - g_lo) / (b * p * ln2);
        let d_mu = -d_value;
        let d_log_scale = (g_hi * z_hi - g_lo * z_lo) / (p * ln2);
        (-p.log2(), RateGrad { d_value, d_mu, d_log_scale })
    }

    /// Training-time stand-in for rounding: uniform noise in [-delta/2, delta/2).
    pub fn qat_noise(&self, rng: &mut Prng) -> f64 {
        rng.uniform_in(-0.5 * self.delta, 0.5 * self.delta)
    }
}

/// Code length of a value list under the prior.
pub fn entropy_bits<T: Real>(values: &[T], prior: &LatentPrior<T>) -> Result<f64> {
    prior.entropy_bits(values)
}
