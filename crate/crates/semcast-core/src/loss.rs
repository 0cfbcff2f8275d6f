//! Distortion measures: mean squared error and PSNR.

use std::fmt;

use crate::error::{CoreError, Result};
use crate::scalar::Real;
use crate::signal::SignalTensor;

/// Mean squared error over two equal-length slices, accumulated in f64,
/// plus the gradient with respect to `a`: `2 (a - b) / N`.
pub fn mse_with_grad<T: Real>(a: &[T], b: &[T]) -> Result<(f64, Vec<T>)> {
    if a.len() != b.len() {
        return Err(CoreError::shape(format!("mse over lengths {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(CoreError::config("mse over empty slices"));
    }
    let n = a.len() as f64;
    let mut acc = 0.0f64;
    let scale = T::from64(2.0 / n);
    let mut grad = Vec::with_capacity(a.len());
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d.f64() * d.f64();
        grad.push(scale * d);
    }
    Ok((acc / n, grad))
}

/// MSE only, f64 accumulation.
pub fn mse<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::shape(format!("mse over lengths {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(CoreError::config("mse over empty slices"));
    }
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x.f64() - y.f64();
        acc += d * d;
    }
    Ok(acc / a.len() as f64)
}

/// MSE + gradient between two signals of identical layout.
pub fn mse_loss<T: Real>(a: &SignalTensor<T>, b: &SignalTensor<T>) -> Result<(f64, Vec<T>)> {
    if !a.same_layout(b) {
        return Err(CoreError::shape(format!(
            "signal layouts differ: {:?}x{} vs {:?}x{}",
            a.shape(),
            a.channels(),
            b.shape(),
            b.channels()
        )));
    }
    mse_with_grad(a.values(), b.values())
}

/// Peak signal-to-noise ratio. A zero-MSE comparison is not a number of
/// decibels; it is reported as the distinguished lossless case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Lossless,
}

impl Psnr {
    pub fn from_mse(mse: f64, peak: f64) -> Result<Psnr> {
        if peak <= 0.0 {
            return Err(CoreError::config(format!("psnr peak must be positive, got {peak}")));
        }
        if mse < 0.0 || !mse.is_finite() {
            return Err(CoreError::non_finite(format!("mse {mse}")));
        }
        if mse == 0.0 {
            Ok(Psnr::Lossless)
        } else {
            Ok(Psnr::Db(10.0 * (peak * peak / mse).log10()))
        }
    }

    pub fn db(&self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(*v),
            Psnr::Lossless => None,
        }
    }

    /// dB value with lossless mapped to +inf (for comparisons and sorting).
    pub fn db_or_inf(&self) -> f64 {
        match self {
            Psnr::Db(v) => *v,
            Psnr::Lossless => f64::INFINITY,
        }
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.4}"),
            Psnr::Lossless => write!(f, "inf"),
        }
    }
}

/// PSNR between two signals of identical layout at the given peak.
pub fn psnr<T: Real>(a: &SignalTensor<T>, b: &SignalTensor<T>, peak: f64) -> Result<Psnr> {
    if !a.same_layout(b) {
        return Err(CoreError::shape("psnr over differing layouts".to_string()));
    }
    Psnr::from_mse(mse(a.values(), b.values())?, peak)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(values: Vec<f64>) -> SignalTensor<f64> {
        SignalTensor::new(vec![values.len()], 1, 0.0, 1.0, values).unwrap()
    }

    #[test]
    fn identical_tensors_zero() {
        let a = sig(vec![0.2, 0.4, 0.9]);
        let (v, g) = mse_loss(&a, &a).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn unit_difference() {
        let a = sig(vec![1.0, 1.0]);
        let b = sig(vec![0.0, 0.0]);
        let (v, _) = mse_loss(&a, &b).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let a = sig(vec![1.0, 1.0]);
        let b = sig(vec![0.0, 0.0, 0.0]);
        assert!(mse_loss(&a, &b).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Oracle: finite differences on the mean of squares.
        let a = vec![0.3, -0.2, 0.7, 0.05];
        let b = vec![0.1, 0.1, 0.6, -0.3];
        let (_, grad) = mse_with_grad(&a, &b).unwrap();
        let h = 1e-6;
        for i in 0..a.len() {
            let mut plus = a.clone();
            plus[i] += h;
            let mut minus = a.clone();
            minus[i] -= h;
            let fd = (mse(&plus, &b).unwrap() - mse(&minus, &b).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "entry {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn psnr_known_points() {
        assert!((Psnr::from_mse(0.01, 1.0).unwrap().db().unwrap() - 20.0).abs() < 1e-9);
        assert!((Psnr::from_mse(1.0, 1.0).unwrap().db().unwrap() - 0.0).abs() < 1e-9);
        // 10*log10(255^2 / 65.025) = 10*log10(1000) = 30 exactly.
        let v = Psnr::from_mse(65.025, 255.0).unwrap().db().unwrap();
        let oracle = 10.0 * (255.0f64 * 255.0 / 65.025).log10();
        assert!((v - oracle).abs() < 1e-12);
        assert!((v - 30.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_lossless_sentinel() {
        let p = Psnr::from_mse(0.0, 1.0).unwrap();
        assert_eq!(p, Psnr::Lossless);
        assert_eq!(p.to_string(), "inf");
        assert!(Psnr::from_mse(0.0, 0.0).is_err());
    }
}
