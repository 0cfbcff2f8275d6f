//! Sampled source signals on regular lattices.

use crate::error::{CoreError, Result};
use crate::scalar::Real;

/// A signal sampled on a regular 1D or 2D lattice.
///
/// Layout: lattice indices are row-major (last axis fastest), channels
/// innermost, so `values[(flat_index * channels) + ch]`. The `[lo, hi]`
/// range is declared metadata (the nominal value range, used as the PSNR
/// peak); stored values are not forced into it.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTensor<T> {
    shape: Vec<usize>,
    channels: usize,
    lo: f64,
    hi: f64,
    values: Vec<T>,
}

impl<T: Real> SignalTensor<T> {
    pub fn new(shape: Vec<usize>, channels: usize, lo: f64, hi: f64, values: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&s| s == 0) {
            return Err(CoreError::config("signal shape axes must be positive"));
        }
        if channels == 0 {
            return Err(CoreError::config("signal needs at least one channel"));
        }
        if !(lo < hi) {
            return Err(CoreError::config(format!("signal range requires lo < hi, got [{lo}, {hi}]")));
        }
        let expect = shape.iter().product::<usize>() * channels;
        if values.len() != expect {
            return Err(CoreError::shape(format!(
                "signal value count {} does not match shape {:?} x {} channels = {}",
                values.len(),
                shape,
                channels,
                expect
            )));
        }
        Ok(SignalTensor { shape, channels, lo, hi, values })
    }

    /// Constant signal filled with one value.
    pub fn constant(shape: Vec<usize>, channels: usize, lo: f64, hi: f64, value: T) -> Result<Self> {
        let n = shape.iter().product::<usize>() * channels;
        SignalTensor::new(shape, channels, lo, hi, vec![value; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// PSNR peak: the declared dynamic range.
    pub fn peak(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Number of stored scalars: product(shape) * channels.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of lattice sites.
    pub fn lattice_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        SignalTensor::new(self.shape.clone(), self.channels, self.lo, self.hi, values)
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(CoreError::config("signal range requires lo < hi"));
        }
        self.lo = lo;
        self.hi = hi;
        Ok(self)
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.shape == other.shape && self.channels == other.channels
    }

    /// Mid-range constant with this signal's layout (the declared failure
    /// reconstruction for a dead link).
    pub fn failure_fill(&self) -> Self {
        let mid = T::from64(0.5 * (self.lo + self.hi));
        SignalTensor {
            shape: self.shape.clone(),
            channels: self.channels,
            lo: self.lo,
            hi: self.hi,
            values: vec![mid; self.values.len()],
        }
    }
}

/// Cell-center lattice coordinates normalized to [-1, 1]^d, row-major.
///
/// Axis of size n puts index i at -1 + 2(i + 0.5)/n, so encoder and decoder
/// agree on the sampling grid bit-exactly.
pub fn lattice_coords<T: Real>(shape: &[usize]) -> Vec<Vec<T>> {
    let total: usize = shape.iter().product();
    let d = shape.len();
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut coord = vec![T::zero(); d];
        for axis in (0..d).rev() {
            let n = shape[axis];
            let idx = rem % n;
            rem /= n;
            coord[axis] = T::from64(-1.0 + 2.0 * (idx as f64 + 0.5) / n as f64);
        }
        out.push(coord);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_count_mismatch() {
        let err = SignalTensor::<f32>::new(vec![2, 2], 1, 0.0, 1.0, vec![0.0; 3]);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_range() {
        let err = SignalTensor::<f32>::new(vec![2], 1, 1.0, 1.0, vec![0.0; 2]);
        assert!(err.is_err());
    }

    #[test]
    fn lattice_coords_cell_centers() {
        let coords = lattice_coords::<f64>(&[2]);
        assert_eq!(coords.len(), 2);
        assert!((coords[0][0] - -0.5).abs() < 1e-12);
        assert!((coords[1][0] - 0.5).abs() < 1e-12);

        let coords2 = lattice_coords::<f64>(&[2, 4]);
        assert_eq!(coords2.len(), 8);
        // Row-major: last axis fastest.
        assert!((coords2[0][0] - -0.5).abs() < 1e-12);
        assert!((coords2[0][1] - -0.75).abs() < 1e-12);
        assert!((coords2[1][1] - -0.25).abs() < 1e-12);
        assert!((coords2[4][0] - 0.5).abs() < 1e-12);
    }
}
