//! Coordinate encodings for coordinate-based networks.
//!
//! The Fourier mapping lifts a d-dimensional coordinate to `[sin(2πBx),
//! cos(2πBx)]` with a random frequency matrix `B`. The matrix is pinned by
//! `(seed, m, d, sigma)`, so both ends of a link rebuild it from four
//! numbers rather than shipping floats.

use crate::error::{CoreError, Result};
use crate::rng::Prng;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingMode {
    None,
    Fourier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoding<T> {
    mode: EncodingMode,
    input_dim: usize,
    /// Frequency count m; rows of B.
    freq_count: usize,
    sigma: f64,
    seed: u64,
    /// Row-major (m, d). Empty in `None` mode.
    matrix: Vec<T>,
}

impl<T: Real> Encoding<T> {
    /// Pass-through encoding: coordinates enter the network unchanged.
    pub fn none(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(CoreError::config("encoding input dim must be positive"));
        }
        Ok(Encoding {
            mode: EncodingMode::None,
            input_dim,
            freq_count: 0,
            sigma: 0.0,
            seed: 0,
            matrix: Vec::new(),
        })
    }

    /// Fourier features with `m` frequencies of scale `sigma`, drawn once
    /// from the recorded seed.
    pub fn fourier(input_dim: usize, freq_count: usize, sigma: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 || freq_count == 0 {
            return Err(CoreError::config("fourier encoding needs positive dims"));
        }
        if !(sigma > 0.0) {
            return Err(CoreError::config("fourier sigma must be positive"));
        }
        let mut rng = Prng::seed(seed);
        let matrix = (0..input_dim * freq_count)
            .map(|_| T::from64(sigma * rng.normal()))
            .collect();
        Ok(Encoding {
            mode: EncodingMode::Fourier,
            input_dim,
            freq_count,
            sigma,
            seed,
            matrix,
        })
    }

    /// Fourier encoding with an explicit matrix (row-major m x d).
    pub fn with_matrix(input_dim: usize, matrix: Vec<T>) -> Result<Self> {
        if input_dim == 0 || matrix.is_empty() || matrix.len() % input_dim != 0 {
            return Err(CoreError::shape("matrix must be m x input_dim".to_string()));
        }
        let freq_count = matrix.len() / input_dim;
        Ok(Encoding {
            mode: EncodingMode::Fourier,
            input_dim,
            freq_count,
            sigma: 0.0,
            seed: 0,
            matrix,
        })
    }

    pub fn mode(&self) -> EncodingMode {
        self.mode
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn freq_count(&self) -> usize {
        self.freq_count
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Dimension after encoding: d for `None`, 2m for `Fourier`.
    pub fn encoded_dim(&self) -> usize {
        match self.mode {
            EncodingMode::None => self.input_dim,
            EncodingMode::Fourier => 2 * self.freq_count,
        }
    }

    /// Encodes one coordinate. Fourier output is the m sines followed by
    /// the m cosines of `2π B x`.
    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim {
            return Err(CoreError::shape(format!(
                "coordinate dim {} != encoding input dim {}",
                x.len(),
                self.input_dim
            )));
        }
        match self.mode {
            EncodingMode::None => Ok(x.to_vec()),
            EncodingMode::Fourier => {
                let two_pi = T::from64(2.0) * T::PI();
                let mut out = vec![T::zero(); 2 * self.freq_count];
                for r in 0..self.freq_count {
                    let row = &self.matrix[r * self.input_dim..(r + 1) * self.input_dim];
                    let mut acc = T::zero();
                    for (w, v) in row.iter().zip(x.iter()) {
                        acc = acc + *w * *v;
                    }
                    let phase = two_pi * acc;
                    out[r] = phase.sin();
                    out[self.freq_count + r] = phase.cos();
                }
                Ok(out)
            }
        }
    }
}

/// Standalone Fourier feature map (sins then cosines of `2π B x`).
pub fn fourier_encode<T: Real>(x: &[T], cfg: &Encoding<T>) -> Result<Vec<T>> {
    if cfg.mode != EncodingMode::Fourier {
        return Err(CoreError::config("fourier_encode requires a fourier-mode encoding"));
    }
    cfg.encode(x)
}
