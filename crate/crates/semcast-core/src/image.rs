//! Netpbm image IO: reads PGM (P2/P5) and PPM (P3/P6) with maxval up to
//! 255, mapping samples to [0, 1]; writes the binary variants.

use std::path::Path;

use crate::error::{CoreError, Result};
use crate::scalar::Real;
use crate::signal::SignalTensor;

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Tokens { bytes, pos: 0 }
    }

    /// Skips whitespace and '#' comments, then returns the next token.
    fn next(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return Err(CoreError::format("unexpected end of image header"));
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| CoreError::format("image header is not ASCII"))
    }

    fn next_usize(&mut self) -> Result<usize> {
        let tok = self.next()?;
        tok.parse::<usize>()
            .map_err(|_| CoreError::format(format!("expected an integer, got {tok:?}")))
    }

    /// Consumes the single whitespace byte that separates the header from a
    /// binary raster.
    fn binary_raster(&mut self) -> Result<&'a [u8]> {
        if self.pos >= self.bytes.len() || !self.bytes[self.pos].is_ascii_whitespace() {
            return Err(CoreError::format("missing separator before binary raster"));
        }
        Ok(&self.bytes[self.pos + 1..])
    }
}

/// Decodes P2/P3/P5/P6 bytes into a [0, 1]-ranged signal of shape
/// [height, width] with 1 (gray) or 3 (rgb) channels.
pub fn decode_netpbm<T: Real>(bytes: &[u8]) -> Result<SignalTensor<T>> {
    let mut toks = Tokens::new(bytes);
    let magic = toks.next()?;
    let (channels, binary) = match magic {
        "P2" => (1, false),
        "P3" => (3, false),
        "P5" => (1, true),
        "P6" => (3, true),
        other => return Err(CoreError::format(format!("unsupported netpbm magic {other:?}"))),
    };
    let width = toks.next_usize()?;
    let height = toks.next_usize()?;
    let maxval = toks.next_usize()?;
    if width == 0 || height == 0 {
        return Err(CoreError::format("image dimensions must be positive"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(CoreError::format(format!("maxval {maxval} outside 1..=255")));
    }
    let count = width * height * channels;
    let scale = 1.0 / maxval as f64;
    let mut values = Vec::with_capacity(count);
    if binary {
        let raster = toks.binary_raster()?;
        if raster.len() < count {
            return Err(CoreError::format(format!(
                "raster holds {} bytes, needs {count}",
                raster.len()
            )));
        }
        for b in &raster[..count] {
            if *b as usize > maxval {
                return Err(CoreError::format("sample exceeds maxval"));
            }
            values.push(T::from64(*b as f64 * scale));
        }
    } else {
        for _ in 0..count {
            let v = toks.next_usize()?;
            if v > maxval {
                return Err(CoreError::format("sample exceeds maxval"));
            }
            values.push(T::from64(v as f64 * scale));
        }
    }
    SignalTensor::new(vec![height, width], channels, 0.0, 1.0, values)
}

/// Encodes a 2-d signal as binary PGM (1 channel) or PPM (3 channels),
/// clamping to the signal range and quantizing to maxval 255.
pub fn encode_netpbm<T: Real>(signal: &SignalTensor<T>) -> Result<Vec<u8>> {
    let shape = signal.shape();
    if shape.len() != 2 {
        return Err(CoreError::shape(format!(
            "image export expects a 2-d signal, got {}-d",
            shape.len()
        )));
    }
    let magic = match signal.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(CoreError::shape(format!("image export expects 1 or 3 channels, got {c}"))),
    };
    let (lo, hi) = (signal.lo(), signal.hi());
    let span = hi - lo;
    let mut out = format!("{magic}\n{} {}\n255\n", shape[1], shape[0]).into_bytes();
    for v in signal.values() {
        let unit = ((v.f64() - lo) / span).clamp(0.0, 1.0);
        out.push((unit * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn read_image<T: Real>(path: &Path) -> Result<SignalTensor<T>> {
    let bytes = std::fs::read(path)
        .map_err(|e| CoreError::format(format!("cannot read {}: {e}", path.display())))?;
    decode_netpbm(&bytes)
}

pub fn write_image<T: Real>(path: &Path, signal: &SignalTensor<T>) -> Result<()> {
    let bytes = encode_netpbm(signal)?;
    std::fs::write(path, bytes)
        .map_err(|e| CoreError::format(format!("cannot write {}: {e}", path.display())))
}
