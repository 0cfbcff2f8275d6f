//! Multi-resolution feature grids.
//!
//! Each level stores a dense lattice of feature vectors over [-1,1]^d;
//! a query multilinearly interpolates the 2^d surrounding vertices at every
//! level and concatenates the per-level results, coarse level first. Levels
//! can be masked off the top, which is both the training-time dropout and
//! the receiver's view after a partial transmission.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{CoreError, Result};
use crate::rng::Prng;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct GridLevel<T> {
    /// Vertex counts per axis, each at least 2.
    sizes: Vec<usize>,
    /// Row-major over vertices (last axis fastest), feature_dim per vertex.
    features: Vec<T>,
}

impl<T: Real> GridLevel<T> {
    pub fn new(sizes: Vec<usize>, feature_dim: usize, features: Vec<T>) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&s| s < 2) {
            return Err(CoreError::config("grid level needs at least 2 vertices per axis"));
        }
        let vertices: usize = sizes.iter().product();
        if features.len() != vertices * feature_dim {
            return Err(CoreError::shape(format!(
                "feature count {} != {} vertices x {} dims",
                features.len(),
                vertices,
                feature_dim
            )));
        }
        Ok(GridLevel { sizes, features })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn vertex_count(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [T] {
        &mut self.features
    }
}

#[derive(Debug)]
pub struct FeatureGridSet<T> {
    dim: usize,
    feature_dim: usize,
    levels: Vec<GridLevel<T>>,
    clamp_count: AtomicUsize,
}

impl<T: Real> Clone for FeatureGridSet<T> {
    fn clone(&self) -> Self {
        FeatureGridSet {
            dim: self.dim,
            feature_dim: self.feature_dim,
            levels: self.levels.clone(),
            clamp_count: AtomicUsize::new(self.clamp_count.load(Ordering::Relaxed)),
        }
    }
}

/// Interpolation footprint of one query, for scattering gradients back to
/// the vertices that produced it.
#[derive(Debug, Clone)]
pub struct QueryTrace {
    /// Per level: (vertex index, weight) for each surrounding corner.
    /// Masked levels have an empty corner list.
    corners: Vec<Vec<(usize, f64)>>,
}

impl<T: Real> FeatureGridSet<T> {
    pub fn new(levels: Vec<GridLevel<T>>, feature_dim: usize) -> Result<Self> {
        if levels.is_empty() {
            return Err(CoreError::config("grid set needs at least one level"));
        }
        if feature_dim == 0 {
            return Err(CoreError::config("feature dim must be positive"));
        }
        let dim = levels[0].sizes.len();
        if dim == 0 || dim > 2 {
            return Err(CoreError::config("grids support 1- or 2-d domains"));
        }
        for level in &levels {
            if level.sizes.len() != dim {
                return Err(CoreError::shape("levels must share dimensionality".to_string()));
            }
            if level.features.len() != level.vertex_count() * feature_dim {
                return Err(CoreError::shape("level feature dim mismatch".to_string()));
            }
        }
        for pair in levels.windows(2) {
            let coarse: usize = pair[0].vertex_count();
            let fine: usize = pair[1].vertex_count();
            let axiswise = pair[0].sizes.iter().zip(pair[1].sizes.iter()).all(|(a, b)| b >= a);
            if !axiswise || fine <= coarse {
                return Err(CoreError::config("each level must be strictly finer than the last"));
            }
        }
        Ok(FeatureGridSet { dim, feature_dim, levels, clamp_count: AtomicUsize::new(0) })
    }

    /// All-zero features on the given per-level axis sizes.
    pub fn zeros(level_sizes: &[Vec<usize>], feature_dim: usize) -> Result<Self> {
        let levels = level_sizes
            .iter()
            .map(|sizes| {
                let vertices: usize = sizes.iter().product();
                GridLevel::new(sizes.clone(), feature_dim, vec![T::zero(); vertices * feature_dim])
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureGridSet::new(levels, feature_dim)
    }

    /// Features drawn uniformly in [-scale, scale].
    pub fn randomized(
        level_sizes: &[Vec<usize>],
        feature_dim: usize,
        scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut set = Self::zeros(level_sizes, feature_dim)?;
        let mut rng = Prng::seed(seed);
        for level in &mut set.levels {
            for f in level.features.iter_mut() {
                *f = T::from64(rng.uniform_in(-scale, scale));
            }
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[GridLevel<T>] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [GridLevel<T>] {
        &mut self.levels
    }

    /// Length of a query result: level count x feature dim.
    pub fn query_dim(&self) -> usize {
        self.levels.len() * self.feature_dim
    }

    pub fn total_feature_count(&self) -> usize {
        self.levels.iter().map(|l| l.features.len()).sum()
    }

    /// Queries that landed outside [-1,1]^d and were clamped.
    pub fn clamp_count(&self) -> usize {
        self.clamp_count.load(Ordering::Relaxed)
    }

    /// Interpolates the first `active_levels` levels at `x`; masked levels
    /// contribute zero features, keeping the output length fixed.
    pub fn query(&self, x: &[T], active_levels: usize) -> Result<Vec<T>> {
        Ok(self.query_trace(x, active_levels)?.0)
    }

    pub fn query_all(&self, x: &[T]) -> Result<Vec<T>> {
        self.query(x, self.level_count())
    }

    pub fn query_trace(&self, x: &[T], active_levels: usize) -> Result<(Vec<T>, QueryTrace)> {
        if x.len() != self.dim {
            return Err(CoreError::shape(format!(
                "query dim {} != grid dim {}",
                x.len(),
                self.dim
            )));
        }
        if active_levels > self.levels.len() {
            return Err(CoreError::config("active level count exceeds level count"));
        }
        let c = self.feature_dim;
        let mut out = vec![T::zero(); self.query_dim()];
        let mut corners = Vec::with_capacity(self.levels.len());
        let mut clamped = false;

        for (li, level) in self.levels.iter().enumerate() {
            if li >= active_levels {
                corners.push(Vec::new());
                continue;
            }
            // Cell coordinates per axis: floor index and fractional offset.
            let mut base = vec![0usize; self.dim];
            let mut frac = vec![0f64; self.dim];
            for a in 0..self.dim {
                let n = level.sizes[a];
                let mut t = (x[a].f64() + 1.0) / 2.0 * (n - 1) as f64;
                if t < 0.0 {
                    t = 0.0;
                    clamped = true;
                } else if t > (n - 1) as f64 {
                    t = (n - 1) as f64;
                    clamped = true;
                }
                let j = (t.floor() as usize).min(n - 2);
                base[a] = j;
                frac[a] = t - j as f64;
            }
            // Row-major strides, last axis fastest.
            let mut strides = vec![1usize; self.dim];
            for a in (0..self.dim.saturating_sub(1)).rev() {
                strides[a] = strides[a + 1] * level.sizes[a + 1];
            }
            let mut level_corners = Vec::with_capacity(1 << self.dim);
            for corner in 0..(1usize << self.dim) {
                let mut vi = 0usize;
                let mut w = 1.0f64;
                for a in 0..self.dim {
                    let hi = (corner >> a) & 1;
                    vi += (base[a] + hi) * strides[a];
                    w *= if hi == 1 { frac[a] } else { 1.0 - frac[a] };
                }
                let wt = T::from64(w);
                for k in 0..c {
                    out[li * c + k] += wt * level.features[vi * c + k];
                }
                level_corners.push((vi, w));
            }
            corners.push(level_corners);
        }
        if clamped {
            self.clamp_count.fetch_add(1, Ordering::Relaxed);
        }
        Ok((out, QueryTrace { corners }))
    }
}

impl QueryTrace {
    /// Interpolation weights of one level's corners.
    pub fn level_weights(&self, level: usize) -> impl Iterator<Item = f64> + '_ {
        self.corners[level].iter().map(|&(_, w)| w)
    }
}

/// Full-depth query; the usual entry point outside training.
pub fn grid_query<T: Real>(grids: &FeatureGridSet<T>, x: &[T]) -> Result<Vec<T>> {
    grids.query_all(x)
}

/// Scatters d(loss)/d(query output) back onto vertex features.
pub fn scatter_query_grad<T: Real>(
    trace: &QueryTrace,
    dz: &[T],
    grads: &mut FeatureGridSet<T>,
) -> Result<()> {
    if dz.len() != grads.query_dim() {
        return Err(CoreError::shape(format!(
            "gradient length {} != query dim {}",
            dz.len(),
            grads.query_dim()
        )));
    }
    if trace.corners.len() != grads.level_count() {
        return Err(CoreError::shape("trace level count mismatch".to_string()));
    }
    let c = grads.feature_dim();
    for (li, level_corners) in trace.corners.iter().enumerate() {
        let features = grads.levels_mut()[li].features_mut();
        for &(vi, w) in level_corners {
            let wt = T::from64(w);
            for k in 0..c {
                features[vi * c + k] += wt * dz[li * c + k];
            }
        }
    }
    Ok(())
}
