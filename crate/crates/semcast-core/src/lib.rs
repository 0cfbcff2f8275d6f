//! Semantic coded transmission laboratory.
//!
//! Desk-scale building blocks for learned transmission of signals over
//! simulated wireless channels: dense-network numerics, implicit neural
//! representations, meta-learned initializations, conditional neural fields
//! with multi-level feature grids, explicit patch codecs with learned latent
//! priors, and channel models with bandwidth accounting.
//!
//! All numerics are generic over the scalar type via [`Real`]; concrete
//! aliases at the crate root pin the production precision to `f32`, while
//! tests and oracles can instantiate the identical code at `f64`.

pub mod channel;
pub mod ckpt;
pub mod encoding;
pub mod error;
pub mod esc;
pub mod field;
pub mod grid;
pub mod image;
pub mod inr;
pub mod loss;
pub mod meta;
pub mod nn;
pub mod optim;
pub mod prior;
pub mod rng;
pub mod scalar;
pub mod signal;

pub use error::{CoreError, Result};
pub use scalar::Real;

/// Production scalar: parameters and signals are stored in 32-bit floats.
/// Reductions accumulate in 64-bit regardless of this choice.
pub type Scalar = f32;

pub type Model = nn::ModelParams<Scalar>;
pub type Signal = signal::SignalTensor<Scalar>;
pub type Encoder = encoding::Encoding<Scalar>;
pub type GridSet = grid::FeatureGridSet<Scalar>;
pub type Prior = prior::LatentPrior<Scalar>;
