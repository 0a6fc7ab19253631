//! Constructive quantization and entropy coding for fractional Brownian motion.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid_paths`]: FBM simulation on uniform grids, norms, and the self-similarity operators.
//! - [`codebook`]: codebook container, brute-force nearest search, entropy and code lengths.
//! - [`concat_coder`]: block concatenation with offset-grid correction, rescaling to `[0, 1]`,
//!   typical-set codebooks.
//! - [`random_coder`]: first-hit coding against an i.i.d. FBM pool with `6/(π² n²)` weights.
//! - [`increment_coder`]: `2εℤ` partial-sum coder and the block + increment `L^p` coder.
//! - [`gauss_rd`]: Gaussian `L²` distortion-rate function by reverse water-filling.
//! - [`lab`]: rate–distortion sweeps, κ estimation, diagnostics and reports.
//!
//! Rates are in nats everywhere.

pub mod codebook;
pub mod concat_coder;
pub mod error;
pub mod gauss_rd;
pub mod grid_paths;
pub mod increment_coder;
pub mod lab;
pub mod par;
pub mod random_coder;
pub mod stats;

pub use error::{Error, Result};
pub use grid_paths::{FbmSampler, Norm, PathKind, RngSpec, SampledPath};
pub use par::Execution;
