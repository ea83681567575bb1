//! Numerical laboratory for the score function of diffusion models whose
//! data lives on a low-dimensional manifold.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: analytic embedded manifolds, atlases and partitions of unity.
//! - [`density`]: probability densities on those manifolds and their local
//!   (per-chart) measures.
//! - [`diffusion`]: the Ornstein–Uhlenbeck forward process.
//! - [`oracle`]: quadrature evaluation of `p_t`, `∇log p_t` and posterior means.
//! - [`decomposition`]: the linear, large-noise and small-noise score splits.
//! - [`model`]: ReLU score networks and the denoising score-matching trainer.
//! - [`sampler`]: Euler–Maruyama simulation of the backward SDE.
//! - [`evaluation`]: Wasserstein-1 distances and the sample-size rate harness.
//!
//! Data-parallel loops go through [`par::Execution`], which uses rayon when the
//! `parallel` feature is enabled and a plain sequential loop otherwise. Both
//! paths reduce in a fixed order, so results are bitwise identical.

// `!(x >= 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod decomposition;
pub mod density;
pub mod diffusion;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod invariants;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod tol;

pub use error::{Error, Result};
pub use evaluation::PointCloud;

/// A vector field `(x, t) ↦ s(x, t)` on ambient space.
///
/// Implemented by the quadrature oracle, the decomposition reassemblies and
/// the trained networks, so the sampler and the error metrics can take any of
/// them.
pub trait ScoreField: Sync {
    fn ambient_dim(&self) -> usize;

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>>;
}

impl<S: ScoreField + ?Sized> ScoreField for &S {
    fn ambient_dim(&self) -> usize {
        (**self).ambient_dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        (**self).score(x, t)
    }
}

/// The standard-Gaussian score `s(x, t) = -x`, the stationary field of the
/// forward process.
#[derive(Debug, Clone, Copy)]
pub struct GaussianScore {
    pub dim: usize,
}

impl ScoreField for GaussianScore {
    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn score(&self, x: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(x.iter().map(|v| -v).collect())
    }
}
