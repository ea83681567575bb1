//! Point clouds, Wasserstein distances, score error and the sample-size rate
//! harness.

pub mod rate;
pub mod wasserstein;

use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub use rate::{fit_slope, rate_experiment, score_exponent, w1_exponent, RateCell, RateReport, RateSettings, RateSummary, SlopeFit};
pub use wasserstein::{sliced_wasserstein1, sliced_wasserstein1_with, wasserstein1, wasserstein1_with, EXACT_LIMIT};

/// A finite set of ambient points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
    pub seed: Option<u64>,
    pub source: String,
}

impl PointCloud {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new(), seed: None, source: String::new() }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Self {
        let mut c = Self::new(dim);
        for r in rows {
            c.push(r);
        }
        c
    }

    /// Build from a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: data.len() });
        }
        Ok(Self { dim, data, seed: None, source: String::new() })
    }

    pub fn with_meta(mut self, seed: u64, source: impl Into<String>) -> Self {
        self.seed = Some(seed);
        self.source = source.into();
        self
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        self.data.extend_from_slice(x);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Uniformly chosen subset of `n` points without replacement.
    pub fn subsample(&self, n: usize, seed: u64) -> PointCloud {
        let len = self.len();
        if n >= len {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..len).collect();
        let mut r = stream(seed, 0);
        for i in 0..n {
            let j = i + ((rng::uniform(&mut r) * (len - i) as f64) as usize).min(len - i - 1);
            idx.swap(i, j);
        }
        let mut out = PointCloud::new(self.dim);
        for &i in &idx[..n] {
            out.push(self.row(i));
        }
        out.seed = self.seed;
        out.source = self.source.clone();
        out
    }

    /// Per-coordinate mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for r in self.rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = self.len().max(1) as f64;
        m.iter().map(|v| v / n).collect()
    }
}
