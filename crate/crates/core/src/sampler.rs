//! Reverse-time SDE sampling with Euler–Maruyama steps and early stopping.

use serde::{Deserialize, Serialize};

use crate::diffusion::{h, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::evaluation::PointCloud;
use crate::geometry::EmbeddedManifold;
use crate::par::Execution;
use crate::rng::{derive_seed, gaussian, stream};
use crate::ScoreField;

/// Placement of the diffusion times visited by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepGrid {
    /// Equal steps in `t`.
    Uniform,
    /// Equal steps in `log h_t`, refined towards `t0`.
    #[default]
    LogH,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub schedule: DiffusionSchedule,
    pub grid: StepGrid,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(n_steps: usize, schedule: DiffusionSchedule, seed: u64) -> Self {
        Self { n_steps, schedule, grid: StepGrid::default(), seed }
    }

    /// Diffusion times `T = τ_0 > τ_1 > … > τ_N = t0`.
    pub fn times(&self) -> Result<Vec<f64>> {
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
        }
        let (t0, t1) = (self.schedule.t0, self.schedule.t_end);
        let n = self.n_steps;
        let mut ts: Vec<f64> = match self.grid {
            StepGrid::Uniform => (0..=n).map(|j| t1 - (t1 - t0) * j as f64 / n as f64).collect(),
            StepGrid::LogH => {
                let (a, b) = (h(t1).ln(), h(t0).ln());
                (0..=n)
                    .map(|j| {
                        let hj = (a + (b - a) * j as f64 / n as f64).exp();
                        -(-hj).ln_1p()
                    })
                    .collect()
            }
        };
        ts[0] = t1;
        ts[n] = t0;
        if ts.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidConfig("time grid is not strictly decreasing".into()));
        }
        Ok(ts)
    }
}

/// Terminal cloud and the number of discarded trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRun {
    pub cloud: PointCloud,
    pub aborted: usize,
    pub times: Vec<f64>,
}

/// One trajectory; `Ok(None)` when the score underflows or the state
/// leaves the finite range.
fn trajectory<S: ScoreField + ?Sized>(score: &S, times: &[f64], dim: usize, seed: u64, index: u64) -> Result<Option<Vec<f64>>> {
    let mut r = stream(seed, index);
    let mut y: Vec<f64> = (0..dim).map(|_| gaussian(&mut r)).collect();
    for w in times.windows(2) {
        let (tau, dt) = (w[0], w[0] - w[1]);
        let s = match score.score(&y, tau) {
            Ok(s) => s,
            Err(Error::Underflow { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let sd = dt.sqrt();
        for (yi, si) in y.iter_mut().zip(&s) {
            *yi += (0.5 * *yi + si) * dt + sd * gaussian(&mut r);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
    }
    Ok(Some(y))
}

/// Draw `n` samples by integrating the reverse SDE from `N(0, I)` at `T`
/// down to `t0`.
pub fn backward_sample<S: ScoreField + ?Sized>(score: &S, cfg: &SamplerConfig, n: usize, exec: Execution) -> Result<SampleRun> {
    let times = cfg.times()?;
    let dim = score.ambient_dim();
    let seed = derive_seed(cfg.seed, &[21]);
    let results = exec.try_map(n, |i| trajectory(score, &times, dim, seed, i as u64))?;
    let mut cloud = PointCloud::new(dim);
    let mut aborted = 0;
    for y in results {
        match y {
            Some(y) => cloud.push(&y),
            None => aborted += 1,
        }
    }
    if aborted * 100 > n {
        return Err(Error::TrajectoryAbort { aborted, total: n });
    }
    Ok(SampleRun { cloud: cloud.with_meta(cfg.seed, "backward_sample"), aborted, times })
}

/// Summary of distances from a cloud to the manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityStats {
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
}

pub fn manifold_proximity_stats(cloud: &PointCloud, manifold: &EmbeddedManifold) -> ProximityStats {
    let mut d: Vec<f64> = cloud.rows().map(|x| manifold.distance_to(x)).collect();
    if d.is_empty() {
        return ProximityStats { mean: f64::NAN, p95: f64::NAN, max: f64::NAN };
    }
    d.sort_by(f64::total_cmp);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let k = ((0.95 * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
    ProximityStats { mean, p95: d[k], max: d[d.len() - 1] }
}
