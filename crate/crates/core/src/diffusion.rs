//! Forward Ornstein–Uhlenbeck process `dX = −½X dt + dB`.

use crate::density::ManifoldDensity;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::{derive_seed, gaussian, stream};

/// `α_t = e^{−t/2}`.
pub fn alpha(t: f64) -> f64 {
    (-0.5 * t).exp()
}

/// `h_t = 1 − e^{−t}`, evaluated without cancellation for small `t`.
pub fn h(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// `(α_t, h_t)` for `t ≥ 0`.
pub fn schedule_at(t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    Ok((alpha(t), h(t)))
}

/// Early-stopping time `t0` and terminal time `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionSchedule {
    pub t0: f64,
    pub t_end: f64,
}

impl DiffusionSchedule {
    pub fn new(t0: f64, t_end: f64) -> Result<Self> {
        if !(t0 > 0.0 && t_end > t0 && t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!("need 0 < t0 < T, got t0 = {t0}, T = {t_end}")));
        }
        Ok(Self { t0, t_end })
    }

    pub fn at(&self, t: f64) -> Result<(f64, f64)> {
        schedule_at(t)
    }
}

/// `α_t x0 + √h_t z` with `z` drawn from stream `(seed, index)`.
pub fn perturb(x0: &[f64], t: f64, seed: u64, index: u64) -> Vec<f64> {
    let mut r = stream(seed, index);
    perturb_with(x0, t, &mut r)
}

pub fn perturb_with<R: rand::Rng + ?Sized>(x0: &[f64], t: f64, rng: &mut R) -> Vec<f64> {
    let a = alpha(t);
    let s = h(t).sqrt();
    x0.iter().map(|v| a * v + s * gaussian(rng)).collect()
}

/// Outcome of a tube-probability experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeStats {
    pub hits: usize,
    pub trials: usize,
    pub radius: f64,
    /// `1 − δ^D`.
    pub bound: f64,
}

impl TubeStats {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.trials.max(1) as f64
    }

    /// Binomial standard deviation of the rate at the bound.
    pub fn sigma(&self) -> f64 {
        (self.bound * (1.0 - self.bound) / self.trials.max(1) as f64).sqrt()
    }

    pub fn passes(&self) -> bool {
        self.rate() >= self.bound - 3.0 * self.sigma()
    }
}

/// Fraction of forward samples within `2√(D h_t log(1/δ))` of `α_t M`.
pub fn tube_hit_rate(
    density: &ManifoldDensity,
    t: f64,
    delta: f64,
    n_trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<TubeStats> {
    if !(delta > 0.0 && delta < (-2.0f64).exp()) {
        return Err(Error::InvalidConfig(format!("δ must lie in (0, e⁻²), got {delta}")));
    }
    let (a, ht) = schedule_at(t)?;
    let m = density.manifold();
    let dim = m.ambient_dim();
    let radius = 2.0 * (dim as f64 * ht * (1.0 / delta).ln()).sqrt();
    let data_seed = derive_seed(seed, &[1]);
    let noise_seed = derive_seed(seed, &[2]);
    let hit = exec.map(n_trials, |i| {
        let x0 = density.sample_one(data_seed, i as u64);
        let x = perturb(&x0, t, noise_seed, i as u64);
        m.distance_to_scaled(&x, a) <= radius
    });
    Ok(TubeStats {
        hits: hit.iter().filter(|&&b| b).count(),
        trials: n_trials,
        radius,
        bound: 1.0 - delta.powi(dim as i32),
    })
}
