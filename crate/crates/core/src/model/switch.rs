use super::network::ReluNetwork;
use crate::error::{Error, Result};

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// `(SW_small(t), SW_large(t))`, a piecewise-linear partition of unity that
/// is `(1, 0)` up to `t_large` and `(0, 1)` from `t_small` on.
pub fn time_switch(t: f64, t_large: f64, t_small: f64) -> Result<(f64, f64)> {
    if !(t_large < t_small) {
        return Err(Error::BadThresholds { t_large, t_small });
    }
    let gap = t_small - t_large;
    // the formula only sees t through clamp(t, t_large, t_small); clamping
    // first makes both plateaus exact in floating point
    let t = t.clamp(t_large, t_small);
    let inner = relu(t - t_large) - relu(t - t_small);
    let small = relu(gap - inner) / gap;
    let large = relu(inner) / gap;
    Ok((small, large))
}

/// `s̃ = SW_small · s_small + SW_large · s_large`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSwitchedScore {
    pub small: ReluNetwork,
    pub large: ReluNetwork,
    pub t_large: f64,
    pub t_small: f64,
}

impl TimeSwitchedScore {
    pub fn new(small: ReluNetwork, large: ReluNetwork, t_large: f64, t_small: f64) -> Result<Self> {
        if !(t_large < t_small) {
            return Err(Error::BadThresholds { t_large, t_small });
        }
        if small.ambient_dim() != large.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: small.ambient_dim(), got: large.ambient_dim() });
        }
        Ok(Self { small, large, t_large, t_small })
    }

    pub fn weights(&self, t: f64) -> (f64, f64) {
        time_switch(t, self.t_large, self.t_small).expect("thresholds validated at construction")
    }

    pub fn forward(&self, x: &[f64], t: f64) -> Vec<f64> {
        let (a, b) = self.weights(t);
        if b == 0.0 {
            return self.small.forward(x, t);
        }
        if a == 0.0 {
            return self.large.forward(x, t);
        }
        let s = self.small.forward(x, t);
        let l = self.large.forward(x, t);
        s.iter().zip(&l).map(|(u, v)| a * u + b * v).collect()
    }
}
