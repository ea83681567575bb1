//! ReLU score networks, the time-switched composition, the denoising
//! score-matching loss and its trainer.

pub mod checkpoint;
pub mod loss;
pub mod network;
pub mod switch;
pub mod train;

pub use loss::{dsm_loss, score_l2_error, LossDraw, ScoreError, TimeSampling};
pub use network::{chart_indicator, ChartFeatures, OutputScale, ReluNetwork};
pub use switch::{time_switch, TimeSwitchedScore};
pub use train::{loss_gradient, train, TrainConfig, TrainReport};

use crate::error::Result;
use crate::ScoreField;

/// Architecture of a freshly initialised score model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub width: usize,
    pub hidden: usize,
    pub output_scale: OutputScale,
    pub weight_bound: f64,
    pub clip_const: f64,
    /// `(t_large, t_small)` for the time-switched composition.
    pub time_switch: Option<(f64, f64)>,
    pub features: Option<ChartFeatures>,
}

impl ModelSpec {
    /// Defaults: 3 hidden layers of width 128, `B = 100`,
    /// `C_R = 10·√max(1, log(1/t0))`.
    pub fn new(t0: f64) -> Self {
        Self {
            width: 128,
            hidden: 3,
            output_scale: OutputScale::default(),
            weight_bound: 100.0,
            clip_const: default_clip(t0),
            time_switch: None,
            features: None,
        }
    }

    pub fn build(&self, dim: usize, seed: u64) -> Result<ScoreModel> {
        let net = |s: u64| -> Result<ReluNetwork> {
            Ok(ReluNetwork::new(dim, self.width, self.hidden, self.features.clone(), s)?
                .with_output_scale(self.output_scale)
                .with_clip(self.clip_const)
                .with_weight_bound(self.weight_bound))
        };
        Ok(match self.time_switch {
            None => ScoreModel::Plain(net(seed)?),
            Some((tl, ts)) => ScoreModel::TimeSwitched(TimeSwitchedScore::new(
                net(crate::rng::derive_seed(seed, &[0]))?,
                net(crate::rng::derive_seed(seed, &[1]))?,
                tl,
                ts,
            )?),
        })
    }
}

/// `C_R = 10·√max(1, log(1/t0))`.
pub fn default_clip(t0: f64) -> f64 {
    10.0 * (1.0f64).max((1.0 / t0).ln()).sqrt()
}

/// A trainable score field.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreModel {
    Plain(ReluNetwork),
    TimeSwitched(TimeSwitchedScore),
}

impl ScoreModel {
    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::Plain(n) => n.ambient_dim(),
            ScoreModel::TimeSwitched(s) => s.small.ambient_dim(),
        }
    }

    pub fn forward(&self, x: &[f64], t: f64) -> Vec<f64> {
        match self {
            ScoreModel::Plain(n) => n.forward(x, t),
            ScoreModel::TimeSwitched(s) => s.forward(x, t),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            ScoreModel::Plain(n) => n.params().len(),
            ScoreModel::TimeSwitched(s) => s.small.params().len() + s.large.params().len(),
        }
    }

    /// All parameters, concatenated (`small` before `large`).
    pub fn params(&self) -> Vec<f64> {
        match self {
            ScoreModel::Plain(n) => n.params().to_vec(),
            ScoreModel::TimeSwitched(s) => [s.small.params(), s.large.params()].concat(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_params(), "parameter count mismatch");
        match self {
            ScoreModel::Plain(n) => n.params_mut().copy_from_slice(p),
            ScoreModel::TimeSwitched(s) => {
                let k = s.small.params().len();
                s.small.params_mut().copy_from_slice(&p[..k]);
                s.large.params_mut().copy_from_slice(&p[k..]);
            }
        }
    }

    pub fn clamp(&mut self) {
        match self {
            ScoreModel::Plain(n) => n.clamp(),
            ScoreModel::TimeSwitched(s) => {
                s.small.clamp();
                s.large.clamp();
            }
        }
    }

    pub fn max_abs_param(&self) -> f64 {
        match self {
            ScoreModel::Plain(n) => n.max_abs_param(),
            ScoreModel::TimeSwitched(s) => s.small.max_abs_param().max(s.large.max_abs_param()),
        }
    }

    pub fn weight_bound(&self) -> f64 {
        match self {
            ScoreModel::Plain(n) => n.weight_bound(),
            ScoreModel::TimeSwitched(s) => s.small.weight_bound().min(s.large.weight_bound()),
        }
    }

    /// Adds `∂/∂θ ⟨g(s), s(x,t)⟩` to `grad`, where `g` maps the model output
    /// to the upstream gradient, and returns the output.
    pub fn backward(&self, x: &[f64], t: f64, upstream: &dyn Fn(&[f64]) -> Vec<f64>, grad: &mut [f64]) -> Vec<f64> {
        match self {
            ScoreModel::Plain(n) => n.backward(x, t, upstream, grad),
            ScoreModel::TimeSwitched(s) => {
                let (a, b) = s.weights(t);
                let out = s.forward(x, t);
                let g = upstream(&out);
                let k = s.small.params().len();
                let (gs, gl) = grad.split_at_mut(k);
                if a > 0.0 {
                    let ga: Vec<f64> = g.iter().map(|v| a * v).collect();
                    s.small.backward(x, t, &|_| ga.clone(), gs);
                }
                if b > 0.0 {
                    let gb: Vec<f64> = g.iter().map(|v| b * v).collect();
                    s.large.backward(x, t, &|_| gb.clone(), gl);
                }
                out
            }
        }
    }
}

impl ScoreField for ScoreModel {
    fn ambient_dim(&self) -> usize {
        self.dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.forward(x, t))
    }
}

impl ScoreField for ReluNetwork {
    fn ambient_dim(&self) -> usize {
        ReluNetwork::ambient_dim(self)
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.forward(x, t))
    }
}
