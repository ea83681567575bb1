use serde::{Deserialize, Serialize};

use super::loss::{dsm_loss, LossDraw, TimeSampling};
use super::ScoreModel;
use crate::diffusion::DiffusionSchedule;
use crate::error::{Error, Result};
use crate::evaluation::PointCloud;
use crate::linalg::dist_sq;
use crate::par::{chunked_sum, Execution};
use crate::rng::{derive_seed, stream};
use rand::seq::SliceRandom;

/// Optimizer and sampling settings for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Time strata per example.
    pub k_times: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Cosine-decay the step size to zero over the run.
    pub cosine_decay: bool,
    pub seed: u64,
    pub schedule: DiffusionSchedule,
    pub time_sampling: TimeSampling,
    /// Items per gradient-reduction chunk.
    pub chunk: usize,
}

impl TrainConfig {
    pub fn new(schedule: DiffusionSchedule, epochs: usize, seed: u64) -> Self {
        Self {
            batch_size: 64,
            k_times: 4,
            epochs,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            cosine_decay: true,
            seed,
            schedule,
            time_sampling: TimeSampling::Uniform,
            chunk: 32,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.k_times == 0 || self.chunk == 0 {
            return Err(Error::InvalidConfig("batch size, K and chunk must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("invalid optimizer hyperparameters".into()));
        }
        Ok(())
    }
}

/// Per-epoch loss trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// Held-out DSM loss after each epoch (`NaN` when no held-out set).
    pub heldout_loss: Vec<f64>,
    pub steps: usize,
}

impl TrainReport {
    /// CSV with header `epoch,train_loss,heldout_loss`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,heldout_loss\n");
        for (e, (a, b)) in self.train_loss.iter().zip(&self.heldout_loss).enumerate() {
            s.push_str(&format!("{},{:.16e},{:.16e}\n", e + 1, a, b));
        }
        s
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.adam_eps);
        }
    }
}

/// Gradient of the batch DSM loss; the loss itself is returned in the last
/// slot.
fn batch_gradient(
    model: &ScoreModel,
    data: &PointCloud,
    batch: &[usize],
    cfg: &TrainConfig,
    seed: u64,
    exec: Execution,
) -> Vec<f64> {
    let np = model.n_params();
    let k = cfg.k_times;
    let n = batch.len() * k;
    let inv = 1.0 / n as f64;
    chunked_sum(exec, n, cfg.chunk, np + 1, |i, acc| {
        let (b, s) = (i / k, i % k);
        let d = LossDraw::new(&cfg.schedule, k, cfg.time_sampling, seed, b as u64, s, data.dim());
        let x = d.noised(data.row(batch[b]));
        let target = d.target();
        let (grad, last) = acc.split_at_mut(np);
        let out = model.backward(
            &x,
            d.t,
            &|out: &[f64]| {
                out.iter().zip(&target).map(|(o, y)| 2.0 * d.weight * inv * (o - y)).collect()
            },
            grad,
        );
        last[0] += d.weight * inv * dist_sq(&out, &target);
    })
}

/// Full-batch DSM loss and its parameter gradient, with the same draws as
/// [`dsm_loss`] for the same seed.
pub fn loss_gradient(
    model: &ScoreModel,
    data: &PointCloud,
    cfg: &TrainConfig,
    seed: u64,
    exec: Execution,
) -> (f64, Vec<f64>) {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut g = batch_gradient(model, data, &all, cfg, seed, exec);
    let loss = g.pop().unwrap_or(f64::NAN);
    (loss, g)
}

/// Adam on the empirical DSM loss with parameter clamping after every step.
pub fn train(
    data: &PointCloud,
    heldout: Option<&PointCloud>,
    mut model: ScoreModel,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<(ScoreModel, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("empty training set".into()));
    }
    if data.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: data.dim() });
    }
    let steps_per_epoch = data.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut adam = Adam::new(model.n_params());
    let mut report = TrainReport { train_loss: Vec::new(), heldout_loss: Vec::new(), steps: 0 };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let heldout_seed = derive_seed(cfg.seed, &[u64::MAX]);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream(derive_seed(cfg.seed, &[0, epoch as u64]), 0));
        let mut epoch_loss = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let seed = derive_seed(cfg.seed, &[1, epoch as u64, step as u64]);
            let mut g = batch_gradient(&model, data, batch, cfg, seed, exec);
            let loss = g.pop().unwrap_or(f64::NAN);
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::DivergenceDetected { epoch });
            }
            epoch_loss += loss * batch.len() as f64;
            let lr = if cfg.cosine_decay {
                0.5 * cfg.learning_rate * (1.0 + (std::f64::consts::PI * report.steps as f64 / total as f64).cos())
            } else {
                cfg.learning_rate
            };
            let mut p = model.params();
            adam.update(&mut p, &g, lr, cfg);
            model.set_params(&p);
            model.clamp();
            report.steps += 1;
        }
        report.train_loss.push(epoch_loss / data.len() as f64);
        let held = match heldout {
            Some(h) => dsm_loss(h, &model, &cfg.schedule, cfg.k_times, cfg.time_sampling, heldout_seed, exec)?,
            None => f64::NAN,
        };
        if heldout.is_some() && !held.is_finite() {
            return Err(Error::DivergenceDetected { epoch });
        }
        report.heldout_loss.push(held);
    }
    Ok((model, report))
}
