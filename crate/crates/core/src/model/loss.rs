use crate::density::ManifoldDensity;
use crate::diffusion::{alpha, h, perturb, DiffusionSchedule};
use crate::error::{Error, Result};
use crate::evaluation::PointCloud;
use crate::linalg::dist_sq;
use crate::oracle::Oracle;
use crate::par::Execution;
use crate::rng::{derive_seed, gaussian, stream, uniform};
use crate::ScoreField;

/// How loss times are drawn within each of the `K` strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimeSampling {
    /// Stratified uniform on `[t0, T]`.
    #[default]
    Uniform,
    /// Stratified uniform in `log t`, reweighted by the density ratio so the
    /// estimator targets the same loss.
    LogUniformWeighted,
}

/// One `(t, z)` draw of the loss integrand with its importance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDraw {
    pub t: f64,
    pub weight: f64,
    pub z: Vec<f64>,
}

impl LossDraw {
    /// Draw for stratum `k` of example `example` from stream `(seed, ·)`.
    pub fn new(
        schedule: &DiffusionSchedule,
        k_times: usize,
        sampling: TimeSampling,
        seed: u64,
        example: u64,
        k: usize,
        dim: usize,
    ) -> Self {
        let mut r = stream(seed, example * k_times as u64 + k as u64);
        let u = (k as f64 + uniform(&mut r)) / k_times as f64;
        let (t0, t1) = (schedule.t0, schedule.t_end);
        let (t, weight) = match sampling {
            TimeSampling::Uniform => (t0 + (t1 - t0) * u, 1.0),
            TimeSampling::LogUniformWeighted => {
                let span = (t1 / t0).ln();
                let t = t0 * (span * u).exp();
                (t, t * span / (t1 - t0))
            }
        };
        let z = (0..dim).map(|_| gaussian(&mut r)).collect();
        Self { t, weight, z }
    }

    /// `X_t = α_t x0 + √h_t z`.
    pub fn noised(&self, x0: &[f64]) -> Vec<f64> {
        let (a, s) = (alpha(self.t), h(self.t).sqrt());
        x0.iter().zip(&self.z).map(|(x, z)| a * x + s * z).collect()
    }

    /// Regression target `−(X_t − α_t x0)/h_t = −z/√h_t`.
    pub fn target(&self) -> Vec<f64> {
        let s = h(self.t).sqrt();
        self.z.iter().map(|z| -z / s).collect()
    }
}

/// Monte-Carlo denoising score-matching loss of `s` on `data`, with `K`
/// stratified times per example.
pub fn dsm_loss<S: ScoreField + ?Sized>(
    data: &PointCloud,
    s: &S,
    schedule: &DiffusionSchedule,
    k_times: usize,
    sampling: TimeSampling,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    if data.is_empty() || k_times == 0 {
        return Err(Error::InvalidConfig("loss needs a nonempty batch and K ≥ 1".into()));
    }
    let dim = data.dim();
    let n = data.len() * k_times;
    let terms = exec.try_map(n, |i| {
        let (e, k) = (i / k_times, i % k_times);
        let d = LossDraw::new(schedule, k_times, sampling, seed, e as u64, k, dim);
        let x = d.noised(data.row(e));
        let out = s.score(&x, d.t)?;
        Ok::<f64, Error>(d.weight * dist_sq(&out, &d.target()))
    })?;
    Ok(terms.iter().sum::<f64>() / n as f64)
}

/// Monte-Carlo `L²(p_t)` score error averaged over `t ~ U[t0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreError {
    pub mean: f64,
    pub std_error: f64,
    pub used: usize,
    pub skipped: usize,
}

pub fn score_l2_error<S: ScoreField + ?Sized>(
    s: &S,
    oracle: &Oracle,
    density: &ManifoldDensity,
    schedule: &DiffusionSchedule,
    n_mc: usize,
    seed: u64,
    exec: Execution,
) -> Result<ScoreError> {
    let data_seed = derive_seed(seed, &[11]);
    let noise_seed = derive_seed(seed, &[12]);
    let time_seed = derive_seed(seed, &[13]);
    let terms = exec.map(n_mc, |i| -> Result<Option<f64>> {
        let x0 = density.sample_one(data_seed, i as u64);
        let t = schedule.t0 + (schedule.t_end - schedule.t0) * uniform(&mut stream(time_seed, i as u64));
        let x = perturb(&x0, t, noise_seed, i as u64);
        let exact = match oracle.score_at(&x, t) {
            Ok(v) => v,
            Err(Error::Underflow { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        Ok(Some(dist_sq(&s.score(&x, t)?, &exact)))
    });
    let mut vals = Vec::with_capacity(n_mc);
    let mut skipped = 0;
    for v in terms {
        match v? {
            Some(v) => vals.push(v),
            None => skipped += 1,
        }
    }
    if skipped as f64 > 1e-3 * n_mc as f64 {
        return Err(Error::Underflow { log_density: f64::NEG_INFINITY });
    }
    let n = vals.len().max(1) as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(ScoreError { mean, std_error: (var / n).sqrt(), used: vals.len(), skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EmbeddedManifold;

    struct Conditional {
        x0: Vec<f64>,
    }

    impl ScoreField for Conditional {
        fn ambient_dim(&self) -> usize {
            self.x0.len()
        }
        fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
            Ok(x.iter().zip(&self.x0).map(|(x, y)| -(x - alpha(t) * y) / h(t)).collect())
        }
    }

    struct Zero;
    impl ScoreField for Zero {
        fn ambient_dim(&self) -> usize {
            2
        }
        fn score(&self, x: &[f64], _t: f64) -> Result<Vec<f64>> {
            Ok(vec![0.0; x.len()])
        }
    }

    #[test]
    fn conditional_score_has_zero_loss() {
        let x0 = vec![0.6, -0.8];
        let data = PointCloud::from_rows(2, std::slice::from_ref(&x0));
        let sched = DiffusionSchedule::new(1e-3, 5.0).unwrap();
        let l = dsm_loss(&data, &Conditional { x0 }, &sched, 4, TimeSampling::Uniform, 9, Execution::Sequential).unwrap();
        assert!(l < 1e-20);
    }

    #[test]
    fn zero_score_loss_is_mean_target_norm() {
        let data = PointCloud::from_rows(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let sched = DiffusionSchedule::new(1e-2, 3.0).unwrap();
        let l = dsm_loss(&data, &Zero, &sched, 3, TimeSampling::Uniform, 5, Execution::Sequential).unwrap();
        let mut direct = 0.0;
        for e in 0..2 {
            for k in 0..3 {
                let d = LossDraw::new(&sched, 3, TimeSampling::Uniform, 5, e, k, 2);
                direct += d.z.iter().map(|z| z * z).sum::<f64>() / h(d.t);
            }
        }
        assert!((l - direct / 6.0).abs() < 1e-12 * l);
    }

    #[test]
    fn strata_cover_the_interval() {
        let sched = DiffusionSchedule::new(1e-3, 10.0).unwrap();
        for (k, sampling) in [(0, TimeSampling::Uniform), (3, TimeSampling::LogUniformWeighted)] {
            let d = LossDraw::new(&sched, 4, sampling, 1, 7, k, 2);
            assert!(d.t >= sched.t0 && d.t <= sched.t_end);
        }
    }

    #[test]
    fn oracle_has_zero_score_error() {
        let m = EmbeddedManifold::circle(1.0).unwrap();
        let d = ManifoldDensity::uniform(m, 256).unwrap();
        let o = Oracle::new(d.clone(), 256).unwrap();
        let sched = DiffusionSchedule::new(0.05, 2.0).unwrap();
        let e = score_l2_error(&o, &o, &d, &sched, 50, 3, Execution::Sequential).unwrap();
        assert_eq!(e.mean, 0.0);
    }
}
