//! Sample-size sweep: train on `n` points, sample, and measure `W₁` and the
//! score `L²` error for every `(n, repeat)` cell.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::wasserstein::wasserstein1_with;
use crate::density::ManifoldDensity;
use crate::error::{Error, Result};
use crate::model::{score_l2_error, train, ModelSpec, TrainConfig};
use crate::oracle::Oracle;
use crate::par::Execution;
use crate::rng::derive_seed;
use crate::sampler::{backward_sample, SamplerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RateSettings {
    pub n_grid: Vec<usize>,
    pub repeats: usize,
    /// Size `m` of the generated and the held-out evaluation clouds.
    pub eval_size: usize,
    /// Monte-Carlo draws for the score error (0 disables it).
    pub score_mc: usize,
    /// Also sample with the oracle score in every cell.
    pub oracle_baseline: bool,
    pub model: ModelSpec,
    /// Template; `seed` is replaced per cell.
    pub train: TrainConfig,
    /// Template; `seed` is replaced per cell.
    pub sampler: SamplerConfig,
    pub seed: u64,
}

/// One `(n, repeat)` cell. Metrics are `None` when the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub n: usize,
    pub repeat: usize,
    pub seed: u64,
    pub w1: Option<f64>,
    pub score_l2: Option<f64>,
    pub score_l2_se: Option<f64>,
    pub oracle_w1: Option<f64>,
    pub aborted: usize,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Mean and standard error over the successful repeats at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub n: usize,
    pub ok: usize,
    pub w1_mean: f64,
    pub w1_se: f64,
    pub score_l2_mean: Option<f64>,
    pub score_l2_se: Option<f64>,
    pub oracle_w1_mean: Option<f64>,
    pub oracle_w1_se: Option<f64>,
}

/// Least-squares fit of `log W₁ = a + b log n` over the cell values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci95: (f64, f64),
    pub points: usize,
    pub excluded_n: Option<usize>,
}

impl SlopeFit {
    /// Upper end of the 95% interval is below zero.
    pub fn negative_with_confidence(&self) -> bool {
        self.ci95.1 < 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub manifold: String,
    pub intrinsic_dim: usize,
    /// Declared Hölder exponent; `None` for smooth densities (`β = ∞`).
    pub holder_beta: Option<f64>,
    pub cells: Vec<RateCell>,
    pub summary: Vec<RateSummary>,
    /// `None` when fewer than three usable points (or one `n`) remain.
    pub fit: Option<SlopeFit>,
    pub fit_note: Option<String>,
    /// `−(β+1)/(d+2β)`, for comparison only.
    pub w1_exponent: f64,
    /// `−2β/(d+2β)`, for comparison only.
    pub score_exponent: f64,
    /// Consecutive means satisfy `m_{i+1} ≤ m_i + √(se_i² + se_{i+1}²)`.
    pub nonincreasing_within_se: bool,
}

impl RateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Flat CSV: `n,repeat,w1,score_l2,wall_seconds`.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |v| format!("{v:.16e}"));
        let mut s = String::from("n,repeat,w1,score_l2,wall_seconds\n");
        for c in &self.cells {
            s.push_str(&format!("{},{},{},{},{:.3}\n", c.n, c.repeat, f(c.w1), f(c.score_l2), c.wall_seconds));
        }
        s
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn opt_mean_se(v: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let (m, s) = mean_se(&v);
    (Some(m), Some(s))
}

fn run_cell(
    density: &ManifoldDensity,
    oracle: &Oracle,
    s: &RateSettings,
    n: usize,
    repeat: usize,
    exec: Execution,
) -> RateCell {
    let seed = derive_seed(s.seed, &[n as u64, repeat as u64]);
    let start = Instant::now();
    let mut cell = RateCell {
        n,
        repeat,
        seed,
        w1: None,
        score_l2: None,
        score_l2_se: None,
        oracle_w1: None,
        aborted: 0,
        error: None,
        wall_seconds: 0.0,
    };
    let eval = density.sample(s.eval_size, derive_seed(seed, &[3]), exec);
    let result = (|| -> Result<()> {
        let data = density.sample(n, derive_seed(seed, &[1]), exec);
        let model = s.model.build(density.manifold().ambient_dim(), derive_seed(seed, &[2]))?;
        let mut tc = s.train.clone();
        tc.seed = derive_seed(seed, &[4]);
        let (model, _) = train(&data, None, model, &tc, exec)?;
        let mut sc = s.sampler.clone();
        sc.seed = derive_seed(seed, &[5]);
        let run = backward_sample(&model, &sc, s.eval_size, exec)?;
        cell.aborted = run.aborted;
        let gen = run.cloud;
        let ref_cloud = if gen.len() < eval.len() { eval.subsample(gen.len(), seed) } else { eval.clone() };
        cell.w1 = Some(wasserstein1_with(&gen, &ref_cloud, exec)?);
        if s.score_mc > 0 {
            let e = score_l2_error(&model, oracle, density, &tc.schedule, s.score_mc, derive_seed(seed, &[6]), exec)?;
            cell.score_l2 = Some(e.mean);
            cell.score_l2_se = Some(e.std_error);
        }
        Ok(())
    })();
    if let Err(e) = result {
        cell.error = Some(format!("{}: {e}", e.kind()));
        cell.w1 = None;
    }
    if s.oracle_baseline {
        let mut sc = s.sampler.clone();
        sc.seed = derive_seed(seed, &[7]);
        let base = backward_sample(oracle, &sc, s.eval_size, exec).and_then(|run| {
            let r = if run.cloud.len() < eval.len() { eval.subsample(run.cloud.len(), seed) } else { eval.clone() };
            wasserstein1_with(&run.cloud, &r, exec)
        });
        match base {
            Ok(w) => cell.oracle_w1 = Some(w),
            Err(e) if cell.error.is_none() => cell.error = Some(format!("oracle baseline {}: {e}", e.kind())),
            Err(_) => {}
        }
    }
    cell.wall_seconds = start.elapsed().as_secs_f64();
    cell
}

/// `−(β+1)/(d+2β)`, with the `β → ∞` limit `−1/2`.
pub fn w1_exponent(d: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        -0.5
    } else {
        -(beta + 1.0) / (d + 2.0 * beta)
    }
}

/// `−2β/(d+2β)`, with the `β → ∞` limit `−1`.
pub fn score_exponent(d: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        -1.0
    } else {
        -2.0 * beta / (d + 2.0 * beta)
    }
}

/// Least squares on `(log n, log w)`; `None` with a reason when degenerate.
pub fn fit_slope(points: &[(usize, f64)]) -> std::result::Result<SlopeFit, String> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, w)| *w > 0.0 && w.is_finite())
        .map(|&(n, w)| ((n as f64).ln(), w.ln()))
        .collect();
    let distinct = {
        let mut ns: Vec<usize> = points.iter().map(|p| p.0).collect();
        ns.sort_unstable();
        ns.dedup();
        ns.len()
    };
    if distinct < 2 || pts.len() < 3 {
        return Err(format!("slope undefined: {} usable points over {distinct} distinct n", pts.len()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = k - 2.0;
    let slope_se = (rss / dof / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, dof).map_err(|e| e.to_string())?.inverse_cdf(0.975);
    Ok(SlopeFit {
        slope,
        intercept,
        slope_se,
        ci95: (slope - q * slope_se, slope + q * slope_se),
        points: pts.len(),
        excluded_n: None,
    })
}

/// Run every `(n, repeat)` cell, summarise, and fit the `W₁` slope.
pub fn rate_experiment(density: &ManifoldDensity, oracle: &Oracle, s: &RateSettings, exec: Execution) -> Result<RateReport> {
    if s.n_grid.is_empty() || s.repeats == 0 || s.eval_size == 0 {
        return Err(Error::InvalidConfig("rate grid, repeats and eval size must be nonempty".into()));
    }
    let mut grid = s.n_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let jobs: Vec<(usize, usize)> = grid.iter().flat_map(|&n| (0..s.repeats).map(move |r| (n, r))).collect();
    // cells fan out; each cell runs its inner loops sequentially
    let inner = if exec.is_parallel() && jobs.len() > 1 { Execution::Sequential } else { exec };
    let cells = exec.map(jobs.len(), |j| run_cell(density, oracle, s, jobs[j].0, jobs[j].1, inner));

    let mut summary = Vec::new();
    for &n in &grid {
        let row: Vec<&RateCell> = cells.iter().filter(|c| c.n == n).collect();
        let w: Vec<f64> = row.iter().filter_map(|c| c.w1).collect();
        let (w1_mean, w1_se) = if w.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(&w) };
        let (score_l2_mean, score_l2_se) = opt_mean_se(row.iter().filter_map(|c| c.score_l2).collect());
        let (oracle_w1_mean, oracle_w1_se) = opt_mean_se(row.iter().filter_map(|c| c.oracle_w1).collect());
        summary.push(RateSummary { n, ok: w.len(), w1_mean, w1_se, score_l2_mean, score_l2_se, oracle_w1_mean, oracle_w1_se });
    }

    let nonincreasing_within_se = summary.windows(2).all(|p| {
        let joint = (p[0].w1_se.powi(2) + p[1].w1_se.powi(2)).sqrt();
        p[1].w1_mean <= p[0].w1_mean + joint
    });

    let excluded = summary.first().filter(|f| summary.len() > 2 && f.w1_se > 0.5 * f.w1_mean).map(|f| f.n);
    let points: Vec<(usize, f64)> =
        cells.iter().filter(|c| Some(c.n) != excluded).filter_map(|c| c.w1.map(|w| (c.n, w))).collect();
    let (fit, fit_note) = match fit_slope(&points) {
        Ok(mut f) => {
            f.excluded_n = excluded;
            let note = excluded.map(|n| format!("n = {n} excluded: standard error above half its mean"));
            (Some(f), note)
        }
        Err(msg) => (None, Some(msg)),
    };

    let m = density.manifold();
    let d = m.intrinsic_dim() as f64;
    let beta = density.holder_beta();
    Ok(RateReport {
        manifold: m.name().to_string(),
        intrinsic_dim: m.intrinsic_dim(),
        holder_beta: beta.is_finite().then_some(beta),
        cells,
        summary,
        fit,
        fit_note,
        w1_exponent: w1_exponent(d, beta),
        score_exponent: score_exponent(d, beta),
        nonincreasing_within_se,
    })
}
