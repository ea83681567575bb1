//! Quadrature evaluation of the noised marginal `p_t`, its score and the
//! posterior mean `E[X₀ | X_t = x]`.
//!
//! All three come from one pass over the data nodes: for node `x0_i` with
//! weight `q_i` the log-kernel is `e_i = ln q_i − ‖x − α_t x0_i‖² / (2h_t)`,
//! and every integral is a ratio of sums of `exp(e_i − max_j e_j)`.

use std::f64::consts::PI;

use crate::density::ManifoldDensity;
use crate::diffusion::{alpha, h};
use crate::error::{Error, Result};
use crate::geometry::{Atlas, EmbeddedManifold};
use crate::linalg::dist_sq;
use crate::par::Execution;
use crate::quadrature::WeightedNodes;
use crate::tol::TOL;
use crate::ScoreField;

/// Default per-angle node count.
pub const DEFAULT_RESOLUTION: usize = 1024;

/// Result of one oracle evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleEval {
    pub log_density: f64,
    pub score: Vec<f64>,
    pub posterior_mean: Vec<f64>,
}

/// Stabilised kernel weights at one `(x, t)`.
#[derive(Debug, Clone)]
pub struct KernelPass {
    pub alpha: f64,
    pub h: f64,
    /// `max_i e_i`.
    pub shift: f64,
    /// `exp(e_i − shift)` per node.
    pub weights: Vec<f64>,
    pub sum: f64,
}

/// Partition-of-unity values of every data node, node-major.
#[derive(Debug, Clone)]
pub struct NodePartition {
    pub charts: usize,
    pub rho: Vec<f64>,
    /// Chart masses `m_k = Σ_i ρ_k(x0_i) q_i`.
    pub mass: Vec<f64>,
}

impl NodePartition {
    pub fn rho(&self, node: usize, k: usize) -> f64 {
        self.rho[node * self.charts + k]
    }
}

/// Per-chart restricted posterior means from one shared kernel pass.
#[derive(Debug, Clone)]
pub struct ChartPass {
    pub alpha: f64,
    pub h: f64,
    /// `ln A_k` with `A_k = Σ_i ρ_k(x0_i) q_i exp(−‖x − α x0_i‖²/(2h))`.
    pub log_mass: Vec<f64>,
    /// `y_k = E_{μ_k}[X₀ | X_t = x]`.
    pub means: Vec<Vec<f64>>,
}

/// Exact score field of the noised data law, evaluated by quadrature.
#[derive(Debug, Clone)]
pub struct Oracle {
    density: ManifoldDensity,
    nodes: WeightedNodes,
    log_q: Vec<f64>,
    resolution: usize,
}

impl Oracle {
    pub fn new(density: ManifoldDensity, resolution: usize) -> Result<Self> {
        let nodes = density.data_nodes(resolution)?;
        let log_q = nodes.weights.iter().map(|w| w.ln()).collect();
        Ok(Self { density, nodes, log_q, resolution })
    }

    pub fn density(&self) -> &ManifoldDensity {
        &self.density
    }

    pub fn manifold(&self) -> &EmbeddedManifold {
        self.density.manifold()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Data nodes `x0_i` with weights `q_i` (summing to one).
    pub fn nodes(&self) -> &WeightedNodes {
        &self.nodes
    }

    fn check(&self, x: &[f64], t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidTime(t));
        }
        let d = self.manifold().ambient_dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        Ok(())
    }

    /// Shared log-sum-exp pass.
    pub fn kernel_pass(&self, x: &[f64], t: f64) -> Result<KernelPass> {
        self.check(x, t)?;
        let (a, ht) = (alpha(t), h(t));
        let inv = 0.5 / ht;
        let mut e: Vec<f64> = Vec::with_capacity(self.nodes.len());
        let mut shift = f64::NEG_INFINITY;
        for (i, (x0, _)) in self.nodes.iter().enumerate() {
            let d2: f64 = x.iter().zip(x0).map(|(xi, yi)| (xi - a * yi).powi(2)).sum();
            let v = self.log_q[i] - d2 * inv;
            shift = shift.max(v);
            e.push(v);
        }
        let mut sum = 0.0;
        for v in &mut e {
            *v = (*v - shift).exp();
            sum += *v;
        }
        let pass = KernelPass { alpha: a, h: ht, shift, weights: e, sum };
        let log_density = self.log_density_from(&pass);
        if log_density < TOL.log_density_floor {
            return Err(Error::Underflow { log_density });
        }
        Ok(pass)
    }

    fn log_density_from(&self, pass: &KernelPass) -> f64 {
        let d = self.manifold().ambient_dim() as f64;
        -0.5 * d * (2.0 * PI * pass.h).ln() + pass.shift + pass.sum.ln()
    }

    pub fn evaluate(&self, x: &[f64], t: f64) -> Result<OracleEval> {
        let pass = self.kernel_pass(x, t)?;
        let dim = x.len();
        let mut mean = vec![0.0; dim];
        let mut grad = vec![0.0; dim];
        for ((x0, _), w) in self.nodes.iter().zip(&pass.weights) {
            for j in 0..dim {
                mean[j] += w * x0[j];
                grad[j] += w * (pass.alpha * x0[j] - x[j]);
            }
        }
        let inv = 1.0 / pass.sum;
        Ok(OracleEval {
            log_density: self.log_density_from(&pass),
            score: grad.iter().map(|g| g * inv / pass.h).collect(),
            posterior_mean: mean.iter().map(|m| m * inv).collect(),
        })
    }

    pub fn log_marginal_density(&self, x: &[f64], t: f64) -> Result<f64> {
        let pass = self.kernel_pass(x, t)?;
        Ok(self.log_density_from(&pass))
    }

    pub fn marginal_density(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.log_marginal_density(x, t)?.exp())
    }

    /// `∇ log p_t(x)`.
    pub fn score_at(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.evaluate(x, t)?.score)
    }

    pub fn posterior_mean(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.evaluate(x, t)?.posterior_mean)
    }

    /// Evaluate a batch of points at a common time.
    pub fn batch(&self, points: &[Vec<f64>], t: f64, exec: Execution) -> Vec<Result<OracleEval>> {
        exec.map(points.len(), |i| self.evaluate(&points[i], t))
    }

    /// Partition-of-unity values at every data node.
    pub fn partition(&self, atlas: &Atlas) -> Result<NodePartition> {
        let charts = atlas.len();
        let mut rho = Vec::with_capacity(self.nodes.len() * charts);
        let mut mass = vec![0.0; charts];
        for (x0, q) in self.nodes.iter() {
            let r = atlas.partition_of_unity(x0)?;
            for (k, v) in r.iter().enumerate() {
                mass[k] += v * q;
            }
            rho.extend(r);
        }
        Ok(NodePartition { charts, rho, mass })
    }

    /// Chart-restricted kernel masses and posterior means, each chart with
    /// its own log-sum-exp shift.
    pub fn chart_pass(&self, part: &NodePartition, x: &[f64], t: f64) -> Result<ChartPass> {
        self.check(x, t)?;
        for (k, m) in part.mass.iter().enumerate() {
            if *m < TOL.empty_chart {
                return Err(Error::EmptyChart { chart: k, mass: *m });
            }
        }
        let (a, ht) = (alpha(t), h(t));
        let inv = 0.5 / ht;
        let dim = x.len();
        let e: Vec<f64> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, (x0, _))| {
                let d2: f64 = x.iter().zip(x0).map(|(xi, yi)| (xi - a * yi).powi(2)).sum();
                self.log_q[i] - d2 * inv
            })
            .collect();
        let mut log_mass = Vec::with_capacity(part.charts);
        let mut means = Vec::with_capacity(part.charts);
        for k in 0..part.charts {
            let shift = e
                .iter()
                .enumerate()
                .filter(|(i, _)| part.rho(*i, k) > 0.0)
                .map(|(i, v)| v + part.rho(i, k).ln())
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            let mut y = vec![0.0; dim];
            for (i, (x0, _)) in self.nodes.iter().enumerate() {
                let r = part.rho(i, k);
                if r > 0.0 {
                    let w = (e[i] + r.ln() - shift).exp();
                    sum += w;
                    for j in 0..dim {
                        y[j] += w * x0[j];
                    }
                }
            }
            log_mass.push(shift + sum.ln());
            means.push(y.iter().map(|v| v / sum).collect());
        }
        Ok(ChartPass { alpha: a, h: ht, log_mass, means })
    }

    /// `E_{μ_k}[X₀ | X_t = x]` for one chart.
    pub fn chart_restricted_posterior_mean(&self, atlas: &Atlas, x: &[f64], t: f64, k: usize) -> Result<Vec<f64>> {
        let part = self.partition(atlas)?;
        Ok(self.chart_pass(&part, x, t)?.means.swap_remove(k))
    }
}

impl ScoreField for Oracle {
    fn ambient_dim(&self) -> usize {
        self.manifold().ambient_dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.score_at(x, t)
    }
}

/// Log-density of `N(mean, var·I)` at `x`.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], var: f64) -> f64 {
    -0.5 * x.len() as f64 * (2.0 * PI * var).ln() - 0.5 * dist_sq(x, mean) / var
}
