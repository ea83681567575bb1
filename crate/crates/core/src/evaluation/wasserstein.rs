use statrs::function::gamma::ln_gamma;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::linalg::{dist, dot, norm};
use crate::par::Execution;
use crate::rng::{gaussian_vec, stream};

/// Largest cloud size accepted by the exact solver.
pub const EXACT_LIMIT: usize = 4096;

/// Exact `W₁` between equal-size empirical measures (Euclidean ground cost).
pub fn wasserstein1(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    wasserstein1_with(a, b, Execution::auto())
}

pub fn wasserstein1_with(a: &PointCloud, b: &PointCloud, exec: Execution) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let n = a.len();
    if n > EXACT_LIMIT {
        return Err(Error::TooLarge { size: n, limit: EXACT_LIMIT });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let rows = exec.map(n, |i| (0..n).map(|j| dist(a.row(i), b.row(j))).collect::<Vec<_>>());
    let cost: Vec<f64> = rows.into_iter().flatten().collect();
    let assignment = hungarian(&cost, n);
    Ok(assignment_cost(&cost, n, &assignment) / n as f64)
}

/// `Σ_i c(i, σ(i))` summed in row order.
pub fn assignment_cost(cost: &[f64], n: usize, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum()
}

/// Minimum-cost perfect matching on a dense `n × n` cost matrix by shortest
/// augmenting paths with potentials. Returns the column assigned to each row.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// `E|θ₁|` for `θ` uniform on the unit sphere of `R^D`.
pub fn mean_abs_coordinate(dim: usize) -> f64 {
    let d = dim as f64;
    (ln_gamma(d / 2.0) - ln_gamma((d + 1.0) / 2.0)).exp() / std::f64::consts::PI.sqrt()
}

/// 1-D `W₁` between two samples via their quantile functions.
pub fn wasserstein1_1d(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut last = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let ua = (i + 1) as f64 / na;
        let ub = (j + 1) as f64 / nb;
        let next = ua.min(ub);
        total += (next - last) * (a[i] - b[j]).abs();
        last = next;
        if ua <= ub {
            i += 1;
        }
        if ub <= ua {
            j += 1;
        }
    }
    total
}

/// Sliced `W₁`: mean 1-D `W₁` over `n_proj` random directions, rescaled by
/// `1/E|θ₁|` so that it is unbiased for a pure translation.
pub fn sliced_wasserstein1(a: &PointCloud, b: &PointCloud, n_proj: usize, seed: u64) -> Result<f64> {
    sliced_wasserstein1_with(a, b, n_proj, seed, Execution::auto())
}

pub fn sliced_wasserstein1_with(
    a: &PointCloud,
    b: &PointCloud,
    n_proj: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if a.is_empty() || b.is_empty() || n_proj == 0 {
        return Ok(0.0);
    }
    let dim = a.dim();
    let per = exec.map(n_proj, |k| {
        let mut r = stream(seed, k as u64);
        let theta = loop {
            let g = gaussian_vec(&mut r, dim);
            let n = norm(&g);
            if n > 1e-12 {
                break g.iter().map(|v| v / n).collect::<Vec<_>>();
            }
        };
        let pa = a.rows().map(|x| dot(x, &theta)).collect();
        let pb = b.rows().map(|x| dot(x, &theta)).collect();
        wasserstein1_1d(pa, pb)
    });
    let mean = per.iter().sum::<f64>() / n_proj as f64;
    Ok(mean / mean_abs_coordinate(dim))
}
