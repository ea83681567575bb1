use crate::error::{Error, Result};
use crate::linalg::{self, Frame};
use crate::quadrature::WeightedNodes;
use crate::rng;
use crate::tol::TOL;

use super::manifold::{EmbeddedManifold, ManifoldKind};

/// Greedy net stops once every grid node is this fraction of `r` away from
/// a center, which keeps the normalised bumps bounded below.
const NET_FILL: f64 = 0.75;

/// An exponential chart `U_k = Exp_{x_k}(B(0, r))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub index: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub frame: Frame,
}

/// Finite cover of a manifold by exponential charts with a smooth partition
/// of unity.
#[derive(Debug, Clone, PartialEq)]
pub struct Atlas {
    manifold: EmbeddedManifold,
    charts: Vec<Chart>,
    radius: f64,
    global: bool,
}

/// Compactly supported mollifier `exp(−1/(1−s²))` on `[0, 1)`.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Dense grid used to place chart centers.
fn net_grid(m: &EmbeddedManifold) -> Result<WeightedNodes> {
    let resolution = match m.kind() {
        ManifoldKind::Circle { .. } | ManifoldKind::Sphere { dim: 1, .. } => 720,
        _ => 96,
    };
    match m.quadrature(resolution) {
        Ok(q) => Ok(q),
        Err(Error::Unsupported(_)) => {
            let mut q = WeightedNodes::new(m.ambient_dim());
            let n = 8192;
            for i in 0..n {
                let mut r = rng::stream(0x006e_6574_6772_6964, i as u64);
                q.push(&m.sample_uniform(&mut r), m.volume() / n as f64);
            }
            Ok(q)
        }
        Err(e) => Err(e),
    }
}

impl Atlas {
    /// Cover `m` by charts of radius `r` placed on a greedy farthest-point
    /// net. Linear subspaces get a single global chart.
    pub fn build(m: &EmbeddedManifold, r: f64) -> Result<Self> {
        let limit = m.injectivity_bound();
        if !(r > 0.0 && r < limit) {
            return Err(Error::InvalidRadius { radius: r, limit });
        }
        match m.kind() {
            ManifoldKind::LinearSubspace { basis, .. } => {
                let chart = Chart {
                    index: 0,
                    center: vec![0.0; m.ambient_dim()],
                    radius: r,
                    frame: basis.clone(),
                };
                return Ok(Self { manifold: m.clone(), charts: vec![chart], radius: r, global: true });
            }
            ManifoldKind::PointSet { points } => {
                return Self::from_centers(m, points.clone(), r);
            }
            _ => {}
        }
        let grid = net_grid(m)?;
        let n = grid.len();
        let mut centers: Vec<Vec<f64>> = vec![grid.node(0).to_vec()];
        let mut nearest: Vec<f64> = (0..n).map(|i| m.geodesic_distance(grid.node(0), grid.node(i))).collect();
        loop {
            let (far, gap) = nearest
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
            if gap <= NET_FILL * r {
                break;
            }
            let c = grid.node(far).to_vec();
            for (i, slot) in nearest.iter_mut().enumerate() {
                *slot = slot.min(m.geodesic_distance(&c, grid.node(i)));
            }
            centers.push(c);
        }
        Self::from_centers(m, centers, r)
    }

    /// Atlas with prescribed centers (each must lie on `m`).
    pub fn from_centers(m: &EmbeddedManifold, centers: Vec<Vec<f64>>, r: f64) -> Result<Self> {
        let limit = m.injectivity_bound();
        if !(r > 0.0 && r < limit) {
            return Err(Error::InvalidRadius { radius: r, limit });
        }
        if centers.is_empty() {
            return Err(Error::InvalidManifold("atlas needs at least one chart".into()));
        }
        let mut charts = Vec::with_capacity(centers.len());
        for (index, center) in centers.into_iter().enumerate() {
            m.check_on_manifold(&center, TOL.on_manifold)?;
            let frame = m.tangent_frame(&center)?;
            charts.push(Chart { index, center, radius: r, frame });
        }
        let global = matches!(m.kind(), ManifoldKind::LinearSubspace { .. }) && charts.len() == 1;
        Ok(Self { manifold: m.clone(), charts, radius: r, global })
    }

    pub fn manifold(&self) -> &EmbeddedManifold {
        &self.manifold
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn chart(&self, k: usize) -> &Chart {
        &self.charts[k]
    }

    /// Number of charts `C_M`.
    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Whether this is the single global chart of a linear subspace.
    pub fn is_global(&self) -> bool {
        self.global
    }

    /// Geodesic distance from chart `k`'s center to the manifold point `p`.
    pub fn distance_to_center(&self, k: usize, p: &[f64]) -> f64 {
        self.manifold.geodesic_distance(&self.charts[k].center, p)
    }

    /// Whether the manifold point `p` lies in `U_k`.
    pub fn contains(&self, k: usize, p: &[f64]) -> bool {
        self.global || self.distance_to_center(k, p) < self.radius
    }

    fn raw_bumps(&self, p: &[f64]) -> Vec<f64> {
        if self.global {
            return vec![1.0];
        }
        (0..self.charts.len()).map(|k| bump(self.distance_to_center(k, p) / self.radius)).collect()
    }

    /// `(ρ_1(p), …, ρ_C(p))`; fails if `p` is not covered.
    pub fn partition_of_unity(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut w = self.raw_bumps(p);
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NotOnManifold { distance: self.manifold.distance_to(p) });
        }
        for v in &mut w {
            *v /= total;
        }
        Ok(w)
    }

    pub fn rho(&self, k: usize, p: &[f64]) -> Result<f64> {
        Ok(self.partition_of_unity(p)?[k])
    }

    /// `v_k(x, t) = Log_k(Π_M(x, t) / α_t)` in chart `k`'s frame.
    pub fn low_dim_representation(&self, k: usize, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let chart = &self.charts[k];
        let alpha = (-0.5 * t).exp();
        if self.global {
            if !(t >= 0.0) {
                return Err(Error::NegativeTime(t));
            }
            return Ok(chart.frame.coords(x).into_iter().map(|v| v / alpha).collect());
        }
        let proj = self.manifold.project(x, t)?;
        let p: Vec<f64> = proj.iter().map(|v| v / alpha).collect();
        let v = self.manifold.log_coords(&chart.center, &chart.frame, &p)?;
        let length = linalg::norm(&v);
        if length >= chart.radius && !self.global {
            return Err(Error::BeyondInjectivityRadius { length, bound: chart.radius });
        }
        Ok(v)
    }

    /// Fraction of `nodes` covered by at least one chart, and the mean number
    /// of charts containing a node (the thickness `T_d`).
    pub fn coverage(&self, nodes: &WeightedNodes) -> (f64, f64) {
        let mut covered = 0.0;
        let mut count = 0.0;
        let mut total = 0.0;
        for (p, w) in nodes.iter() {
            let c = (0..self.len()).filter(|&k| self.contains(k, p)).count();
            if c > 0 {
                covered += w;
            }
            count += w * c as f64;
            total += w;
        }
        (covered / total, count / total)
    }

    /// Lipschitz constant of the log maps over a chart domain.
    pub fn log_lipschitz(&self) -> f64 {
        match self.manifold.kind() {
            ManifoldKind::Sphere { dim, radius } if *dim >= 2 => {
                let a = self.radius / radius;
                if a > 0.0 {
                    a / a.sin()
                } else {
                    1.0
                }
            }
            _ => 1.0,
        }
    }

    /// Upper bound `L_Log^d · T_d · vol(M) / r^d` on the chart count.
    pub fn chart_count_bound(&self, thickness: f64) -> f64 {
        let d = self.manifold.intrinsic_dim() as i32;
        self.log_lipschitz().powi(d) * thickness * self.manifold.volume() / self.radius.powi(d)
    }

    /// Smallest and largest volume factor `G_k` over the given chart
    /// coordinates.
    pub fn volume_factor_range(&self, coords: &[Vec<f64>]) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for chart in &self.charts {
            for v in coords {
                let g = match self.manifold.volume_factor_analytic(v) {
                    Some(g) => g,
                    None => self.manifold.volume_factor_fd(&chart.center, &chart.frame, v)?,
                };
                lo = lo.min(g);
                hi = hi.max(g);
            }
        }
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle_quarter_radius_needs_four_charts() {
        let m = EmbeddedManifold::circle(1.0).unwrap();
        let atlas = Atlas::build(&m, PI / 2.0).unwrap();
        assert!(atlas.len() >= 4);
        let q = m.quadrature(4096).unwrap();
        let (covered, _) = atlas.coverage(&q);
        assert_eq!(covered, 1.0);
    }

    #[test]
    fn circle_net_is_symmetric() {
        let m = EmbeddedManifold::circle(1.0).unwrap();
        let atlas = Atlas::build(&m, 1.2).unwrap();
        assert_eq!(atlas.len(), 4);
        let mut angles: Vec<f64> = atlas.charts().iter().map(|c| c.center[1].atan2(c.center[0])).collect();
        angles.sort_by(f64::total_cmp);
        for w in angles.windows(2) {
            assert!((w[1] - w[0] - PI / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_is_single_global_chart() {
        let m = EmbeddedManifold::linear_subspace(vec![vec![0.0, 1.0, 0.0]], 2.0).unwrap();
        let atlas = Atlas::build(&m, 1.0).unwrap();
        assert_eq!(atlas.len(), 1);
        assert!(atlas.is_global());
        assert_eq!(atlas.partition_of_unity(&[0.0, 1.7, 0.0]).unwrap(), vec![1.0]);
        let v = atlas.low_dim_representation(0, &[0.3, 0.5, -2.0], 2.0).unwrap();
        assert!((v[0] - 0.5 / (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn radius_precondition() {
        let m = EmbeddedManifold::circle(1.0).unwrap();
        assert!(matches!(Atlas::build(&m, 0.0), Err(Error::InvalidRadius { .. })));
        assert!(matches!(Atlas::build(&m, 4.0), Err(Error::InvalidRadius { .. })));
    }

    #[test]
    fn sphere_chart_count_respects_bound() {
        let m = EmbeddedManifold::sphere(2, 1.0).unwrap();
        let atlas = Atlas::build(&m, 1.0).unwrap();
        let (covered, thickness) = atlas.coverage(&m.quadrature(128).unwrap());
        assert_eq!(covered, 1.0);
        assert!((atlas.len() as f64) <= atlas.chart_count_bound(thickness));
    }

    #[test]
    fn partition_sums_to_one() {
        let m = EmbeddedManifold::torus(2.0, 1.0).unwrap();
        let atlas = Atlas::build(&m, 1.5).unwrap();
        let q = m.quadrature(40).unwrap();
        for (p, _) in q.iter() {
            let w = atlas.partition_of_unity(p).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (k, wk) in w.iter().enumerate() {
                assert!(*wk >= 0.0);
                if *wk > 0.0 {
                    assert!(atlas.contains(k, p));
                }
            }
        }
    }

    #[test]
    fn circle_low_dim_is_signed_arc() {
        let m = EmbeddedManifold::circle(1.0).unwrap();
        let atlas = Atlas::build(&m, 1.2).unwrap();
        let t = 0.4;
        let alpha = (-0.5f64 * t).exp();
        for k in 0..atlas.len() {
            let c = &atlas.chart(k).center;
            let center = c.iter().map(|v| alpha * v).collect::<Vec<_>>();
            assert!(linalg::norm(&atlas.low_dim_representation(k, &center, t).unwrap()) < 1e-12);
        }
        let x = [1.3 * 0.5f64.cos(), 1.3 * 0.5f64.sin()];
        let k = (0..atlas.len()).find(|&k| atlas.chart(k).center[0] > 0.99).unwrap();
        let v = atlas.low_dim_representation(k, &x, t).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bump_support() {
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(-1.5), 0.0);
        assert!((bump(0.0) - (-1.0f64).exp()).abs() < 1e-16);
    }
}
