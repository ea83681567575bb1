//! Densities on a manifold with respect to its volume measure.
//!
//! Every density here is bounded above and (except for a bump mixture with
//! zero floor) below, can be evaluated pointwise, sampled exactly by
//! rejection against the uniform law, and split into chart-local pieces by a
//! partition of unity.

use std::f64::consts::E;

use crate::error::{Error, Result};
use crate::evaluation::PointCloud;
use crate::geometry::{bump, Atlas, EmbeddedManifold, ManifoldKind};
use crate::linalg::{self, dist_sq};
use crate::par::Execution;
use crate::quadrature::{gauss_legendre_on, periodic_trapezoid, WeightedNodes};
use crate::rng::{self, stream};
use crate::tol::TOL;

/// Monte-Carlo node count used when a manifold has no product grid.
const MC_NODES: usize = 1 << 16;
const MC_SEED: u64 = 0x6d63_6e6f_6465;

/// One smooth bump `weight · exp(1 − 1/(1 − (d_g/width)²))` centered at a
/// manifold point.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpTerm {
    pub center: Vec<f64>,
    pub weight: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityForm {
    Uniform,
    /// `base + Σ_j bump_j`, normalised.
    BumpMixture { base: f64, bumps: Vec<BumpTerm> },
    /// `∝ exp(−κ‖x − mode‖²/2)`.
    VonMisesLike { kappa: f64, mode: Vec<f64> },
    /// Atom weights for a point set, in point order.
    Discrete { weights: Vec<f64> },
}

/// How the normalising integral was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldDensity {
    manifold: EmbeddedManifold,
    form: DensityForm,
    log_norm: f64,
    bound: f64,
    holder_beta: f64,
    resolution: usize,
    rule: QuadratureRule,
}

/// Chart-local piece `P_{data,k}` of the data law.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMeasure {
    pub chart: usize,
    pub mass: f64,
    /// Chart coordinates of the nodes of `μ_k`.
    pub coords: Vec<Vec<f64>>,
    /// Ambient nodes `Exp_k(v)` with normalised weights.
    pub nodes: WeightedNodes,
}

/// Volume quadrature on `m`, falling back to a seeded Monte-Carlo cloud.
pub fn volume_nodes(m: &EmbeddedManifold, resolution: usize) -> Result<(WeightedNodes, QuadratureRule)> {
    match m.quadrature(resolution) {
        Ok(q) => Ok((q, QuadratureRule::Grid)),
        Err(Error::Unsupported(_)) => {
            let mut q = WeightedNodes::new(m.ambient_dim());
            let w = m.volume() / MC_NODES as f64;
            for i in 0..MC_NODES {
                q.push(&m.sample_uniform(&mut stream(MC_SEED, i as u64)), w);
            }
            Ok((q, QuadratureRule::MonteCarlo))
        }
        Err(e) => Err(e),
    }
}

impl ManifoldDensity {
    pub fn new(manifold: EmbeddedManifold, form: DensityForm, resolution: usize) -> Result<Self> {
        validate(&manifold, &form)?;
        let mut density = Self {
            manifold,
            form,
            log_norm: 0.0,
            bound: 1.0,
            holder_beta: f64::INFINITY,
            resolution,
            rule: QuadratureRule::Grid,
        };
        let (q, rule) = volume_nodes(&density.manifold, resolution)?;
        density.rule = rule;
        if rule == QuadratureRule::MonteCarlo {
            eprintln!(
                "note: {}-dimensional {} has no product grid; using {} Monte-Carlo nodes",
                density.manifold.intrinsic_dim(),
                density.manifold.name(),
                q.len()
            );
        }
        let z = q.integrate(|x| density.unnormalized(x));
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidDensity(format!("normalising constant {z} is not positive")));
        }
        density.log_norm = z.ln();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (x, _) in q.iter() {
            let p = density.unnormalized(x) / z;
            lo = lo.min(p);
            hi = hi.max(p);
        }
        density.bound = hi.max(1.0 / lo).max(1.0);
        Ok(density)
    }

    pub fn uniform(manifold: EmbeddedManifold, resolution: usize) -> Result<Self> {
        Self::new(manifold, DensityForm::Uniform, resolution)
    }

    /// Declared Hölder smoothness, used only for reporting.
    pub fn with_holder_beta(mut self, beta: f64) -> Self {
        self.holder_beta = beta;
        self
    }

    pub fn manifold(&self) -> &EmbeddedManifold {
        &self.manifold
    }

    pub fn form(&self) -> &DensityForm {
        &self.form
    }

    /// `C_f` with `C_f⁻¹ ≤ p ≤ C_f` on the quadrature nodes.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn holder_beta(&self) -> f64 {
        self.holder_beta
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    fn unnormalized(&self, x: &[f64]) -> f64 {
        if !self.manifold.in_support(x) {
            return 0.0;
        }
        match &self.form {
            DensityForm::Uniform => 1.0,
            DensityForm::BumpMixture { base, bumps } => {
                base + bumps
                    .iter()
                    .map(|b| b.weight * E * bump(self.manifold.geodesic_distance(&b.center, x) / b.width))
                    .sum::<f64>()
            }
            DensityForm::VonMisesLike { kappa, mode } => (-0.5 * kappa * dist_sq(x, mode)).exp(),
            DensityForm::Discrete { weights } => match self.manifold.kind() {
                ManifoldKind::PointSet { points } => points
                    .iter()
                    .zip(weights)
                    .find(|(p, _)| linalg::dist(p, x) <= TOL.on_manifold_input)
                    .map(|(_, w)| *w)
                    .unwrap_or(0.0),
                _ => 0.0,
            },
        }
    }

    /// Supremum of the unnormalised density (rejection envelope).
    fn envelope(&self) -> f64 {
        match &self.form {
            DensityForm::Uniform | DensityForm::VonMisesLike { .. } => 1.0,
            DensityForm::BumpMixture { base, bumps } => base + bumps.iter().map(|b| b.weight).sum::<f64>(),
            DensityForm::Discrete { weights } => weights.iter().copied().fold(0.0, f64::max),
        }
    }

    /// `p_data(x)` for a manifold point `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.manifold.check_on_manifold(x, TOL.on_manifold_input)?;
        Ok(self.unnormalized(x) * (-self.log_norm).exp())
    }

    /// `∫ p_data dμ_M` at the given resolution.
    pub fn integral(&self, resolution: usize) -> Result<f64> {
        let (q, _) = volume_nodes(&self.manifold, resolution)?;
        let inv = (-self.log_norm).exp();
        Ok(q.integrate(|x| self.unnormalized(x) * inv))
    }

    /// `P_data` as weighted nodes (weights sum to one at this resolution).
    pub fn data_nodes(&self, resolution: usize) -> Result<WeightedNodes> {
        let (q, _) = volume_nodes(&self.manifold, resolution)?;
        let mut out = WeightedNodes::new(q.dim);
        let mut total = 0.0;
        for (x, w) in q.iter() {
            let p = self.unnormalized(x) * w;
            if p > 0.0 {
                out.push(x, p);
                total += p;
            }
        }
        for w in &mut out.weights {
            *w /= total;
        }
        Ok(out)
    }

    /// One exact draw with its own counter-based stream.
    pub fn sample_one(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut r = stream(seed, index);
        if let DensityForm::Discrete { weights } = &self.form {
            if let ManifoldKind::PointSet { points } = self.manifold.kind() {
                let total: f64 = weights.iter().sum();
                let mut u = rng::uniform(&mut r) * total;
                for (p, w) in points.iter().zip(weights) {
                    if u < *w {
                        return p.clone();
                    }
                    u -= w;
                }
                return points[points.len() - 1].clone();
            }
        }
        if matches!(self.form, DensityForm::Uniform) {
            return self.manifold.sample_uniform(&mut r);
        }
        let top = self.envelope();
        loop {
            let x = self.manifold.sample_uniform(&mut r);
            if rng::uniform(&mut r) * top < self.unnormalized(&x) {
                return x;
            }
        }
    }

    /// `n` i.i.d. draws; identical for every execution policy.
    pub fn sample(&self, n: usize, seed: u64, exec: Execution) -> PointCloud {
        let rows = exec.map(n, |i| self.sample_one(seed, i as u64));
        PointCloud::from_rows(self.manifold.ambient_dim(), &rows)
    }

    /// Chart masses and local measures via chart-coordinate quadrature with
    /// one refinement check.
    pub fn local_measures(&self, atlas: &Atlas, nodes: usize) -> Result<Vec<LocalMeasure>> {
        if atlas.is_global() {
            let q = self.data_nodes(self.resolution)?;
            let frame = &atlas.chart(0).frame;
            let coords = q.iter().map(|(x, _)| frame.coords(x)).collect();
            return Ok(vec![LocalMeasure { chart: 0, mass: 1.0, coords, nodes: q }]);
        }
        let coarse = self.local_measures_at(atlas, nodes)?;
        let fine = self.local_measures_at(atlas, 2 * nodes)?;
        for (a, b) in coarse.iter().zip(&fine) {
            let change = (a.mass - b.mass).abs() / b.mass.abs().max(TOL.empty_chart);
            if b.mass > TOL.empty_chart && change > TOL.quadrature_refinement {
                return Err(Error::QuadratureDivergence { change });
            }
        }
        Ok(fine)
    }

    fn local_measures_at(&self, atlas: &Atlas, n: usize) -> Result<Vec<LocalMeasure>> {
        let m = &self.manifold;
        let d = m.intrinsic_dim();
        let r = atlas.radius();
        let coords: Vec<(Vec<f64>, f64)> = match d {
            0 => vec![(vec![], 1.0)],
            1 => {
                let (xs, ws) = gauss_legendre_on(n, -r, r);
                xs.into_iter().zip(ws).map(|(x, w)| (vec![x], w)).collect()
            }
            2 => {
                let (rs, ws) = gauss_legendre_on(n, 0.0, r);
                let (phis, h) = periodic_trapezoid(2 * n);
                let mut out = Vec::with_capacity(rs.len() * phis.len());
                for (rho, w) in rs.iter().zip(&ws) {
                    for phi in &phis {
                        out.push((vec![rho * phi.cos(), rho * phi.sin()], rho * w * h));
                    }
                }
                out
            }
            _ => return self.local_measures_ambient(atlas),
        };
        let inv = (-self.log_norm).exp();
        let mut out = Vec::with_capacity(atlas.len());
        for chart in atlas.charts() {
            let mut nodes = WeightedNodes::new(m.ambient_dim());
            let mut kept = Vec::new();
            let mut mass = 0.0;
            for (v, w) in &coords {
                let x = m.exp_coords(&chart.center, &chart.frame, v)?;
                let g = match m.volume_factor_analytic(v) {
                    Some(g) => g,
                    None => m.volume_factor_fd(&chart.center, &chart.frame, v)?,
                };
                let rho = atlas.partition_of_unity(&x)?[chart.index];
                let weight = w * rho * self.unnormalized(&x) * inv * g;
                if weight > 0.0 {
                    mass += weight;
                    nodes.push(&x, weight);
                    kept.push(v.clone());
                }
            }
            if mass > 0.0 {
                for w in &mut nodes.weights {
                    *w /= mass;
                }
            }
            out.push(LocalMeasure { chart: chart.index, mass, coords: kept, nodes });
        }
        Ok(out)
    }

    /// Fallback splitting the manifold quadrature by the partition of unity.
    fn local_measures_ambient(&self, atlas: &Atlas) -> Result<Vec<LocalMeasure>> {
        let q = self.data_nodes(self.resolution)?;
        let mut out: Vec<LocalMeasure> = atlas
            .charts()
            .iter()
            .map(|c| LocalMeasure { chart: c.index, mass: 0.0, coords: vec![], nodes: WeightedNodes::new(q.dim) })
            .collect();
        for (x, w) in q.iter() {
            let rho = atlas.partition_of_unity(x)?;
            for (k, rk) in rho.iter().enumerate() {
                if *rk > 0.0 {
                    let lm = &mut out[k];
                    lm.mass += rk * w;
                    lm.nodes.push(x, rk * w);
                    let c = atlas.chart(k);
                    lm.coords.push(self.manifold.log_coords(&c.center, &c.frame, x)?);
                }
            }
        }
        for lm in &mut out {
            if lm.mass > 0.0 {
                let mass = lm.mass;
                for w in &mut lm.nodes.weights {
                    *w /= mass;
                }
            }
        }
        Ok(out)
    }
}

fn validate(m: &EmbeddedManifold, form: &DensityForm) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidDensity(msg));
    match form {
        DensityForm::Uniform => Ok(()),
        DensityForm::BumpMixture { base, bumps } => {
            if !(*base >= 0.0) || bumps.is_empty() && *base == 0.0 {
                return bad("bump mixture needs a non-negative base and some mass".into());
            }
            for b in bumps {
                if !(b.weight >= 0.0 && b.width > 0.0) {
                    return bad(format!("bad bump weight {} or width {}", b.weight, b.width));
                }
                if b.center.len() != m.ambient_dim() || m.distance_to(&b.center) > TOL.on_manifold_input {
                    return bad("bump center must be a manifold point".into());
                }
            }
            Ok(())
        }
        DensityForm::VonMisesLike { kappa, mode } => {
            if !(*kappa >= 0.0) || mode.len() != m.ambient_dim() {
                return bad("von Mises mode must be an ambient point and κ ≥ 0".into());
            }
            Ok(())
        }
        DensityForm::Discrete { weights } => match m.kind() {
            ManifoldKind::PointSet { points } if points.len() == weights.len() => {
                if weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
                    Ok(())
                } else {
                    bad("atom weights must be positive".into())
                }
            }
            _ => bad("discrete weights need a point set with one weight per point".into()),
        },
    }
}
