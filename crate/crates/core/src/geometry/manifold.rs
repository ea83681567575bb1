use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm, wrap_angle, Frame};
use crate::quadrature::{gauss_legendre_on, periodic_trapezoid, WeightedNodes};
use crate::rng;
use crate::tol::TOL;

/// The analytic families supported by the laboratory.
///
/// Every family lives in the leading coordinates of the ambient space; any
/// extra ambient coordinates are normal directions.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    Circle { radius: f64 },
    /// The round `d`-sphere of the given radius in `R^{d+1}`.
    Sphere { dim: usize, radius: f64 },
    /// Flat product torus `S¹(major) × S¹(minor) ⊂ R⁴`.
    Torus { major: f64, minor: f64 },
    /// Column span of an orthonormal basis; data is supported on the latent
    /// cube `A·[-half_width, half_width]^d`.
    LinearSubspace { basis: Frame, half_width: f64 },
    /// A finite set of points (`d = 0`).
    PointSet { points: Vec<Vec<f64>> },
}

/// A compact `d`-dimensional manifold isometrically embedded in `R^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedManifold {
    kind: ManifoldKind,
    ambient_dim: usize,
    intrinsic_dim: usize,
    reach: f64,
    coord_bound: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidManifold(format!("{name} must be positive and finite, got {v}")))
    }
}

fn pad(mut v: Vec<f64>, dim: usize) -> Vec<f64> {
    v.resize(dim, 0.0);
    v
}

impl EmbeddedManifold {
    pub fn circle(radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        Ok(Self {
            kind: ManifoldKind::Circle { radius },
            ambient_dim: 2,
            intrinsic_dim: 1,
            reach: radius,
            coord_bound: radius,
        })
    }

    pub fn sphere(dim: usize, radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        if dim == 0 {
            return Err(Error::InvalidManifold("sphere dimension must be at least 1".into()));
        }
        Ok(Self {
            kind: ManifoldKind::Sphere { dim, radius },
            ambient_dim: dim + 1,
            intrinsic_dim: dim,
            reach: radius,
            coord_bound: radius,
        })
    }

    /// Flat torus with `major ≥ minor`; its reach is `minor`.
    pub fn torus(major: f64, minor: f64) -> Result<Self> {
        positive("major radius", major)?;
        positive("minor radius", minor)?;
        if major < minor {
            return Err(Error::InvalidManifold(format!(
                "torus needs major >= minor (got {major} < {minor})"
            )));
        }
        Ok(Self {
            kind: ManifoldKind::Torus { major, minor },
            ambient_dim: 4,
            intrinsic_dim: 2,
            reach: minor,
            coord_bound: major,
        })
    }

    /// `columns` are the `d` basis vectors, each of length `D`.
    pub fn linear_subspace(columns: Vec<Vec<f64>>, half_width: f64) -> Result<Self> {
        positive("half width", half_width)?;
        let d = columns.len();
        let dim = columns.first().map(Vec::len).unwrap_or(0);
        if d == 0 || dim < d || columns.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidManifold("basis must be D×d with D ≥ d ≥ 1".into()));
        }
        let basis = Frame::from_columns(dim, columns);
        let defect = basis.orthonormality_defect();
        if defect > TOL.orthonormal {
            return Err(Error::InvalidManifold(format!(
                "basis columns are not orthonormal (|AᵀA − I| = {defect:.3e})"
            )));
        }
        let coord_bound = (0..dim)
            .map(|i| (0..d).map(|j| basis.column(j)[i].abs()).sum::<f64>() * half_width)
            .fold(0.0, f64::max);
        Ok(Self {
            kind: ManifoldKind::LinearSubspace { basis, half_width },
            ambient_dim: dim,
            intrinsic_dim: d,
            reach: f64::INFINITY,
            coord_bound,
        })
    }

    pub fn point_set(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.is_empty() || dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidManifold("point set needs ≥1 points of equal dimension".into()));
        }
        let mut min_gap = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                min_gap = min_gap.min(linalg::dist(&points[i], &points[j]));
            }
        }
        if min_gap <= TOL.tie {
            return Err(Error::InvalidManifold("point set contains duplicate points".into()));
        }
        let coord_bound = points.iter().map(|p| linalg::max_abs(p)).fold(0.0, f64::max);
        Ok(Self {
            kind: ManifoldKind::PointSet { points },
            ambient_dim: dim,
            intrinsic_dim: 0,
            reach: 0.5 * min_gap,
            coord_bound,
        })
    }

    /// Embed a circle, sphere or torus into a larger ambient space by zero
    /// padding.
    pub fn with_ambient_dim(mut self, ambient_dim: usize) -> Result<Self> {
        match self.kind {
            ManifoldKind::LinearSubspace { .. } | ManifoldKind::PointSet { .. } => {
                if ambient_dim != self.ambient_dim {
                    return Err(Error::InvalidManifold(
                        "ambient dimension of linear subspaces and point sets is fixed by their data".into(),
                    ));
                }
            }
            _ => {
                if ambient_dim < self.core_dim() {
                    return Err(Error::InvalidManifold(format!(
                        "ambient dimension {ambient_dim} is below the embedding dimension {}",
                        self.core_dim()
                    )));
                }
                self.ambient_dim = ambient_dim;
            }
        }
        Ok(self)
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    /// Reach τ; `f64::INFINITY` for linear subspaces.
    pub fn reach(&self) -> f64 {
        self.reach
    }

    pub fn has_finite_reach(&self) -> bool {
        self.reach.is_finite()
    }

    /// `B_M` with `‖x‖_∞ ≤ B_M` on the support.
    pub fn coord_bound(&self) -> f64 {
        self.coord_bound
    }

    /// Lower bound `π τ` on the injectivity radius.
    pub fn injectivity_bound(&self) -> f64 {
        PI * self.reach
    }

    /// Lipschitz constant of the exponential maps (chord ≤ arc).
    pub fn exp_lipschitz(&self) -> f64 {
        1.0
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ManifoldKind::Circle { .. } => "circle",
            ManifoldKind::Sphere { .. } => "sphere",
            ManifoldKind::Torus { .. } => "torus",
            ManifoldKind::LinearSubspace { .. } => "linear",
            ManifoldKind::PointSet { .. } => "points",
        }
    }

    fn core_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Circle { .. } => 2,
            ManifoldKind::Sphere { dim, .. } => dim + 1,
            ManifoldKind::Torus { .. } => 4,
            _ => self.ambient_dim,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.ambient_dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.ambient_dim, got: x.len() })
        }
    }

    /// Nearest point on `scale · M` and the distance to it, without reach
    /// checks. Point sets report the gap to the runner-up in the third slot.
    fn nearest_scaled(&self, x: &[f64], scale: f64) -> (Vec<f64>, f64, f64) {
        let d = self.ambient_dim;
        match &self.kind {
            ManifoldKind::Circle { radius } | ManifoldKind::Sphere { radius, .. } => {
                let k = self.core_dim();
                let core = norm(&x[..k]);
                let rest = linalg::norm_sq(&x[k..]);
                let dist = ((core - scale * radius).powi(2) + rest).sqrt();
                let p = if core > 0.0 {
                    x[..k].iter().map(|v| scale * radius * v / core).collect()
                } else {
                    let mut e = vec![0.0; k];
                    e[0] = scale * radius;
                    e
                };
                (pad(p, d), dist, f64::INFINITY)
            }
            ManifoldKind::Torus { major, minor } => {
                let n1 = norm(&x[..2]);
                let n2 = norm(&x[2..4]);
                let rest = linalg::norm_sq(&x[4..]);
                let dist = ((n1 - scale * major).powi(2) + (n2 - scale * minor).powi(2) + rest).sqrt();
                let ring = |c: &[f64], n: f64, r: f64| -> [f64; 2] {
                    if n > 0.0 {
                        [scale * r * c[0] / n, scale * r * c[1] / n]
                    } else {
                        [scale * r, 0.0]
                    }
                };
                let a = ring(&x[..2], n1, *major);
                let b = ring(&x[2..4], n2, *minor);
                (pad(vec![a[0], a[1], b[0], b[1]], d), dist, f64::INFINITY)
            }
            ManifoldKind::LinearSubspace { basis, .. } => {
                let p = basis.project(x);
                let dist = linalg::dist(x, &p);
                (p, dist, f64::INFINITY)
            }
            ManifoldKind::PointSet { points } => {
                let mut best = (usize::MAX, f64::INFINITY);
                let mut second = f64::INFINITY;
                for (j, p) in points.iter().enumerate() {
                    let dj = x.iter().zip(p).map(|(a, b)| (a - scale * b).powi(2)).sum::<f64>().sqrt();
                    if dj < best.1 {
                        second = best.1;
                        best = (j, dj);
                    } else if dj < second {
                        second = dj;
                    }
                }
                let p = points[best.0].iter().map(|v| scale * v).collect();
                (p, best.1, second - best.1)
            }
        }
    }

    /// Euclidean distance from `x` to `M` (defined everywhere).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        self.nearest_scaled(x, 1.0).1
    }

    /// Distance from `x` to the shrunk manifold `α_t M`.
    pub fn distance_to_scaled(&self, x: &[f64], alpha: f64) -> f64 {
        self.nearest_scaled(x, alpha).1
    }

    /// `Π_M(x, t) = argmin_{y ∈ α_t M} ‖y − x‖`.
    pub fn project(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::NegativeTime(t));
        }
        self.project_scaled(x, (-0.5 * t).exp())
    }

    /// Projection onto `alpha · M` with the reach and tie checks.
    pub fn project_scaled(&self, x: &[f64], alpha: f64) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let (p, dist, gap) = self.nearest_scaled(x, alpha);
        if self.reach.is_finite() {
            let limit = alpha * self.reach;
            if dist >= limit - TOL.reach_margin {
                return Err(Error::OutsideReach { distance: dist, limit });
            }
        }
        if gap < TOL.tie {
            return Err(Error::AmbiguousProjection { gap });
        }
        Ok(p)
    }

    /// Projection onto `M` itself (`t = 0`).
    pub fn nearest_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.project_scaled(x, 1.0)
    }

    pub fn check_on_manifold(&self, p: &[f64], tol: f64) -> Result<()> {
        self.check_dim(p)?;
        let distance = self.distance_to(p);
        if distance <= tol {
            Ok(())
        } else {
            Err(Error::NotOnManifold { distance })
        }
    }

    /// Orthonormal basis of `T_p M` (columns in ambient space).
    pub fn tangent_frame(&self, p: &[f64]) -> Result<Frame> {
        self.check_on_manifold(p, TOL.on_manifold_input)?;
        let dim = self.ambient_dim;
        Ok(match &self.kind {
            ManifoldKind::Circle { .. } => {
                let n = norm(&p[..2]);
                Frame::from_columns(dim, vec![pad(vec![-p[1] / n, p[0] / n], dim)])
            }
            ManifoldKind::Sphere { dim: d, .. } => {
                let k = d + 1;
                let n = norm(&p[..k]);
                let normal: Vec<f64> = p[..k].iter().map(|v| v / n).collect();
                let skip = (0..k)
                    .max_by(|&a, &b| normal[a].abs().total_cmp(&normal[b].abs()))
                    .unwrap_or(0);
                let mut basis: Vec<Vec<f64>> = Vec::with_capacity(*d);
                for i in (0..k).filter(|&i| i != skip) {
                    let mut u = vec![0.0; k];
                    u[i] = 1.0;
                    for _ in 0..2 {
                        let c = dot(&u, &normal);
                        linalg::axpy(-c, &normal, &mut u);
                        for b in &basis {
                            let c = dot(&u, b);
                            linalg::axpy(-c, b, &mut u);
                        }
                    }
                    let un = norm(&u);
                    basis.push(u.iter().map(|v| v / un).collect());
                }
                Frame::from_columns(dim, basis.into_iter().map(|b| pad(b, dim)).collect())
            }
            ManifoldKind::Torus { .. } => {
                let n1 = norm(&p[..2]);
                let n2 = norm(&p[2..4]);
                Frame::from_columns(
                    dim,
                    vec![
                        pad(vec![-p[1] / n1, p[0] / n1, 0.0, 0.0], dim),
                        pad(vec![0.0, 0.0, -p[3] / n2, p[2] / n2], dim),
                    ],
                )
            }
            ManifoldKind::LinearSubspace { basis, .. } => basis.clone(),
            ManifoldKind::PointSet { .. } => Frame::from_columns(dim, vec![]),
        })
    }

    /// `Exp_p(V)` for an ambient tangent vector `V ∈ T_p M`.
    pub fn exp(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(p)?;
        self.check_dim(v)?;
        let length = norm(v);
        let bound = self.injectivity_bound();
        if length >= bound {
            return Err(Error::BeyondInjectivityRadius { length, bound });
        }
        Ok(match &self.kind {
            ManifoldKind::Circle { radius } | ManifoldKind::Sphere { radius, .. } => {
                if length == 0.0 {
                    return Ok(p.to_vec());
                }
                let a = length / radius;
                let (s, c) = a.sin_cos();
                p.iter().zip(v).map(|(pi, vi)| pi * c + vi * (radius * s / length)).collect()
            }
            ManifoldKind::Torus { major, minor } => {
                let frame = self.tangent_frame(p)?;
                let a = dot(v, frame.column(0)) / major;
                let b = dot(v, frame.column(1)) / minor;
                let rot = |x: f64, y: f64, ang: f64| {
                    let (s, c) = ang.sin_cos();
                    (x * c - y * s, x * s + y * c)
                };
                let (x0, x1) = rot(p[0], p[1], a);
                let (x2, x3) = rot(p[2], p[3], b);
                pad(vec![x0, x1, x2, x3], self.ambient_dim)
            }
            ManifoldKind::LinearSubspace { .. } => linalg::add(p, v),
            ManifoldKind::PointSet { .. } => p.to_vec(),
        })
    }

    /// `Log_p(q)` as an ambient tangent vector at `p`.
    pub fn log(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        self.check_on_manifold(p, TOL.on_manifold_input)?;
        self.check_on_manifold(q, TOL.on_manifold_input)?;
        let bound = self.injectivity_bound();
        let v = match &self.kind {
            ManifoldKind::Circle { radius } | ManifoldKind::Sphere { radius, .. } => {
                let k = self.core_dim();
                let np = norm(&p[..k]);
                let nq = norm(&q[..k]);
                let ph: Vec<f64> = p[..k].iter().map(|x| x / np).collect();
                let qh: Vec<f64> = q[..k].iter().map(|x| x / nq).collect();
                let c = dot(&ph, &qh);
                let u: Vec<f64> = qh.iter().zip(&ph).map(|(a, b)| a - c * b).collect();
                let s = norm(&u);
                let ang = s.atan2(c);
                if (PI - ang) * radius < TOL.tie {
                    return Err(Error::CutLocus);
                }
                if s == 0.0 {
                    vec![0.0; self.ambient_dim]
                } else {
                    pad(u.iter().map(|x| x * radius * ang / s).collect(), self.ambient_dim)
                }
            }
            ManifoldKind::Torus { major, minor } => {
                let (dth, dph) = self.torus_angle_deltas(p, q);
                if (PI - dth.abs()) * major < TOL.tie || (PI - dph.abs()) * minor < TOL.tie {
                    return Err(Error::CutLocus);
                }
                let frame = self.tangent_frame(p)?;
                frame.lift(&[major * dth, minor * dph])
            }
            ManifoldKind::LinearSubspace { basis, .. } => basis.project(&linalg::sub(q, p)),
            ManifoldKind::PointSet { .. } => {
                let gap = linalg::dist(p, q);
                if gap > TOL.on_manifold_input {
                    return Err(Error::BeyondInjectivityRadius { length: f64::INFINITY, bound });
                }
                vec![0.0; self.ambient_dim]
            }
        };
        let length = norm(&v);
        if length >= bound {
            return Err(Error::BeyondInjectivityRadius { length, bound });
        }
        Ok(v)
    }

    fn torus_angle_deltas(&self, p: &[f64], q: &[f64]) -> (f64, f64) {
        let th = |x: &[f64]| x[1].atan2(x[0]);
        (wrap_angle(th(&q[..2]) - th(&p[..2])), wrap_angle(th(&q[2..4]) - th(&p[2..4])))
    }

    /// Exponential map in intrinsic coordinates of `frame` (a frame at `p`).
    pub fn exp_coords(&self, p: &[f64], frame: &Frame, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != frame.intrinsic_dim() {
            return Err(Error::DimensionMismatch { expected: frame.intrinsic_dim(), got: v.len() });
        }
        self.exp(p, &frame.lift(v))
    }

    pub fn log_coords(&self, p: &[f64], frame: &Frame, q: &[f64]) -> Result<Vec<f64>> {
        Ok(frame.coords(&self.log(p, q)?))
    }

    /// `Exp_p(v)` with `v` in the canonical frame at `p`.
    pub fn exp_map(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let frame = self.tangent_frame(p)?;
        self.exp_coords(p, &frame, v)
    }

    /// `Log_p(q)` in the canonical frame at `p`.
    pub fn log_map(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        let frame = self.tangent_frame(p)?;
        self.log_coords(p, &frame, q)
    }

    /// Intrinsic distance between two manifold points (beyond the injectivity
    /// radius as well).
    pub fn geodesic_distance(&self, p: &[f64], q: &[f64]) -> f64 {
        match &self.kind {
            ManifoldKind::Circle { radius } | ManifoldKind::Sphere { radius, .. } => {
                let k = self.core_dim();
                let c = dot(&p[..k], &q[..k]);
                let cross = (linalg::norm_sq(&p[..k]) * linalg::norm_sq(&q[..k]) - c * c).max(0.0).sqrt();
                radius * cross.atan2(c)
            }
            ManifoldKind::Torus { major, minor } => {
                let (a, b) = self.torus_angle_deltas(p, q);
                ((major * a).powi(2) + (minor * b).powi(2)).sqrt()
            }
            ManifoldKind::LinearSubspace { .. } => linalg::dist(p, q),
            ManifoldKind::PointSet { .. } => {
                if linalg::dist(p, q) <= TOL.on_manifold_input {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Riemannian volume (counting measure for point sets).
    pub fn volume(&self) -> f64 {
        match &self.kind {
            ManifoldKind::Circle { radius } => 2.0 * PI * radius,
            ManifoldKind::Sphere { dim, radius } => unit_sphere_area(*dim) * radius.powi(*dim as i32),
            ManifoldKind::Torus { major, minor } => 4.0 * PI * PI * major * minor,
            ManifoldKind::LinearSubspace { half_width, .. } => (2.0 * half_width).powi(self.intrinsic_dim as i32),
            ManifoldKind::PointSet { points } => points.len() as f64,
        }
    }

    /// Deterministic volume quadrature; `resolution` is the per-angle node
    /// count. Returns `Unsupported` where no product grid is implemented.
    pub fn quadrature(&self, resolution: usize) -> Result<WeightedNodes> {
        let n = resolution.max(4);
        let dim = self.ambient_dim;
        let mut q = WeightedNodes::new(dim);
        match &self.kind {
            ManifoldKind::Circle { radius } | ManifoldKind::Sphere { dim: 1, radius } => {
                let (th, h) = periodic_trapezoid(n);
                for a in th {
                    q.push(&pad(vec![radius * a.cos(), radius * a.sin()], dim), radius * h);
                }
            }
            ManifoldKind::Sphere { dim: 2, radius } => {
                let (us, ws) = gauss_legendre_on((n / 2).max(2), -1.0, 1.0);
                let (phis, h) = periodic_trapezoid(n);
                for (u, w) in us.iter().zip(&ws) {
                    let s = (1.0 - u * u).max(0.0).sqrt();
                    for phi in &phis {
                        let x = vec![radius * s * phi.cos(), radius * s * phi.sin(), radius * u];
                        q.push(&pad(x, dim), radius * radius * w * h);
                    }
                }
            }
            ManifoldKind::Torus { major, minor } => {
                let (th, h) = periodic_trapezoid(n);
                for a in &th {
                    for b in &th {
                        let x = vec![major * a.cos(), major * a.sin(), minor * b.cos(), minor * b.sin()];
                        q.push(&pad(x, dim), major * minor * h * h);
                    }
                }
            }
            ManifoldKind::LinearSubspace { basis, half_width } => {
                let d = self.intrinsic_dim;
                if d > 3 {
                    return Err(Error::Unsupported(format!("tensor quadrature for d = {d}")));
                }
                let (zs, ws) = gauss_legendre_on(n, -half_width, *half_width);
                let total = n.pow(d as u32);
                for idx in 0..total {
                    let mut z = vec![0.0; d];
                    let mut w = 1.0;
                    let mut r = idx;
                    for zj in z.iter_mut() {
                        *zj = zs[r % n];
                        w *= ws[r % n];
                        r /= n;
                    }
                    q.push(&basis.lift(&z), w);
                }
            }
            ManifoldKind::PointSet { points } => {
                for p in points {
                    q.push(p, 1.0);
                }
            }
            ManifoldKind::Sphere { dim: d, .. } => {
                return Err(Error::Unsupported(format!("deterministic sphere grid for d = {d}")));
            }
        }
        Ok(q)
    }

    /// One draw from the normalised volume measure.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let dim = self.ambient_dim;
        match &self.kind {
            ManifoldKind::Circle { radius } => {
                let a = 2.0 * PI * rng::uniform(rng);
                pad(vec![radius * a.cos(), radius * a.sin()], dim)
            }
            ManifoldKind::Sphere { dim: d, radius } => loop {
                let g = rng::gaussian_vec(rng, d + 1);
                let n = norm(&g);
                if n > 1e-300 {
                    break pad(g.iter().map(|v| radius * v / n).collect(), dim);
                }
            },
            ManifoldKind::Torus { major, minor } => {
                let a = 2.0 * PI * rng::uniform(rng);
                let b = 2.0 * PI * rng::uniform(rng);
                pad(vec![major * a.cos(), major * a.sin(), minor * b.cos(), minor * b.sin()], dim)
            }
            ManifoldKind::LinearSubspace { basis, half_width } => {
                let z: Vec<f64> = (0..self.intrinsic_dim)
                    .map(|_| half_width * (2.0 * rng::uniform(rng) - 1.0))
                    .collect();
                basis.lift(&z)
            }
            ManifoldKind::PointSet { points } => {
                let j = ((rng::uniform(rng) * points.len() as f64) as usize).min(points.len() - 1);
                points[j].clone()
            }
        }
    }

    /// Whether `x` lies in the data support (relevant for the truncated
    /// linear subspace; everything else is compact already).
    pub fn in_support(&self, x: &[f64]) -> bool {
        match &self.kind {
            ManifoldKind::LinearSubspace { basis, half_width } => {
                basis.coords(x).iter().all(|z| z.abs() <= half_width * (1.0 + 1e-12))
            }
            _ => true,
        }
    }

    /// `G_p(v) = √det g(v)` by central differences of the exponential map in
    /// `frame` coordinates.
    pub fn volume_factor_fd(&self, p: &[f64], frame: &Frame, v: &[f64]) -> Result<f64> {
        let d = frame.intrinsic_dim();
        if d == 0 {
            return Ok(1.0);
        }
        let h = TOL.volume_fd_step;
        let mut cols = Vec::with_capacity(d);
        for i in 0..d {
            let mut vp = v.to_vec();
            let mut vm = v.to_vec();
            vp[i] += h;
            vm[i] -= h;
            let a = self.exp_coords(p, frame, &vp)?;
            let b = self.exp_coords(p, frame, &vm)?;
            cols.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect::<Vec<_>>());
        }
        let mut gram = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                gram[i * d + j] = dot(&cols[i], &cols[j]);
            }
        }
        Ok(determinant(&mut gram, d).max(0.0).sqrt())
    }

    /// Closed-form volume factor of the exponential chart, where known.
    pub fn volume_factor_analytic(&self, v: &[f64]) -> Option<f64> {
        match &self.kind {
            ManifoldKind::Circle { .. }
            | ManifoldKind::Torus { .. }
            | ManifoldKind::LinearSubspace { .. }
            | ManifoldKind::PointSet { .. } => Some(1.0),
            ManifoldKind::Sphere { dim, radius } => {
                let r = norm(v);
                if r == 0.0 {
                    Some(1.0)
                } else {
                    Some((radius * (r / radius).sin() / r).powi(*dim as i32 - 1))
                }
            }
        }
    }
}

/// Surface area of the unit `d`-sphere in `R^{d+1}`.
pub fn unit_sphere_area(d: usize) -> f64 {
    match d {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 1.0) * unit_sphere_area(d - 2),
    }
}

/// Determinant by Gaussian elimination with partial pivoting (destroys `a`).
fn determinant(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs())).unwrap();
        if a[piv * n + c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for k in 0..n {
                a.swap(piv * n + k, c * n + k);
            }
            det = -det;
        }
        det *= a[c * n + c];
        for r in c + 1..n {
            let f = a[r * n + c] / a[c * n + c];
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    det
}
