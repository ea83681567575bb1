//! Splits of the score into on-manifold and orthogonal parts.
//!
//! - linear subspace: `s_⊥ = −(I − AAᵀ)x/h`, `s_A = (α E[X₀|x] − AAᵀx)/h`;
//! - large noise: a convex combination over charts of tangent-plane splits,
//!   weighted by chart-restricted kernel masses;
//! - small noise: projection onto `α_t M` plus an on-manifold term, computed
//!   both as a residual and as a ratio of interaction-term integrals.

use crate::diffusion::{alpha, h};
use crate::error::{Error, Result};
use crate::geometry::{Atlas, ManifoldKind};
use crate::linalg::{self, dot, norm, sub};
use crate::oracle::{NodePartition, Oracle};
use crate::ScoreField;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDecomposition {
    /// `s_A`, lies in `col(A)`.
    pub s_on: Vec<f64>,
    pub s_perp: Vec<f64>,
}

impl LinearDecomposition {
    pub fn reconstruct(&self) -> Vec<f64> {
        linalg::add(&self.s_on, &self.s_perp)
    }
}

/// Split for data supported on a linear subspace.
pub fn linear_subspace_decompose(oracle: &Oracle, x: &[f64], t: f64) -> Result<LinearDecomposition> {
    let ManifoldKind::LinearSubspace { basis, .. } = oracle.manifold().kind() else {
        return Err(Error::WrongManifoldKind { expected: "linear subspace" });
    };
    let eval = oracle.evaluate(x, t)?;
    let (a, ht) = (alpha(t), h(t));
    let px = basis.project(x);
    Ok(LinearDecomposition {
        s_on: eval.posterior_mean.iter().zip(&px).map(|(m, p)| (a * m - p) / ht).collect(),
        s_perp: x.iter().zip(&px).map(|(xi, p)| -(xi - p) / ht).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LargeNoiseDecomposition {
    pub weights: Vec<f64>,
    /// `s_M^k = (α y_k − Π_k)/h`.
    pub s_on: Vec<Vec<f64>>,
    /// `s_⊥^k = −(x − Π_k)/h`.
    pub s_perp: Vec<Vec<f64>>,
    /// `Π_k(x, t)`, projection onto `α_t · T_{x_k}M`.
    pub projections: Vec<Vec<f64>>,
}

impl LargeNoiseDecomposition {
    /// `Σ_k w_k (s_M^k + s_⊥^k)`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let dim = self.s_on.first().map(Vec::len).unwrap_or(0);
        let mut out = vec![0.0; dim];
        for ((w, a), b) in self.weights.iter().zip(&self.s_on).zip(&self.s_perp) {
            for j in 0..dim {
                out[j] += w * (a[j] + b[j]);
            }
        }
        out
    }
}

/// Normalised weights `exp(l_k − LSE(l))`.
pub fn weights_from_log_mass(log_mass: &[f64]) -> Vec<f64> {
    let top = log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = log_mass.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Large-noise split with the node partition cached for repeated use.
#[derive(Debug, Clone)]
pub struct LargeNoise<'a> {
    oracle: &'a Oracle,
    atlas: &'a Atlas,
    part: NodePartition,
}

impl<'a> LargeNoise<'a> {
    pub fn new(oracle: &'a Oracle, atlas: &'a Atlas) -> Result<Self> {
        let part = oracle.partition(atlas)?;
        Ok(Self { oracle, atlas, part })
    }

    pub fn partition(&self) -> &NodePartition {
        &self.part
    }

    pub fn decompose(&self, x: &[f64], t: f64) -> Result<LargeNoiseDecomposition> {
        let pass = self.oracle.chart_pass(&self.part, x, t)?;
        let (a, ht) = (pass.alpha, pass.h);
        let weights = weights_from_log_mass(&pass.log_mass);
        let mut s_on = Vec::with_capacity(weights.len());
        let mut s_perp = Vec::with_capacity(weights.len());
        let mut projections = Vec::with_capacity(weights.len());
        for (chart, y) in self.atlas.charts().iter().zip(&pass.means) {
            let anchor: Vec<f64> = chart.center.iter().map(|c| a * c).collect();
            let mut pk = chart.frame.project(&sub(x, &anchor));
            linalg::axpy(1.0, &anchor, &mut pk);
            s_on.push(y.iter().zip(&pk).map(|(yi, p)| (a * yi - p) / ht).collect());
            s_perp.push(x.iter().zip(&pk).map(|(xi, p)| -(xi - p) / ht).collect());
            projections.push(pk);
        }
        Ok(LargeNoiseDecomposition { weights, s_on, s_perp, projections })
    }
}

impl ScoreField for LargeNoise<'_> {
    fn ambient_dim(&self) -> usize {
        self.oracle.manifold().ambient_dim()
    }

    fn score(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.decompose(x, t)?.reconstruct())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallNoiseDecomposition {
    /// `s_M` as oracle score minus `s_⊥`.
    pub s_on: Vec<f64>,
    /// `s_M` as `s₂ / (√h s₁)` from the interaction-term integrals.
    pub s_on_ratio: Vec<f64>,
    pub s_perp: Vec<f64>,
    pub projection: Vec<f64>,
    pub oracle_score: Vec<f64>,
}

impl SmallNoiseDecomposition {
    pub fn reconstruct(&self) -> Vec<f64> {
        linalg::add(&self.s_on, &self.s_perp)
    }
}

/// Split near the manifold; requires `dist(x, α_t M) < α_t τ`.
pub fn small_noise_decompose(oracle: &Oracle, x: &[f64], t: f64) -> Result<SmallNoiseDecomposition> {
    let m = oracle.manifold();
    let proj = m.project(x, t)?;
    let eval = oracle.evaluate(x, t)?;
    let (a, ht) = (alpha(t), h(t));
    let s_perp: Vec<f64> = x.iter().zip(&proj).map(|(xi, p)| -(xi - p) / ht).collect();
    let s_on: Vec<f64> = eval.score.iter().zip(&s_perp).map(|(s, p)| s - p).collect();

    let residual = sub(x, &proj);
    let nodes = oracle.nodes();
    let dim = x.len();
    let mut expo = Vec::with_capacity(nodes.len());
    let mut top = f64::NEG_INFINITY;
    for (x0, q) in nodes.iter() {
        let gap: Vec<f64> = proj.iter().zip(x0).map(|(p, y)| p - a * y).collect();
        let e1 = linalg::norm_sq(&gap);
        let e2 = 2.0 * dot(&residual, &gap);
        let v = q.ln() - (e1 + e2) / (2.0 * ht);
        top = top.max(v);
        expo.push(v);
    }
    let sq = ht.sqrt();
    let mut s1 = 0.0;
    let mut s2 = vec![0.0; dim];
    for ((x0, _), v) in nodes.iter().zip(&expo) {
        let w = (v - top).exp();
        s1 += w;
        for j in 0..dim {
            s2[j] += w * (a * x0[j] - proj[j]) / sq;
        }
    }
    let s_on_ratio = s2.iter().map(|v| v / (sq * s1)).collect();
    Ok(SmallNoiseDecomposition { s_on, s_on_ratio, s_perp, projection: proj, oracle_score: eval.score })
}

/// `E₁`, `E₂` and the cross-term bound at `(x, t, x₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionTerms {
    pub e1: f64,
    pub e2: f64,
    /// `4‖x − Π_M(x,t)‖/(α_t τ) · E₁`.
    pub bound: f64,
}

impl InteractionTerms {
    /// `|E₂| ≤ bound`, allowing for rounding in the inner product.
    pub fn holds(&self) -> bool {
        self.e2.abs() <= self.bound + 1e-12 * self.e1.max(1.0)
    }

    pub fn slack(&self) -> f64 {
        self.bound - self.e2.abs()
    }
}

pub fn interaction_terms(oracle: &Oracle, x: &[f64], t: f64, x0: &[f64]) -> Result<InteractionTerms> {
    let m = oracle.manifold();
    let proj = m.project(x, t)?;
    let a = alpha(t);
    let gap: Vec<f64> = proj.iter().zip(x0).map(|(p, y)| p - a * y).collect();
    let residual = sub(x, &proj);
    let e1 = linalg::norm_sq(&gap);
    let e2 = 2.0 * dot(&residual, &gap);
    let tau = m.reach();
    let bound = if tau.is_finite() { 4.0 * norm(&residual) / (a * tau) * e1 } else { 0.0 };
    Ok(InteractionTerms { e1, e2, bound })
}

/// Regime threshold `log(1/(1 − ε^{2/β}/4))` separating large from small
/// noise; reported only.
pub fn large_noise_threshold(eps: f64, beta: f64) -> f64 {
    -(1.0 - eps.powf(2.0 / beta) / 4.0).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::ManifoldDensity;
    use crate::geometry::EmbeddedManifold;

    fn circle_oracle() -> Oracle {
        let m = EmbeddedManifold::circle(1.0).unwrap();
        Oracle::new(ManifoldDensity::uniform(m, 512).unwrap(), 512).unwrap()
    }

    #[test]
    fn linear_split_examples() {
        let m = EmbeddedManifold::linear_subspace(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], 1.0).unwrap();
        let o = Oracle::new(ManifoldDensity::uniform(m, 24).unwrap(), 24).unwrap();
        let t = 0.4;
        let d = linear_subspace_decompose(&o, &[0.0, 0.0, 1.0], t).unwrap();
        assert!((d.s_perp[2] + 1.0 / h(t)).abs() < 1e-15);
        assert!(d.s_on[2].abs() < 1e-10);
        let inside = linear_subspace_decompose(&o, &[0.3, -0.2, 0.0], t).unwrap();
        assert!(norm(&inside.s_perp) == 0.0);
        assert!(matches!(
            linear_subspace_decompose(&circle_oracle(), &[1.0, 0.0], t),
            Err(Error::WrongManifoldKind { .. })
        ));
    }

    #[test]
    fn large_noise_reconstructs_score() {
        let o = circle_oracle();
        let m = o.manifold().clone();
        let atlas = Atlas::build(&m, 1.2).unwrap();
        let ln = LargeNoise::new(&o, &atlas).unwrap();
        for (x, t) in [([0.7, 0.4], 0.3), ([1.2, -0.5], 0.05), ([0.1, 0.0], 1.5)] {
            let d = ln.decompose(&x, t).unwrap();
            let s = o.score_at(&x, t).unwrap();
            let r = d.reconstruct();
            assert!(linalg::dist(&r, &s) < 1e-8 * (1.0 + norm(&s)));
            assert!((d.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_noise_routes_agree() {
        let o = circle_oracle();
        let t = 0.02;
        let a = alpha(t);
        let x = [a * 1.05 * 0.3f64.cos(), a * 1.05 * 0.3f64.sin()];
        let d = small_noise_decompose(&o, &x, t).unwrap();
        assert!(linalg::dist(&d.s_on, &d.s_on_ratio) < 1e-8 * (1.0 + norm(&d.s_on)));
        let frame = o.manifold().tangent_frame(&d.projection.iter().map(|v| v / a).collect::<Vec<_>>()).unwrap();
        assert!(dot(&d.s_perp, frame.column(0)).abs() < 1e-8);
    }

    #[test]
    fn interaction_bound_on_circle() {
        let o = circle_oracle();
        let t = 0.3;
        let a = alpha(t);
        let it = interaction_terms(&o, &[1.2 * a, 0.0], t, &[0.0, 1.0]).unwrap();
        // Π = (α, 0): E₁ = 2α², E₂ = 2⟨(0.2α, 0), (α, −α)⟩ = 0.4α²
        assert!((it.e1 - 2.0 * a * a).abs() < 1e-14);
        assert!((it.e2 - 0.4 * a * a).abs() < 1e-14);
        assert!(it.holds());
        let on = interaction_terms(&o, &[0.0, a], t, &[1.0, 0.0]).unwrap();
        assert!(on.e2.abs() < 1e-15);
    }

    #[test]
    fn threshold_is_positive() {
        assert!(large_noise_threshold(0.1, 1.0) > 0.0);
    }
}
