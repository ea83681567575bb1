//! Repository-wide numerical tolerances.
//!
//! All analytic manifolds here are exactly representable, so these only
//! account for floating-point accumulation.

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Orthonormality of frames and bases.
    pub orthonormal: f64,
    /// Chart centers and sampled points must lie this close to the manifold.
    pub on_manifold: f64,
    /// Looser membership test used for caller-supplied points.
    pub on_manifold_input: f64,
    /// Tie threshold for point-set projections and cut-locus detection.
    pub tie: f64,
    /// Points within this distance of the reach boundary are rejected.
    pub reach_margin: f64,
    /// Partition of unity must sum to one within this.
    pub partition_of_unity: f64,
    /// Local chart masses must sum to one within this.
    pub chart_mass_sum: f64,
    /// Maximum relative change between quadrature refinement levels.
    pub quadrature_refinement: f64,
    /// Stabilised log-density below which the oracle reports underflow.
    pub log_density_floor: f64,
    /// Chart mass below which a chart is considered empty.
    pub empty_chart: f64,
    /// Step for finite-difference volume factors.
    pub volume_fd_step: f64,
}

pub const TOL: Tolerances = Tolerances {
    orthonormal: 1e-12,
    on_manifold: 1e-12,
    on_manifold_input: 1e-9,
    tie: 1e-12,
    reach_margin: 1e-9,
    partition_of_unity: 1e-10,
    chart_mass_sum: 1e-8,
    quadrature_refinement: 1e-4,
    log_density_floor: -745.0,
    empty_chart: 1e-12,
    volume_fd_step: 1e-6,
};
