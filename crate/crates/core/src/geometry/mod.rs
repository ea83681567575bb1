//! Analytic embedded manifolds and exponential-chart atlases.

mod atlas;
mod manifold;

pub use atlas::{bump, Atlas, Chart};
pub use manifold::{unit_sphere_area, EmbeddedManifold, ManifoldKind};
