//! Discretized unit sphere and support-function geometry.

mod field;
mod geometry;
mod grid;

pub use field::{ScalarField, D1_SPECTRAL_RADIUS, D2_SPECTRAL_RADIUS, STENCIL_RADIUS};
pub use geometry::BodyGeometry;
pub use grid::{SphericalGrid, MIN_NODES};

pub(crate) use field::stencil_weights;
pub(crate) use geometry::{node_geometry, NodeFrame};
