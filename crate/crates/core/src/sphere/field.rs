use std::sync::Arc;

use super::grid::SphericalGrid;
use crate::error::{Error, Result};

/// Sixth-order central weights for the first derivative, offsets 1..=3.
const D1: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
/// Sixth-order central weights for the second derivative, offsets 0..=3.
const D2: [f64; 4] = [-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0];

/// Half-width of the difference stencils.
pub const STENCIL_RADIUS: usize = 3;

/// Largest |symbol| of the discrete second-derivative operator, times dθ².
pub const D2_SPECTRAL_RADIUS: f64 = 49.0 / 18.0 + 3.0 + 0.3 + 1.0 / 45.0;
/// Upper bound on |symbol| of the discrete first-derivative operator, times dθ.
pub const D1_SPECTRAL_RADIUS: f64 = 1.5 + 0.3 + 1.0 / 30.0;

/// Nodal values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<SphericalGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SphericalGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain {
                node: i,
                value: values[i],
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<SphericalGrid>, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    /// Samples `f(θ)` at every node.
    pub fn from_fn(grid: Arc<SphericalGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.theta().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∫_{S^{n-1}} g dx` by the grid quadrature.
    pub fn integrate(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(v, w)| v * w)
            .sum()
    }

    /// First and second θ-derivatives.
    pub fn differentiate(&self) -> (ScalarField, ScalarField) {
        let (d1, d2) = derivatives(&self.grid, &self.values);
        (
            Self {
                grid: self.grid.clone(),
                values: d1,
            },
            Self {
                grid: self.grid.clone(),
                values: d2,
            },
        )
    }
}

/// Sixth-order central differences in θ with periodic wrap on S^1 and even
/// reflection across the poles on the axisymmetric grid.
pub(crate) fn derivatives(grid: &SphericalGrid, h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let dx = grid.spacing();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        let at = |k: isize| h[grid.wrap(i as isize + k)];
        let mut a = 0.0;
        let mut b = 0.0;
        for k in 1..=STENCIL_RADIUS {
            let (p, m) = (at(k as isize), at(-(k as isize)));
            a += D1[k - 1] * (p - m);
            // D2[0] = -2 Σ D2[k]; grouping this way keeps constants exact
            b += D2[k] * ((p - h[i]) + (m - h[i]));
        }
        d1[i] = a / dx;
        d2[i] = b / (dx * dx);
    }
    (d1, d2)
}

/// Stencil weights `(offset, ∂h'_i/∂h_{i+offset}, ∂h''_i/∂h_{i+offset})`.
pub(crate) fn stencil_weights(dx: f64) -> [(isize, f64, f64); 7] {
    let mut out = [(0isize, 0.0, 0.0); 7];
    out[0] = (0, 0.0, D2[0] / (dx * dx));
    for k in 1..=STENCIL_RADIUS {
        out[2 * k - 1] = (k as isize, D1[k - 1] / dx, D2[k] / (dx * dx));
        out[2 * k] = (-(k as isize), -D1[k - 1] / dx, D2[k] / (dx * dx));
    }
    out
}
