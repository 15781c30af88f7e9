use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Smallest admissible node count.
pub const MIN_NODES: usize = 16;

/// Uniform discretization of S^1, or of S^2 restricted to axisymmetric
/// fields (one node per polar angle).
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalGrid {
    dim: usize,
    theta: Vec<f64>,
    weights: Vec<f64>,
    spacing: f64,
}

impl SphericalGrid {
    /// Builds a grid for S^{dim-1} with `nodes` nodes.
    ///
    /// For `dim == 2` the nodes are `θ_i = 2πi/N` with trapezoid weights
    /// `2π/N`. For `dim == 3` the nodes are the polar angles
    /// `θ_i = (i+½)π/N` (poles excluded) and the weights are Fejér's first
    /// rule in `cos θ`, scaled by the azimuthal `2π`.
    pub fn new(dim: usize, nodes: usize) -> Result<Self> {
        if nodes < MIN_NODES {
            return Err(Error::Config(format!(
                "grid needs at least {MIN_NODES} nodes, got {nodes}"
            )));
        }
        match dim {
            2 => {
                let spacing = 2.0 * PI / nodes as f64;
                let theta = (0..nodes).map(|i| i as f64 * spacing).collect();
                let weights = vec![spacing; nodes];
                Ok(Self {
                    dim,
                    theta,
                    weights,
                    spacing,
                })
            }
            3 => {
                let spacing = PI / nodes as f64;
                let theta: Vec<f64> = (0..nodes).map(|i| (i as f64 + 0.5) * spacing).collect();
                let weights = theta
                    .iter()
                    .map(|&t| 2.0 * PI * fejer_weight(t, nodes))
                    .collect();
                Ok(Self {
                    dim,
                    theta,
                    weights,
                    spacing,
                })
            }
            _ => Err(Error::Config(format!(
                "unsupported dimension n = {dim} (expected 2 or 3)"
            ))),
        }
    }

    pub fn shared(dim: usize, nodes: usize) -> Result<Arc<Self>> {
        Self::new(dim, nodes).map(Arc::new)
    }

    /// Ambient dimension n (the grid discretizes S^{n-1}).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Area of S^{n-1}.
    pub fn sphere_area(&self) -> f64 {
        match self.dim {
            2 => 2.0 * PI,
            _ => 4.0 * PI,
        }
    }

    /// Unit normal x at node `i`, embedded in R^3. For `dim == 3` the node
    /// lies on the meridian of zero azimuth.
    pub fn normal(&self, i: usize) -> [f64; 3] {
        let (s, c) = self.theta[i].sin_cos();
        match self.dim {
            2 => [c, s, 0.0],
            _ => [s, 0.0, c],
        }
    }

    /// Unit tangent ∂x/∂θ at node `i`.
    pub fn tangent(&self, i: usize) -> [f64; 3] {
        let (s, c) = self.theta[i].sin_cos();
        match self.dim {
            2 => [-s, c, 0.0],
            _ => [c, 0.0, -s],
        }
    }

    /// Whether node `i` is the first or last node next to a pole of an
    /// axisymmetric grid.
    pub fn is_pole_adjacent(&self, i: usize) -> bool {
        self.dim == 3 && (i == 0 || i + 1 == self.len())
    }

    /// Maps a possibly out-of-range stencil index onto a node: periodic wrap
    /// on S^1, even reflection across the poles on the axisymmetric grid.
    #[inline]
    pub(crate) fn wrap(&self, i: isize) -> usize {
        let n = self.len() as isize;
        let j = if self.dim == 2 {
            i.rem_euclid(n)
        } else if i < 0 {
            -1 - i
        } else if i >= n {
            2 * n - 1 - i
        } else {
            i
        };
        j as usize
    }

    /// Node whose polar angle (or circle angle) is closest to `angle`.
    pub fn nearest_node(&self, angle: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &t) in self.theta.iter().enumerate() {
            let mut d = (t - angle).abs();
            if self.dim == 2 {
                d = d.min(2.0 * PI - d);
            }
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Fejér's first rule weight on [-1, 1] for the node `cos θ`.
fn fejer_weight(theta: f64, nodes: usize) -> f64 {
    let mut acc = 0.0;
    for j in 1..=nodes / 2 {
        let j = j as f64;
        acc += (2.0 * j * theta).cos() / (4.0 * j * j - 1.0);
    }
    2.0 / nodes as f64 * (1.0 - 2.0 * acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_sphere_area() {
        let g = SphericalGrid::new(2, 64).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 2.0 * PI).abs() / (2.0 * PI) <= 1e-12);
        let g = SphericalGrid::new(3, 64).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 4.0 * PI).abs() / (4.0 * PI) <= 1e-12);
    }

    #[test]
    fn rejects_bad_configurations() {
        assert!(matches!(SphericalGrid::new(4, 64), Err(Error::Config(_))));
        assert!(matches!(SphericalGrid::new(2, 8), Err(Error::Config(_))));
        assert!(SphericalGrid::new(3, 16).is_ok());
    }

    #[test]
    fn axisymmetric_nodes_avoid_poles() {
        let g = SphericalGrid::new(3, 32).unwrap();
        assert!((g.theta()[0] - PI / 64.0).abs() < 1e-15);
        assert!(g.theta().iter().all(|&t| t > 0.0 && t < PI));
        assert!(g.weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn fejer_integrates_polynomials_in_cos() {
        // ∫_{S^2} z^4 dA = 4π/5
        let g = SphericalGrid::new(3, 40).unwrap();
        let s: f64 = (0..g.len())
            .map(|i| g.weights()[i] * g.normal(i)[2].powi(4))
            .sum();
        assert!((s - 4.0 * PI / 5.0).abs() < 1e-13);
    }

    #[test]
    fn reflection_and_wrap() {
        let g = SphericalGrid::new(2, 16).unwrap();
        assert_eq!(g.wrap(-1), 15);
        assert_eq!(g.wrap(17), 1);
        let g = SphericalGrid::new(3, 16).unwrap();
        assert_eq!(g.wrap(-1), 0);
        assert_eq!(g.wrap(-3), 2);
        assert_eq!(g.wrap(16), 15);
        assert_eq!(g.wrap(18), 13);
    }
}
