use std::sync::Arc;

use super::field::{derivatives, ScalarField};
use super::grid::SphericalGrid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-node frame data needed to turn `(h, h_θ, h_θθ)` into geometry.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeFrame {
    pub dim: usize,
    pub normal: [f64; 3],
    pub tangent: [f64; 3],
    /// `cot θ` at interior nodes of the axisymmetric grid; `None` on S^1 and
    /// at pole-adjacent nodes, where the second radius takes its pole limit.
    pub cot: Option<f64>,
}

impl NodeFrame {
    pub fn at(grid: &SphericalGrid, i: usize) -> Self {
        let cot = if grid.dim() == 3 && !grid.is_pole_adjacent(i) {
            let t = grid.theta()[i];
            Some(t.cos() / t.sin())
        } else {
            None
        };
        Self {
            dim: grid.dim(),
            normal: grid.normal(i),
            tangent: grid.tangent(i),
            cot,
        }
    }
}

/// Geometry at a single node, generic so that dual numbers flow through.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NodeGeometry<T> {
    pub r1: T,
    pub r2: T,
    pub det: T,
    pub point: [T; 3],
    pub rho: T,
}

#[inline]
pub(crate) fn node_geometry<T: Scalar>(frame: &NodeFrame, h: T, dh: T, d2h: T) -> NodeGeometry<T> {
    let r1 = d2h + h;
    let (r2, det) = if frame.dim == 2 {
        (r1, r1)
    } else {
        let r2 = match frame.cot {
            Some(c) => dh * T::from_f64(c) + h,
            // h_θ cot θ → h_θθ at the poles
            None => r1,
        };
        (r2, r1 * r2)
    };
    let point = [
        h * T::from_f64(frame.normal[0]) + dh * T::from_f64(frame.tangent[0]),
        h * T::from_f64(frame.normal[1]) + dh * T::from_f64(frame.tangent[1]),
        h * T::from_f64(frame.normal[2]) + dh * T::from_f64(frame.tangent[2]),
    ];
    let rho = (h * h + dh * dh).sqrt();
    NodeGeometry {
        r1,
        r2,
        det,
        point,
        rho,
    }
}

/// All quantities of a convex body derived from its support function.
#[derive(Debug, Clone)]
pub struct BodyGeometry {
    pub h: ScalarField,
    /// `∇h`: `h′` on S^1, `h_θ` on the axisymmetric grid.
    pub grad_h: ScalarField,
    pub second: ScalarField,
    /// First principal radius (`h″+h`, or `h_θθ+h`).
    pub r1: ScalarField,
    /// Second principal radius; equals `r1` on S^1.
    pub r2: ScalarField,
    /// `det(∇²h + hI)`.
    pub det: ScalarField,
    /// Gauss curvature `1/det`.
    pub gauss: ScalarField,
    /// Boundary points `X = ∇h + hx` (third component zero on S^1).
    pub boundary: Vec<[f64; 3]>,
    pub rho: ScalarField,
    /// Radial directions `u = X/ρ`.
    pub directions: Vec<[f64; 3]>,
}

impl BodyGeometry {
    pub fn new(h: &ScalarField) -> Result<Self> {
        let grid = h.grid().clone();
        let hv = h.values();
        if let Some(i) = hv.iter().position(|&v| v <= 0.0) {
            return Err(Error::Domain {
                node: i,
                value: hv[i],
            });
        }
        let (d1, d2) = derivatives(&grid, hv);
        let n = hv.len();
        let mut r1 = Vec::with_capacity(n);
        let mut r2 = Vec::with_capacity(n);
        let mut det = Vec::with_capacity(n);
        let mut gauss = Vec::with_capacity(n);
        let mut rho = Vec::with_capacity(n);
        let mut boundary = Vec::with_capacity(n);
        let mut directions = Vec::with_capacity(n);
        for i in 0..n {
            let g = node_geometry(&NodeFrame::at(&grid, i), hv[i], d1[i], d2[i]);
            if !(g.r1 > 0.0) {
                return Err(Error::ConvexityLost {
                    node: i,
                    quantity: if grid.dim() == 2 { "b" } else { "r1" },
                    value: g.r1,
                });
            }
            if !(g.r2 > 0.0) {
                return Err(Error::ConvexityLost {
                    node: i,
                    quantity: "r2",
                    value: g.r2,
                });
            }
            r1.push(g.r1);
            r2.push(g.r2);
            det.push(g.det);
            gauss.push(1.0 / g.det);
            rho.push(g.rho);
            boundary.push(g.point);
            directions.push(g.point.map(|c| c / g.rho));
        }
        let wrap = |v: Vec<f64>| ScalarField::new(grid.clone(), v);
        Ok(Self {
            h: h.clone(),
            grad_h: wrap(d1)?,
            second: wrap(d2)?,
            r1: wrap(r1)?,
            r2: wrap(r2)?,
            det: wrap(det)?,
            gauss: wrap(gauss)?,
            boundary,
            rho: wrap(rho)?,
            directions,
        })
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        self.h.grid()
    }

    pub fn dim(&self) -> usize {
        self.grid().dim()
    }

    pub fn min_principal_radius(&self) -> f64 {
        self.r1.min().min(self.r2.min())
    }

    /// `∫_{S^{n-1}} g(ρ(u), u) du`, computed on the normal grid through
    /// `du = h ρ^{-n} det(∇²h + hI) dx`.
    pub fn integrate_radial(&self, g: impl Fn(f64, [f64; 3]) -> f64) -> f64 {
        let n = self.dim() as i32;
        let w = self.grid().weights();
        let mut acc = 0.0;
        for i in 0..w.len() {
            let rho = self.rho.values()[i];
            let jac = self.h.values()[i] * rho.powi(-n) * self.det.values()[i];
            acc += w[i] * g(rho, self.directions[i]) * jac;
        }
        acc
    }

    /// Same change of variables, for a fallible integrand.
    pub fn try_integrate_radial(
        &self,
        mut g: impl FnMut(f64, [f64; 3]) -> Result<f64>,
    ) -> Result<f64> {
        let n = self.dim() as i32;
        let w = self.grid().weights();
        let mut acc = 0.0;
        for i in 0..w.len() {
            let rho = self.rho.values()[i];
            let jac = self.h.values()[i] * rho.powi(-n) * self.det.values()[i];
            acc += w[i] * g(rho, self.directions[i])? * jac;
        }
        Ok(acc)
    }
}
