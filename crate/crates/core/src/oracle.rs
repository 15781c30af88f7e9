//! Independent checks on S^1: a damped Newton solver for the stationary
//! equation and a polygonal perimeter.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::ProblemData;
use crate::scalar::Dual;
use crate::sphere::{
    node_geometry, stencil_weights, BodyGeometry, NodeFrame, ScalarField, SphericalGrid,
};

/// Singular values below this fraction of the largest are dropped, so that
/// translations (exact null modes when `φ` and `G` are constant) are left
/// untouched instead of amplified.
const SVD_CUTOFF: f64 = 1e-9;
const MIN_DAMPING: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub damping: f64,
    pub max_iters: usize,
    /// Target for `sup|R|`.
    pub tol: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            damping: 1.0,
            max_iters: 50,
            tol: 1e-11,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Config("newton.damping must lie in (0, 1]".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("newton.tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub h: ScalarField,
    pub iterations: usize,
    /// Final `sup|R|`.
    pub residual: f64,
}

struct Stationary<'a> {
    data: &'a ProblemData,
    grid: &'a SphericalGrid,
    frames: Vec<NodeFrame>,
    f: Vec<f64>,
}

impl Stationary<'_> {
    /// `R = φ(h) G(X) (h″ + h) − f`, or `None` if `h` leaves the admissible set.
    fn residual(&self, h: &ScalarField) -> Option<Vec<f64>> {
        let geom = BodyGeometry::new(h).ok()?;
        let r: Vec<f64> = (0..h.len())
            .map(|i| {
                let phi = self.data.phi_at(geom.h.values()[i]);
                let g = self.data.g_at(geom.boundary[i]);
                phi * g * geom.det.values()[i] - self.f[i]
            })
            .collect();
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self, h: &ScalarField) -> DMatrix<f64> {
        let n = h.len();
        let (dh, d2h) = h.differentiate();
        let weights = stencil_weights(self.grid.spacing());
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let hi = Dual::<3>::variable(h.values()[i], 0);
            let d1 = Dual::<3>::variable(dh.values()[i], 1);
            let d2 = Dual::<3>::variable(d2h.values()[i], 2);
            let ng = node_geometry(&self.frames[i], hi, d1, d2);
            let r = self.data.phi_at(hi) * self.data.g_at(ng.point) * ng.det;
            let [a0, a1, a2] = r.eps;
            jac[(i, i)] += a0;
            for (off, w1, w2) in weights {
                jac[(i, self.grid.wrap(i as isize + off))] += a1 * w1 + a2 * w2;
            }
        }
        jac
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// Solves `φ(h) G(∇h + hx) (h″ + h) = f` on S^1 by damped Newton iteration
/// from `h_init`. Steps that leave the positive, uniformly convex set halve
/// the damping.
pub fn solve_stationary_n2(
    data: &ProblemData,
    h_init: &ScalarField,
    cfg: &NewtonConfig,
) -> Result<NewtonResult> {
    cfg.validate()?;
    let grid = h_init.grid().clone();
    if grid.dim() != 2 || data.dim() != 2 {
        return Err(Error::NotApplicable(
            "the Newton solver handles n = 2 only".into(),
        ));
    }
    let problem = Stationary {
        data,
        grid: &grid,
        frames: (0..grid.len()).map(|i| NodeFrame::at(&grid, i)).collect(),
        f: data.f_on_grid(&grid)?.into_values(),
    };
    BodyGeometry::new(h_init)?;
    let mut h = h_init.clone();
    let mut r = problem
        .residual(&h)
        .ok_or_else(|| Error::Model("residual is not finite at the initial body".into()))?;
    let mut iterations = 0;
    while sup(&r) > cfg.tol {
        if iterations == cfg.max_iters {
            return Err(Error::NonConvergence {
                iterations,
                residual: sup(&r),
            });
        }
        iterations += 1;
        let svd = problem.jacobian(&h).svd(true, true);
        let cutoff = SVD_CUTOFF * svd.singular_values.max();
        let step = svd
            .solve(&(-DVector::from_column_slice(&r)), cutoff)
            .map_err(|e| Error::Model(format!("newton solve failed: {e}")))?;

        let mut damping = cfg.damping;
        loop {
            let trial: Vec<f64> = h
                .values()
                .iter()
                .zip(step.iter())
                .map(|(h, d)| h + damping * d)
                .collect();
            let accepted = ScalarField::new(grid.clone(), trial)
                .ok()
                .and_then(|t| problem.residual(&t).map(|r| (t, r)));
            if let Some((t, tr)) = accepted {
                h = t;
                r = tr;
                break;
            }
            damping *= 0.5;
            if damping < MIN_DAMPING {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: sup(&r),
                });
            }
        }
        log::debug!("newton iteration {iterations}: sup|R| = {:e}", sup(&r));
    }
    Ok(NewtonResult {
        h,
        iterations,
        residual: sup(&r),
    })
}

/// `f := φ(h) G(X) det(b)` for a known body, so that `h` solves the equation exactly
/// on the grid.
pub fn manufactured_rhs(data: &ProblemData, h: &ScalarField) -> Result<Vec<f64>> {
    let geom = BodyGeometry::new(h)?;
    (0..h.len())
        .map(|i| {
            let v = data.eval_phi(geom.h.values()[i])? * data.g_at(geom.boundary[i]) * geom.det.values()[i];
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Model(format!("manufactured f = {v} at node {i}")))
            }
        })
        .collect()
}

/// Perimeter of the polygon through consecutive boundary points.
pub fn polygonal_length(body: &BodyGeometry) -> Result<f64> {
    if body.dim() != 2 {
        return Err(Error::NotApplicable("polygonal length needs n = 2".into()));
    }
    let x = &body.boundary;
    Ok((0..x.len())
        .map(|i| {
            let (a, b) = (x[i], x[(i + 1) % x.len()]);
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        })
        .sum())
}
