use std::f64::consts::PI;
use std::sync::Arc;

use super::expr::Expression;
use super::quadrature;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sphere::{ScalarField, SphericalGrid};

/// Absolute and relative tolerance of the antiderivative quadrature.
pub const ANTIDERIVATIVE_TOL: f64 = 1e-10;

/// Parameters of the L_p dual shortcut `φ(s) = s^{1-p}`, `G(y) = |y|^{q-n}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpDual {
    pub p: f64,
    pub q: f64,
}

/// Right-hand side `f` of the equation.
#[derive(Debug, Clone, PartialEq)]
pub enum SphereData {
    /// Expression in `x1..xn` (components of the normal) and `t` (its angle:
    /// circle angle on S^1, polar angle on S^2).
    Expr(Expression),
    /// Values at the grid nodes.
    Nodal(Vec<f64>),
}

/// The triple `(φ, G, f)` in dimension `n`, with
/// `G(y) = G_radial(|y|) · G_angular(y/|y|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    dim: usize,
    phi: Expression,
    g_radial: Expression,
    g_angular: Option<Expression>,
    f: SphereData,
    lp_dual: Option<LpDual>,
}

pub fn direction_vars(dim: usize) -> &'static [&'static str] {
    if dim == 2 {
        &["u1", "u2"]
    } else {
        &["u1", "u2", "u3"]
    }
}

pub fn normal_vars(dim: usize) -> &'static [&'static str] {
    if dim == 2 {
        &["x1", "x2", "t"]
    } else {
        &["x1", "x2", "x3", "t"]
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "unsupported dimension n = {dim} (expected 2 or 3)"
        )))
    }
}

impl ProblemData {
    /// Builds problem data from expression texts. `g_angular = None` means
    /// an isotropic `G`.
    pub fn from_texts(
        dim: usize,
        phi: &str,
        g_radial: &str,
        g_angular: Option<&str>,
        f: &str,
    ) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            phi: Expression::parse(phi, &["s"])?,
            g_radial: Expression::parse(g_radial, &["r"])?,
            g_angular: g_angular
                .map(|t| Expression::parse(t, direction_vars(dim)))
                .transpose()?,
            f: SphereData::Expr(Expression::parse(f, normal_vars(dim))?),
            lp_dual: None,
        })
    }

    /// The L_p dual Minkowski data `φ(s) = s^{1-p}`, `G(y) = |y|^{q-n}`.
    pub fn lp_dual(dim: usize, p: f64, q: f64, f: &str) -> Result<Self> {
        check_dim(dim)?;
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::Config("lp_dual exponents must be finite".into()));
        }
        Ok(Self {
            dim,
            phi: Expression::power("s", 1.0 - p),
            g_radial: Expression::power("r", q - dim as f64),
            g_angular: None,
            f: SphereData::Expr(Expression::parse(f, normal_vars(dim))?),
            lp_dual: Some(LpDual { p, q }),
        })
    }

    /// Replaces `f` by nodal values on `grid`.
    pub fn with_nodal_f(mut self, values: Vec<f64>) -> Self {
        self.f = SphereData::Nodal(values);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lp_params(&self) -> Option<LpDual> {
        self.lp_dual
    }

    pub fn phi_expr(&self) -> &Expression {
        &self.phi
    }

    pub fn g_radial_expr(&self) -> &Expression {
        &self.g_radial
    }

    pub fn g_angular_expr(&self) -> Option<&Expression> {
        self.g_angular.as_ref()
    }

    pub fn f_data(&self) -> &SphereData {
        &self.f
    }

    #[inline]
    pub(crate) fn phi_at<T: Scalar>(&self, s: T) -> T {
        self.phi.eval(&[s])
    }

    /// `G` at a point `y ≠ 0` of R^n (third component ignored for n = 2).
    #[inline]
    pub(crate) fn g_at<T: Scalar>(&self, y: [T; 3]) -> T {
        let r = if self.dim == 2 {
            (y[0] * y[0] + y[1] * y[1]).sqrt()
        } else {
            (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt()
        };
        let radial = self.g_radial.eval(&[r]);
        match &self.g_angular {
            None => radial,
            Some(a) => {
                let u = [y[0] / r, y[1] / r, y[2] / r];
                radial * a.eval(&u[..self.dim])
            }
        }
    }

    pub fn eval_phi(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(Error::Model(format!("φ evaluated at non-positive s = {s}")));
        }
        positive("φ", self.phi_at(s), || format!("s={s}"))
    }

    /// `G(r·u)` for a unit direction `u`.
    pub fn eval_g(&self, r: f64, u: [f64; 3]) -> Result<f64> {
        Ok(self.eval_g_radial(r)? * self.eval_g_angular(u)?)
    }

    /// Radial factor `G_radial(r)`.
    pub fn eval_g_radial(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Model(format!("G evaluated at non-positive r = {r}")));
        }
        positive("G", self.g_radial.eval(&[r]), || format!("r={r}"))
    }

    pub fn eval_g_angular(&self, u: [f64; 3]) -> Result<f64> {
        match &self.g_angular {
            None => Ok(1.0),
            Some(a) => positive("G_angular", a.eval(&u[..self.dim]), || {
                a.describe_point(&u[..self.dim])
            }),
        }
    }

    /// `f` at a unit normal `x`.
    pub fn eval_f(&self, x: [f64; 3]) -> Result<f64> {
        match &self.f {
            SphereData::Expr(e) => {
                let t = if self.dim == 2 {
                    x[1].atan2(x[0]).rem_euclid(2.0 * PI)
                } else {
                    x[2].clamp(-1.0, 1.0).acos()
                };
                let mut vars = [0.0; 4];
                vars[..self.dim].copy_from_slice(&x[..self.dim]);
                vars[self.dim] = t;
                let vars = &vars[..=self.dim];
                positive("f", e.eval(vars), || e.describe_point(vars))
            }
            SphereData::Nodal(_) => Err(Error::NotApplicable(
                "f is tabulated on the grid; evaluate it with f_on_grid".into(),
            )),
        }
    }

    /// `f` sampled at the grid nodes; checks positivity and, on the
    /// axisymmetric grid, rotational symmetry.
    pub fn f_on_grid(&self, grid: &Arc<SphericalGrid>) -> Result<ScalarField> {
        self.check_grid(grid)?;
        let values = match &self.f {
            SphereData::Nodal(v) => {
                if v.len() != grid.len() {
                    return Err(Error::Config(format!(
                        "tabulated f has {} values, grid has {} nodes",
                        v.len(),
                        grid.len()
                    )));
                }
                if let Some(i) = v.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::Model(format!("f = {} at node {i} is not positive", v[i])));
                }
                v.clone()
            }
            SphereData::Expr(_) => {
                let mut v = Vec::with_capacity(grid.len());
                for i in 0..grid.len() {
                    let x = grid.normal(i);
                    let fx = self.eval_f(x)?;
                    if self.dim == 3 {
                        for az in [0.5 * PI, PI, 1.5 * PI] {
                            let y = rotate_azimuth(x, az);
                            let fy = self.eval_f(y)?;
                            if (fy - fx).abs() > 1e-12 * fx.abs().max(1.0) {
                                return Err(Error::Config(
                                    "f is not rotationally symmetric about the x3 axis".into(),
                                ));
                            }
                        }
                    }
                    v.push(fx);
                }
                v
            }
        };
        ScalarField::new(grid.clone(), values)
    }

    fn check_grid(&self, grid: &SphericalGrid) -> Result<()> {
        if grid.dim() != self.dim {
            return Err(Error::Config(format!(
                "problem dimension {} does not match grid dimension {}",
                self.dim,
                grid.dim()
            )));
        }
        if self.dim == 3 {
            if let Some(a) = &self.g_angular {
                for i in 0..grid.len() {
                    let u = grid.normal(i);
                    let base = a.eval(&u);
                    for az in [0.5 * PI, PI, 1.5 * PI] {
                        let v = a.eval(&rotate_azimuth(u, az));
                        if (v - base).abs() > 1e-12 * base.abs().max(1.0) {
                            return Err(Error::Config(
                                "G_angular is not rotationally symmetric about the x3 axis".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Range of `G_angular` over the grid directions.
    pub fn g_angular_range(&self, grid: &SphericalGrid) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..grid.len() {
            let v = self.eval_g_angular(grid.normal(i))?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    /// Whether `G` depends on `|y|` only (checked on the grid directions).
    pub fn is_isotropic(&self, grid: &SphericalGrid) -> bool {
        match &self.g_angular {
            None => true,
            Some(_) => matches!(self.g_angular_range(grid), Ok((lo, hi)) if lo == 1.0 && hi == 1.0),
        }
    }

    /// `φ̃(t) = ∫_1^t ds/φ(s)`.
    pub fn phi_tilde(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Model(format!("φ̃ evaluated at non-positive t = {t}")));
        }
        if let Some(LpDual { p, .. }) = self.lp_dual {
            return Ok(power_antiderivative(t, p));
        }
        quadrature::integrate(
            |s| self.eval_phi(s).map(|v| 1.0 / v),
            1.0,
            t,
            ANTIDERIVATIVE_TOL,
            ANTIDERIVATIVE_TOL,
        )
    }

    /// `G̃(r, u) = ∫_1^r G(s u) s^{n-1} ds`.
    pub fn g_tilde(&self, r: f64, u: [f64; 3]) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Model(format!("G̃ evaluated at non-positive r = {r}")));
        }
        if let Some(LpDual { q, .. }) = self.lp_dual {
            return Ok(power_antiderivative(r, q));
        }
        let k = self.dim as i32 - 1;
        let radial = quadrature::integrate(
            |s| {
                positive("G", self.g_radial.eval(&[s]), || format!("r={s}")).map(|g| g * s.powi(k))
            },
            1.0,
            r,
            ANTIDERIVATIVE_TOL,
            ANTIDERIVATIVE_TOL,
        )?;
        Ok(radial * self.eval_g_angular(u)?)
    }
}

/// `∫_1^t s^{a-1} ds`
fn power_antiderivative(t: f64, a: f64) -> f64 {
    if a == 0.0 {
        t.ln()
    } else {
        (a * t.ln()).exp_m1() / a
    }
}

fn positive(name: &str, v: f64, at: impl FnOnce() -> String) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Model(format!(
            "{name} = {v} at {} (must be positive and finite)",
            at()
        )))
    }
}

fn rotate_azimuth(x: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * x[0] - s * x[1], s * x[0] + c * x[1], x[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: [f64; 3] = [1.0, 0.0, 0.0];

    #[test]
    fn lp_dual_values() {
        let d = ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap();
        assert_eq!(d.eval_phi(4.0).unwrap(), 0.25);
        assert_eq!(d.eval_g(2.0, E1).unwrap(), 0.25);
        assert_eq!(d.eval_g(2.0, [0.0, 1.0, 0.0]).unwrap(), 0.25);
    }

    #[test]
    fn constant_and_power_expressions() {
        let d = ProblemData::from_texts(2, "1", "r^(-3)", Some("1"), "1").unwrap();
        assert_eq!(d.eval_phi(7.0).unwrap(), 1.0);
        for a in [0.0, 1.0, 2.5] {
            let u = [f64::cos(a), f64::sin(a), 0.0];
            assert_eq!(d.eval_g(2.0, u).unwrap(), 0.125);
        }
    }

    #[test]
    fn nonpositive_values_are_model_errors() {
        let d = ProblemData::from_texts(2, "s - 2", "1", None, "cos(t)").unwrap();
        assert!(matches!(d.eval_phi(1.0), Err(Error::Model(_))));
        assert!(d.eval_phi(3.0).is_ok());
        assert!(matches!(d.eval_f([-1.0, 0.0, 0.0]), Err(Error::Model(_))));
        assert!(matches!(d.eval_phi(0.0), Err(Error::Model(_))));
    }

    #[test]
    fn antiderivatives() {
        let ones = ProblemData::from_texts(2, "1", "1", None, "1").unwrap();
        assert!((ones.phi_tilde(2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((ones.g_tilde(2.0, E1).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(ones.phi_tilde(1.0).unwrap(), 0.0);
        let lp = ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap();
        assert!((lp.phi_tilde(4.0).unwrap() - 7.5).abs() < 1e-10);
        // G̃ = ∫_1^r s^{-1} ds = ln r
        assert!((lp.g_tilde(3.0, E1).unwrap() - 3f64.ln()).abs() < 1e-10);
        assert!((lp.g_tilde(0.5, E1).unwrap() - 0.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn power_antiderivatives_match_quadrature() {
        for (dim, p, q) in [(2, 2.0, 0.0), (2, 1.5, 1.0), (3, 3.0, -1.0), (3, 0.0, 2.0)] {
            let lp = ProblemData::lp_dual(dim, p, q, "1").unwrap();
            let raw = ProblemData::from_texts(
                dim,
                &format!("s^{}", 1.0 - p),
                &format!("r^{}", q - dim as f64),
                None,
                "1",
            )
            .unwrap();
            for t in [0.3, 0.9, 1.0, 1.7, 5.0] {
                let (a, b) = (lp.phi_tilde(t).unwrap(), raw.phi_tilde(t).unwrap());
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{p} {t}: {a} {b}");
                let (a, b) = (lp.g_tilde(t, E1).unwrap(), raw.g_tilde(t, E1).unwrap());
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{q} {t}: {a} {b}");
            }
        }
    }

    #[test]
    fn antiderivatives_are_increasing() {
        let d = ProblemData::from_texts(2, "2 + sin(s)", "exp(-r)", Some("1.5 + u1"), "1").unwrap();
        let u = [0.6, 0.8, 0.0];
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for k in 1..40 {
            let t = 0.1 * k as f64;
            let cur = (d.phi_tilde(t).unwrap(), d.g_tilde(t, u).unwrap());
            assert!(cur.0 > prev.0 && cur.1 > prev.1);
            prev = cur;
        }
    }

    #[test]
    fn grid_sampling_and_symmetry() {
        let g = SphericalGrid::shared(3, 32).unwrap();
        let d = ProblemData::lp_dual(3, 2.0, 0.0, "1 + 0.2*x3^2").unwrap();
        let f = d.f_on_grid(&g).unwrap();
        assert!((f.values()[0] - (1.0 + 0.2 * g.theta()[0].cos().powi(2))).abs() < 1e-15);
        let d = ProblemData::lp_dual(3, 2.0, 0.0, "1 + 0.2*x1").unwrap();
        assert!(matches!(d.f_on_grid(&g), Err(Error::Config(_))));
        let d = ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap().with_nodal_f(vec![1.0; 31]);
        let g2 = SphericalGrid::shared(2, 32).unwrap();
        assert!(d.f_on_grid(&g2).is_err());
        assert!(d.f_on_grid(&g).is_err());
    }

    #[test]
    fn angle_variable() {
        let d = ProblemData::from_texts(2, "1", "1", None, "1 + 0.5*cos(2*t)").unwrap();
        assert!((d.eval_f([0.0, 1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((d.eval_f([0.0, -1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
    }
}
