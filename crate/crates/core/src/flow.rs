//! Explicit time integration of the support-function flow
//! `∂h/∂t = −f K h / (G(∇h + hx) φ(h)) + h`.

use std::sync::Arc;

use log::{debug, info};

use crate::diagnostics::{self, EnergyTrace, TraceRow};
use crate::error::{Error, Result};
use crate::model::ProblemData;
use crate::scalar::Dual;
use crate::sphere::{
    node_geometry, BodyGeometry, NodeFrame, ScalarField, SphericalGrid, D1_SPECTRAL_RADIUS,
    D2_SPECTRAL_RADIUS,
};

/// Length of the trailing time window used by the energy-slope stop.
pub const ENERGY_SLOPE_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Largest step; `None` means `0.1 · min principal radius of h0`.
    pub dt0: Option<f64>,
    pub dt_min: f64,
    /// Fraction of the explicit stability limit actually used.
    pub safety: f64,
    pub max_steps: usize,
    /// Stop once `sup|R| / max f` falls to this value.
    pub stop_residual: f64,
    /// Stop (as stalled) once `|ΔJ|/Δt` over the trailing window falls to this value.
    pub stop_energy_slope: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt0: None,
            dt_min: 1e-12,
            safety: 0.9,
            max_steps: 500_000,
            stop_residual: 1e-8,
            stop_energy_slope: 1e-18,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if let Some(dt0) = self.dt0 {
            if !(dt0 > 0.0) || dt0 < self.dt_min {
                return bad("flow.dt0 must satisfy 0 < dt_min ≤ dt0");
            }
        }
        if !(self.dt_min > 0.0) {
            return bad("flow.dt_min must be positive");
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return bad("flow.safety must lie in (0, 1)");
        }
        if !(self.stop_residual > 0.0) || !(self.stop_energy_slope > 0.0) {
            return bad("flow tolerances must be positive");
        }
        Ok(())
    }
}

/// A step-size halving forced by a positivity or convexity guard.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardEvent {
    pub step: usize,
    pub dt_rejected: f64,
    pub node: usize,
    pub quantity: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GuardFlags {
    pub halvings: usize,
    pub events: Vec<GuardEvent>,
}

/// Immutable snapshot of the evolving body.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub time: f64,
    pub h: ScalarField,
    pub last_dt: f64,
    pub step_index: usize,
    pub guard: GuardFlags,
}

impl FlowState {
    pub fn initial(h: ScalarField) -> Self {
        Self {
            time: 0.0,
            h,
            last_dt: 0.0,
            step_index: 0,
            guard: GuardFlags::default(),
        }
    }
}

/// Stationarity residual `R = φ(h) G(X) det(b) − f`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub field: ScalarField,
    /// `max|R| / max f`
    pub sup_rel: f64,
    /// `‖R‖₂ / ‖f‖₂` with the grid quadrature.
    pub l2_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Converged,
    MaxSteps,
    /// The energy slope fell below `stop_energy_slope` before the residual
    /// reached `stop_residual`.
    Stalled,
    GuardFailure {
        node: usize,
        quantity: &'static str,
        value: f64,
    },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: FlowState,
    pub status: RunStatus,
    pub trace: EnergyTrace,
    pub residual: Residual,
    pub initial_energy: f64,
    /// `(min h0, max h0)`
    pub initial_range: (f64, f64),
}

/// Problem data bound to a grid, with `f` sampled once.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    data: ProblemData,
    grid: Arc<SphericalGrid>,
    f: ScalarField,
    frames: Vec<NodeFrame>,
}

impl FlowProblem {
    pub fn new(data: ProblemData, grid: Arc<SphericalGrid>) -> Result<Self> {
        let f = data.f_on_grid(&grid)?;
        let frames = (0..grid.len()).map(|i| NodeFrame::at(&grid, i)).collect();
        Ok(Self {
            data,
            grid,
            f,
            frames,
        })
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn geometry(&self, h: &ScalarField) -> Result<BodyGeometry> {
        if h.grid() != &self.grid && **h.grid() != *self.grid {
            return Err(Error::Config("field lives on a different grid".into()));
        }
        BodyGeometry::new(h)
    }

    /// `(φ(h_i), G(X_i))` at node `i`, checked for positivity.
    pub(crate) fn factors(&self, geom: &BodyGeometry, i: usize) -> Result<(f64, f64)> {
        let h = geom.h.values()[i];
        let phi = self.data.phi_at(h);
        let g = self.data.g_at(geom.boundary[i]);
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(Error::Model(format!("φ(h) = {phi} at node {i} (h = {h})")));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Model(format!("G(X) = {g} at node {i}")));
        }
        Ok((phi, g))
    }

    /// `F = f K h / (G(X) φ(h))` at every node.
    pub fn speed_term(&self, h: &ScalarField) -> Result<ScalarField> {
        let geom = self.geometry(h)?;
        ScalarField::new(self.grid.clone(), self.speed_values(&geom)?)
    }

    pub(crate) fn speed_values(&self, geom: &BodyGeometry) -> Result<Vec<f64>> {
        let f = self.f.values();
        (0..self.grid.len())
            .map(|i| {
                let (phi, g) = self.factors(geom, i)?;
                Ok(f[i] * geom.gauss.values()[i] * geom.h.values()[i] / (g * phi))
            })
            .collect()
    }

    /// Right-hand side `−F + h` of the flow.
    pub fn rhs(&self, geom: &BodyGeometry) -> Result<Vec<f64>> {
        let mut v = self.speed_values(geom)?;
        for (vi, h) in v.iter_mut().zip(geom.h.values()) {
            *vi = h - *vi;
        }
        Ok(v)
    }

    pub fn residual(&self, h: &ScalarField) -> Result<Residual> {
        self.residual_of(&self.geometry(h)?)
    }

    pub fn residual_of(&self, geom: &BodyGeometry) -> Result<Residual> {
        let f = self.f.values();
        let w = self.grid.weights();
        let mut r = Vec::with_capacity(f.len());
        for i in 0..f.len() {
            let (phi, g) = self.factors(geom, i)?;
            r.push(phi * g * geom.det.values()[i] - f[i]);
        }
        let sup = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let l2: f64 = r.iter().zip(w).map(|(v, w)| v * v * w).sum();
        let f2: f64 = f.iter().zip(w).map(|(v, w)| v * v * w).sum();
        Ok(Residual {
            sup_rel: sup / self.f.max(),
            l2_rel: (l2 / f2).sqrt(),
            field: ScalarField::new(self.grid.clone(), r)?,
        })
    }

    /// Explicit stability limit of Heun's method for the flow linearized at
    /// `geom`: `2 / λ`, with λ a Gershgorin-type bound assembled from the
    /// exact partials of `F` with respect to `h`, `h_θ` and `h_θθ`.
    pub fn stable_dt(&self, geom: &BodyGeometry) -> Result<f64> {
        let dx = self.grid.spacing();
        let f = self.f.values();
        let mut lambda = 0.0f64;
        for i in 0..self.grid.len() {
            let h = Dual::<3>::variable(geom.h.values()[i], 0);
            let dh = Dual::<3>::variable(geom.grad_h.values()[i], 1);
            let d2h = Dual::<3>::variable(geom.second.values()[i], 2);
            let ng = node_geometry(&self.frames[i], h, dh, d2h);
            let speed = Dual::constant(f[i]) * h
                / (self.data.phi_at(h) * self.data.g_at(ng.point) * ng.det);
            let [a0, a1, a2] = speed.eps;
            let l = a2.abs() * D2_SPECTRAL_RADIUS / (dx * dx)
                + a1.abs() * D1_SPECTRAL_RADIUS / dx
                + (a0 - 1.0).abs();
            if !l.is_finite() {
                return Err(Error::Model(format!(
                    "flow linearization is not finite at node {i}"
                )));
            }
            lambda = lambda.max(l);
        }
        Ok(if lambda > 0.0 { 2.0 / lambda } else { f64::INFINITY })
    }

    /// One Heun step of size `dt`, halved until the predictor and the
    /// corrected state are positive and uniformly convex.
    pub fn step(&self, state: &FlowState, dt: f64, dt_min: f64) -> Result<(FlowState, BodyGeometry)> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {dt}")));
        }
        let geom = self.geometry(&state.h)?;
        let k1 = self.rhs(&geom)?;
        let mut guard = state.guard.clone();
        let mut dt = dt;
        loop {
            match self.heun(&state.h, &k1, dt) {
                Ok((h, geom)) => {
                    let next = FlowState {
                        time: state.time + dt,
                        h,
                        last_dt: dt,
                        step_index: state.step_index + 1,
                        guard,
                    };
                    return Ok((next, geom));
                }
                Err(Violation { node, quantity, value }) => {
                    if dt * 0.5 < dt_min {
                        return Err(Error::GuardFailure {
                            node,
                            quantity,
                            value,
                            dt,
                        });
                    }
                    debug!("step {}: {quantity} = {value} at node {node}, halving dt = {dt:e}", state.step_index + 1);
                    guard.halvings += 1;
                    guard.events.push(GuardEvent {
                        step: state.step_index + 1,
                        dt_rejected: dt,
                        node,
                        quantity,
                        value,
                    });
                    dt *= 0.5;
                }
            }
        }
    }

    fn heun(&self, h: &ScalarField, k1: &[f64], dt: f64) -> std::result::Result<(ScalarField, BodyGeometry), Violation> {
        let h0 = h.values();
        let pred: Vec<f64> = h0.iter().zip(k1).map(|(h, k)| h + dt * k).collect();
        let pred_geom = self.guarded_geometry(pred)?;
        let k2 = self.rhs(&pred_geom).map_err(Violation::from_error)?;
        let next: Vec<f64> = (0..h0.len())
            .map(|i| h0[i] + 0.5 * dt * (k1[i] + k2[i]))
            .collect();
        let geom = self.guarded_geometry(next)?;
        Ok((geom.h.clone(), geom))
    }

    fn guarded_geometry(&self, values: Vec<f64>) -> std::result::Result<BodyGeometry, Violation> {
        let field = ScalarField::new(self.grid.clone(), values).map_err(Violation::from_error)?;
        BodyGeometry::new(&field).map_err(Violation::from_error)
    }

    /// Integrates from `h0` until stationarity, stall, `max_steps`, or a
    /// guard failure. One trace row is recorded per accepted step.
    pub fn run(&self, h0: &ScalarField, config: &FlowConfig) -> Result<RunResult> {
        self.run_with(h0, config, |_, _| Ok(()))
    }

    /// As [`FlowProblem::run`], calling `observe` after every accepted step.
    pub fn run_with(
        &self,
        h0: &ScalarField,
        config: &FlowConfig,
        mut observe: impl FnMut(&FlowState, &BodyGeometry) -> Result<()>,
    ) -> Result<RunResult> {
        config.validate()?;
        let mut geom = self.geometry(h0)?;
        let dt_cap = config
            .dt0
            .unwrap_or(0.1 * geom.min_principal_radius());
        let initial_energy = diagnostics::energy(self, &geom)?;
        let mut residual = self.residual_of(&geom)?;
        let mut state = FlowState::initial(h0.clone());
        let mut trace = EnergyTrace::default();
        let initial_range = (h0.min(), h0.max());

        let status = if residual.sup_rel <= config.stop_residual {
            RunStatus::Converged
        } else {
            loop {
                if state.step_index >= config.max_steps {
                    break RunStatus::MaxSteps;
                }
                let dt = (config.safety * self.stable_dt(&geom)?)
                    .min(dt_cap)
                    .max(config.dt_min);
                let (next, next_geom) = match self.step(&state, dt, config.dt_min) {
                    Ok(v) => v,
                    Err(Error::GuardFailure {
                        node,
                        quantity,
                        value,
                        ..
                    }) => {
                        break RunStatus::GuardFailure {
                            node,
                            quantity,
                            value,
                        }
                    }
                    Err(e) => return Err(e),
                };
                state = next;
                geom = next_geom;
                residual = self.residual_of(&geom)?;
                let energy = diagnostics::energy(self, &geom)?;
                trace.push(TraceRow::from_state(&state, &geom, energy, &residual));
                observe(&state, &geom)?;
                if state.step_index % 1000 == 0 {
                    debug!(
                        "step {} t = {:.4} dt = {:.3e} J = {:.12e} residual = {:.3e}",
                        state.step_index, state.time, state.last_dt, energy, residual.sup_rel
                    );
                }
                if residual.sup_rel <= config.stop_residual {
                    break RunStatus::Converged;
                }
                if let Some(slope) = trace.energy_slope(ENERGY_SLOPE_WINDOW) {
                    if slope <= config.stop_energy_slope {
                        break RunStatus::Stalled;
                    }
                }
            }
        };
        info!(
            "flow finished: {:?} after {} steps, t = {:.6}, residual = {:.3e}",
            status, state.step_index, state.time, residual.sup_rel
        );
        Ok(RunResult {
            state,
            status,
            trace,
            residual,
            initial_energy,
            initial_range,
        })
    }
}

struct Violation {
    node: usize,
    quantity: &'static str,
    value: f64,
}

impl Violation {
    fn from_error(e: Error) -> Self {
        match e {
            Error::Domain { node, value } => Violation {
                node,
                quantity: "h",
                value,
            },
            Error::ConvexityLost {
                node,
                quantity,
                value,
            } => Violation {
                node,
                quantity,
                value,
            },
            _ => Violation {
                node: 0,
                quantity: "speed",
                value: f64::NAN,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(data: ProblemData, n: usize) -> FlowProblem {
        let grid = SphericalGrid::shared(data.dim(), n).unwrap();
        FlowProblem::new(data, grid).unwrap()
    }

    fn ones() -> ProblemData {
        ProblemData::from_texts(2, "1", "1", None, "1").unwrap()
    }

    fn constant(p: &FlowProblem, v: f64) -> ScalarField {
        ScalarField::constant(p.grid().clone(), v)
    }

    #[test]
    fn speed_examples() {
        let p = setup(ones(), 64);
        let f = p.speed_term(&constant(&p, 1.0)).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));
        let f = p.speed_term(&constant(&p, 2.0)).unwrap();
        assert!(f.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let p = setup(ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap(), 64);
        let f = p.speed_term(&constant(&p, 1.0)).unwrap();
        assert!(f.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn residual_examples() {
        let p = setup(ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap(), 64);
        let r = p.residual(&constant(&p, 1.0)).unwrap();
        assert!(r.sup_rel < 1e-15);
        let r = p.residual(&constant(&p, 2.0)).unwrap();
        assert!(r.field.values().iter().all(|&v| (v + 0.75).abs() < 1e-15));
        assert!((r.sup_rel - 0.75).abs() < 1e-15);
        assert!((r.l2_rel - 0.75).abs() < 1e-14);
        let p = setup(ones(), 64);
        assert_eq!(p.residual(&constant(&p, 1.0)).unwrap().sup_rel, 0.0);
    }

    #[test]
    fn stationary_state_is_fixed() {
        let p = setup(ones(), 64);
        let s = FlowState::initial(constant(&p, 1.0));
        let (next, _) = p.step(&s, 0.37, 1e-12).unwrap();
        assert!(next.h.values().iter().all(|&v| v == 1.0));
        assert_eq!(next.step_index, 1);
        assert!((next.time - 0.37).abs() < 1e-15);
    }

    #[test]
    fn heun_on_round_body() {
        // h ≡ 2 with φ = G = f ≡ 1: F = 1, so h′ = h − 1
        let p = setup(ones(), 64);
        let s = FlowState::initial(constant(&p, 2.0));
        let (next, _) = p.step(&s, 0.01, 1e-12).unwrap();
        for &v in next.h.values() {
            assert!((v - 2.01005).abs() < 1e-14, "{v}");
        }
        assert_eq!(next.guard.halvings, 0);
    }

    #[test]
    fn oversized_step_is_halved() {
        // rhs = −10 + 1: an Euler predictor with dt = 1 makes h negative
        let p = setup(ProblemData::from_texts(2, "1", "1", None, "10").unwrap(), 64);
        let s = FlowState::initial(constant(&p, 1.0));
        let (next, _) = p.step(&s, 1.0, 1e-12).unwrap();
        assert!(next.guard.halvings >= 1);
        assert!(next.last_dt < 1.0);
        assert_eq!(next.guard.events[0].quantity, "h");
        assert!(next.h.min() > 0.0);
    }

    #[test]
    fn guard_failure_when_dt_min_reached() {
        let p = setup(ProblemData::from_texts(2, "1", "1", None, "10").unwrap(), 64);
        let s = FlowState::initial(constant(&p, 1.0));
        match p.step(&s, 1.0, 0.6) {
            Err(Error::GuardFailure { quantity, .. }) => assert_eq!(quantity, "h"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stable_dt_matches_diffusion_estimate() {
        // lp_dual{2,0} at the unit circle: F = h²ρ²/b, so ∂F/∂h″ = −1 and ∂F/∂h = 3
        let p = setup(ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap(), 256);
        let geom = p.geometry(&constant(&p, 1.0)).unwrap();
        let dx = p.grid().spacing();
        let expect = 2.0 / (D2_SPECTRAL_RADIUS / (dx * dx) + 2.0);
        let got = p.stable_dt(&geom).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect, "{got} {expect}");
    }

    #[test]
    fn already_stationary_run() {
        let p = setup(ones(), 64);
        let r = p.run(&constant(&p, 1.0), &FlowConfig::default()).unwrap();
        assert_eq!(r.status, RunStatus::Converged);
        assert_eq!(r.state.step_index, 0);
        assert!(r.trace.rows().is_empty());
    }

    #[test]
    fn round_body_follows_scalar_ode() {
        // h0 ≡ 3, φ = G = f ≡ 1: h(t) = 1 + 2 e^t grows
        let p = setup(ones(), 64);
        let cfg = FlowConfig {
            max_steps: 40,
            dt0: Some(0.01),
            ..FlowConfig::default()
        };
        let r = p.run(&constant(&p, 3.0), &cfg).unwrap();
        assert_eq!(r.status, RunStatus::MaxSteps);
        assert_eq!(r.trace.rows().len(), 40);
        let t = r.state.time;
        let exact = 1.0 + 2.0 * t.exp();
        let h = r.state.h.values()[0];
        assert!((h - exact).abs() < 1e-5 * exact, "{h} vs {exact}");
        assert!(r
            .trace
            .rows()
            .windows(2)
            .all(|w| w[1].max_h > w[0].max_h));
    }

    #[test]
    fn rejects_nonconvex_initial_body() {
        let p = setup(ones(), 64);
        let h = ScalarField::from_fn(p.grid().clone(), |t| 1.0 + 0.5 * (3.0 * t).cos()).unwrap();
        assert!(matches!(
            p.run(&h, &FlowConfig::default()),
            Err(Error::ConvexityLost { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = FlowConfig::default();
        assert!(c.validate().is_ok());
        c.safety = 1.5;
        assert!(c.validate().is_err());
        let c = FlowConfig {
            dt0: Some(1e-14),
            ..FlowConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
