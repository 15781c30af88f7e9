//! Energy, its monotonicity and dissipation, the curvature measure, and
//! trapping-bound reports.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::flow::{FlowProblem, FlowState, Residual};
use crate::model::{trap_constants, ScanRange};
use crate::sphere::{BodyGeometry, ScalarField, SphericalGrid};

pub const TRACE_HEADER: &str = "step,time,dt,J,residual_sup_rel,residual_l2_rel,min_h,max_h,max_grad_h,min_principal_radius,max_K";

/// Micro-step of the centered energy difference.
pub const DISSIPATION_DELTA: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub dt: f64,
    pub energy: f64,
    pub residual_sup_rel: f64,
    pub residual_l2_rel: f64,
    pub min_h: f64,
    pub max_h: f64,
    pub max_grad_h: f64,
    pub min_principal_radius: f64,
    pub max_k: f64,
}

impl TraceRow {
    pub fn from_state(state: &FlowState, geom: &BodyGeometry, energy: f64, residual: &Residual) -> Self {
        Self {
            step: state.step_index,
            time: state.time,
            dt: state.last_dt,
            energy,
            residual_sup_rel: residual.sup_rel,
            residual_l2_rel: residual.l2_rel,
            min_h: geom.h.min(),
            max_h: geom.h.max(),
            max_grad_h: geom.grad_h.values().iter().fold(0.0, |m: f64, v| m.max(v.abs())),
            min_principal_radius: geom.min_principal_radius(),
            max_k: geom.gauss.max(),
        }
    }

    fn fields(&self) -> [f64; 10] {
        [
            self.time,
            self.dt,
            self.energy,
            self.residual_sup_rel,
            self.residual_l2_rel,
            self.min_h,
            self.max_h,
            self.max_grad_h,
            self.min_principal_radius,
            self.max_k,
        ]
    }
}

/// Time-ordered per-step record of a flow run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    rows: Vec<TraceRow>,
}

impl EnergyTrace {
    pub fn from_rows(rows: Vec<TraceRow>) -> Result<Self> {
        let mut t = Self::default();
        for r in rows {
            t.try_push(r)?;
        }
        Ok(t)
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn try_push(&mut self, row: TraceRow) -> Result<()> {
        if row.fields().iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("non-finite trace row at step {}", row.step)));
        }
        if let Some(prev) = self.rows.last() {
            if row.time < prev.time {
                return Err(Error::Model(format!(
                    "trace row at step {} goes back in time",
                    row.step
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub(crate) fn push(&mut self, row: TraceRow) {
        // rows come from validated states, so a failure here is a logic error
        self.try_push(row).expect("invalid trace row");
    }

    /// `|ΔJ|/Δt` between the last row and the latest row at least `window`
    /// earlier, if such a row exists.
    pub fn energy_slope(&self, window: f64) -> Option<f64> {
        let last = self.rows.last()?;
        let k = self.rows.partition_point(|r| r.time <= last.time - window);
        if k == 0 {
            return None;
        }
        let r = &self.rows[k - 1];
        Some((last.energy - r.energy).abs() / (last.time - r.time))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.rows {
            write!(out, "{}", r.step)?;
            for v in r.fields() {
                write!(out, ",{v:e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

/// `J = ∫ φ̃(h) f dx − ∫ G̃(ρ, u) du`.
pub fn energy(problem: &FlowProblem, geom: &BodyGeometry) -> Result<f64> {
    let data = problem.data();
    let w = problem.grid().weights();
    let f = problem.f().values();
    let mut first = 0.0;
    for (i, &h) in geom.h.values().iter().enumerate() {
        first += w[i] * data.phi_tilde(h)? * f[i];
    }
    let second = geom.try_integrate_radial(|rho, u| data.g_tilde(rho, u))?;
    Ok(first - second)
}

/// Energy of a bare support function.
pub fn energy_of(problem: &FlowProblem, h: &ScalarField) -> Result<f64> {
    energy(problem, &problem.geometry(h)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityViolation {
    pub step: usize,
    pub increase: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub pairs_checked: usize,
    pub violations: Vec<MonotonicityViolation>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flags every step whose energy increase exceeds `10·dt²·(1 + |J_k|)`.
pub fn monotonicity_report(trace: &EnergyTrace) -> Result<MonotonicityReport> {
    let rows = trace.rows();
    if rows.len() < 2 {
        return Err(Error::Config(format!(
            "monotonicity needs at least 2 trace rows, got {}",
            rows.len()
        )));
    }
    let violations = rows
        .windows(2)
        .filter_map(|w| {
            let increase = w[1].energy - w[0].energy;
            let tolerance = 10.0 * w[1].dt * w[1].dt * (1.0 + w[0].energy.abs());
            (increase > tolerance).then_some(MonotonicityViolation {
                step: w[1].step,
                increase,
                tolerance,
            })
        })
        .collect();
    Ok(MonotonicityReport {
        pairs_checked: rows.len() - 1,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dissipation {
    /// Centered difference of `J` along the flow direction.
    pub lhs: f64,
    /// `−∫ (G/K) h (fK/(φG) − 1)² dx`.
    pub rhs: f64,
}

impl Dissipation {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / scale
        }
    }
}

/// Compares `dJ/dt` from two micro-steps `h ± δ·(−F + h)` with the
/// closed-form dissipation integral.
pub fn energy_dissipation_check(problem: &FlowProblem, h: &ScalarField) -> Result<Dissipation> {
    let geom = problem.geometry(h)?;
    let v = problem.rhs(&geom)?;
    let shifted = |sign: f64| -> Result<f64> {
        let values = h
            .values()
            .iter()
            .zip(&v)
            .map(|(h, v)| h + sign * DISSIPATION_DELTA * v)
            .collect();
        energy_of(problem, &ScalarField::new(problem.grid().clone(), values)?)
    };
    let lhs = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * DISSIPATION_DELTA);

    let w = problem.grid().weights();
    let f = problem.f().values();
    let mut rhs = 0.0;
    for i in 0..w.len() {
        let (phi, g) = problem.factors(&geom, i)?;
        let k = geom.gauss.values()[i];
        let ratio = f[i] * k / (phi * g) - 1.0;
        rhs -= w[i] * (g / k) * geom.h.values()[i] * ratio * ratio;
    }
    Ok(Dissipation { lhs, rhs })
}

/// A set of nodes on the normal side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    All,
    /// Half-open angular interval `[a, b)` in radians: circle angle on S^1
    /// (wrapping), polar band on S^2.
    Arc { start: f64, end: f64 },
}

impl Region {
    /// Parses `all` or `arc:a,b`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "all" {
            return Ok(Region::All);
        }
        let bad = || Error::Config(format!("region must be `all` or `arc:a,b`, got `{text}`"));
        let rest = text.strip_prefix("arc:").ok_or_else(bad)?;
        let (a, b) = rest.split_once(',').ok_or_else(bad)?;
        let start: f64 = a.trim().parse().map_err(|_| bad())?;
        let end: f64 = b.trim().parse().map_err(|_| bad())?;
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::Config(format!("arc needs finite a < b, got {start}, {end}")));
        }
        Ok(Region::Arc { start, end })
    }

    pub fn contains(&self, grid: &SphericalGrid, i: usize) -> bool {
        const SLACK: f64 = 1e-12;
        match *self {
            Region::All => true,
            Region::Arc { start, end } => {
                let t = grid.theta()[i];
                if grid.dim() == 2 {
                    if end - start >= 2.0 * PI {
                        return true;
                    }
                    (t - start + SLACK).rem_euclid(2.0 * PI) < end - start
                } else {
                    t >= start - SLACK && t < end - SLACK
                }
            }
        }
    }
}

/// `(1/n) ∫_E φ(h) G(X) det(b) dx`.
pub fn curvature_measure(problem: &FlowProblem, geom: &BodyGeometry, region: &Region) -> Result<f64> {
    let grid = problem.grid();
    let w = grid.weights();
    let mut acc = 0.0;
    for i in 0..grid.len() {
        if region.contains(grid, i) {
            let (phi, g) = problem.factors(geom, i)?;
            acc += w[i] * phi * g * geom.det.values()[i];
        }
    }
    Ok(acc / grid.dim() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsVerdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Trapping bounds predicted by the ψ-scan against the observed range of h.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    /// `C1`: beyond it ψ stays below `min f`.
    pub c1: Option<f64>,
    /// `C2`: below it ψ stays above `max f`.
    pub c2: Option<f64>,
    pub trap: Option<(f64, f64)>,
    pub epsilon: f64,
    pub observed_min_h: f64,
    pub observed_max_h: f64,
    pub min_principal_radius: f64,
    pub max_k: f64,
    pub verdict: BoundsVerdict,
}

/// Checks that `h` stays in `[min(C2, min h0), max(C1, max h0)] ± epsilon`
/// over the whole trace.
pub fn bounds_report(
    trace: &EnergyTrace,
    problem: &FlowProblem,
    initial_range: (f64, f64),
    epsilon: f64,
) -> BoundsReport {
    let rows = trace.rows();
    let fold = |init: f64, pick: fn(&TraceRow) -> f64, op: fn(f64, f64) -> f64| {
        rows.iter().map(pick).fold(init, op)
    };
    let observed_min_h = fold(initial_range.0, |r| r.min_h, f64::min);
    let observed_max_h = fold(initial_range.1, |r| r.max_h, f64::max);
    let min_principal_radius = fold(f64::INFINITY, |r| r.min_principal_radius, f64::min);
    let max_k = fold(0.0, |r| r.max_k, f64::max);

    let f = problem.f();
    let consts = trap_constants(problem.data(), problem.grid(), ScanRange::default(), f.min(), f.max()).ok();
    let (c1, c2) = consts.map_or((None, None), |c| (c.upper, c.lower));
    let trap = match (c1, c2) {
        (Some(c1), Some(c2)) => Some((c2.min(initial_range.0), c1.max(initial_range.1))),
        _ => None,
    };
    let verdict = match trap {
        None => BoundsVerdict::Inconclusive,
        Some((lo, hi)) if observed_min_h >= lo - epsilon && observed_max_h <= hi + epsilon => {
            BoundsVerdict::Pass
        }
        Some(_) => BoundsVerdict::Fail,
    };
    BoundsReport {
        c1,
        c2,
        trap,
        epsilon,
        observed_min_h,
        observed_max_h,
        min_principal_radius,
        max_k,
        verdict,
    }
}

impl BoundsReport {
    /// Whether a stationary `h` lies in `[C2 − ε, C1 + ε]`.
    pub fn stationary_bounds_hold(&self, h: &ScalarField) -> Option<bool> {
        let (c1, c2) = (self.c1?, self.c2?);
        Some(h.min() >= c2 - self.epsilon && h.max() <= c1 + self.epsilon)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:e}"));
        let mut s = String::new();
        let verdict = match self.verdict {
            BoundsVerdict::Pass => "pass",
            BoundsVerdict::Fail => "fail",
            BoundsVerdict::Inconclusive => "inconclusive",
        };
        let _ = writeln!(s, "verdict = {verdict}");
        let _ = writeln!(s, "c1 = {}", opt(self.c1));
        let _ = writeln!(s, "c2 = {}", opt(self.c2));
        let _ = writeln!(s, "trap_low = {}", opt(self.trap.map(|t| t.0)));
        let _ = writeln!(s, "trap_high = {}", opt(self.trap.map(|t| t.1)));
        let _ = writeln!(s, "epsilon = {:e}", self.epsilon);
        let _ = writeln!(s, "observed_min_h = {:e}", self.observed_min_h);
        let _ = writeln!(s, "observed_max_h = {:e}", self.observed_max_h);
        let _ = writeln!(s, "min_principal_radius = {:e}", self.min_principal_radius);
        let _ = writeln!(s, "max_K = {:e}", self.max_k);
        s
    }
}
