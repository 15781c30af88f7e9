//! Finite-range checks of the solvability and uniqueness hypotheses.

use std::fmt;

use super::problem::ProblemData;
use crate::error::{Error, Result};
use crate::sphere::SphericalGrid;

/// Log-spaced scan of `s` used to approximate limits of `ψ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRange {
    pub s_min: f64,
    pub s_max: f64,
    pub count: usize,
}

impl Default for ScanRange {
    fn default() -> Self {
        Self {
            s_min: 1e-6,
            s_max: 1e6,
            count: 121,
        }
    }
}

impl ScanRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0 && self.s_min < self.s_max) || self.count < 2 {
            return Err(Error::Config(format!(
                "scan range needs 0 < s_min < s_max and count ≥ 2, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let (a, b) = (self.s_min.ln(), self.s_max.ln());
        let m = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| match k {
                0 => self.s_min,
                k if k + 1 == self.count => self.s_max,
                k => (a + (b - a) * k as f64 / m).exp(),
            })
            .collect()
    }
}

/// `ψ(s) = φ(s)·G(s·u)·s^{n-1}` maximized and minimized over the grid
/// directions `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiScan {
    pub s: Vec<f64>,
    pub psi_max: Vec<f64>,
    pub psi_min: Vec<f64>,
}

impl PsiScan {
    pub fn new(data: &ProblemData, grid: &SphericalGrid, range: ScanRange) -> Result<Self> {
        range.validate()?;
        let (ang_lo, ang_hi) = data.g_angular_range(grid)?;
        let s = range.points();
        let mut psi_max = Vec::with_capacity(s.len());
        let mut psi_min = Vec::with_capacity(s.len());
        for &si in &s {
            let base = psi_at(data, 1.0, si)?;
            if !base.is_finite() {
                return Err(Error::Model(format!("ψ({si}) is not finite")));
            }
            psi_max.push(base * ang_hi);
            psi_min.push(base * ang_lo);
        }
        Ok(Self { s, psi_max, psi_min })
    }

    fn top_decade(&self) -> std::ops::Range<usize> {
        let cut = self.s[self.s.len() - 1] / 10.0;
        let start = self.s.iter().position(|&s| s >= cut).unwrap_or(0);
        start.min(self.s.len() - 2)..self.s.len()
    }

    fn bottom_decade(&self) -> std::ops::Range<usize> {
        let cut = self.s[0] * 10.0;
        let end = self.s.iter().rposition(|&s| s <= cut).unwrap_or(0);
        0..(end + 1).max(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Outcome of the finite-range solvability check.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub verdict: Verdict,
    /// `ψ_max` at the right end of the scan.
    pub upper_proxy: f64,
    /// `ψ_min` at the left end of the scan.
    pub lower_proxy: f64,
    pub min_f: f64,
    pub max_f: f64,
    /// `(min f − upper_proxy, lower_proxy − max f)`.
    pub margins: (f64, f64),
    pub diagnostic: Option<String>,
}

impl ConditionReport {
    fn inconclusive(msg: String) -> Self {
        Self {
            verdict: Verdict::Inconclusive,
            upper_proxy: f64::NAN,
            lower_proxy: f64::NAN,
            min_f: f64::NAN,
            max_f: f64::NAN,
            margins: (f64::NAN, f64::NAN),
            diagnostic: Some(msg),
        }
    }

    /// Flat `key = value` rendering.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "verdict = {}\nupper_proxy = {:e}\nlower_proxy = {:e}\nmin_f = {}\nmax_f = {}\nupper_margin = {:e}\nlower_margin = {:e}\n",
            self.verdict,
            self.upper_proxy,
            self.lower_proxy,
            self.min_f,
            self.max_f,
            self.margins.0,
            self.margins.1
        );
        if let Some(d) = &self.diagnostic {
            s.push_str(&format!("diagnostic = {d}\n"));
        }
        s
    }
}

/// `φ(s)·G_radial(s)·angular·s^{n-1}`.
fn psi_at(data: &ProblemData, angular: f64, s: f64) -> Result<f64> {
    let k = data.dim() as i32 - 1;
    Ok(data.eval_phi(s)? * data.eval_g_radial(s)? * angular * s.powi(k))
}

fn is_monotone(v: &[f64]) -> bool {
    let tol = |a: f64, b: f64| 1e-12 * a.abs().max(b.abs());
    let non_inc = v.windows(2).all(|w| w[1] <= w[0] + tol(w[0], w[1]));
    let non_dec = v.windows(2).all(|w| w[1] >= w[0] - tol(w[0], w[1]));
    non_inc || non_dec
}

/// Compares the scanned tails of `ψ` with the extremes of `f` on the grid.
///
/// A finite scan cannot certify a limsup/liminf: tails that are not
/// monotone over their end decade make the verdict inconclusive.
pub fn check_condition(data: &ProblemData, grid: &std::sync::Arc<SphericalGrid>, range: ScanRange) -> Result<ConditionReport> {
    range.validate()?;
    let f = match data.f_on_grid(grid) {
        Ok(f) => f,
        Err(e) => return Ok(ConditionReport::inconclusive(e.to_string())),
    };
    let scan = match PsiScan::new(data, grid, range) {
        Ok(s) => s,
        Err(e) => return Ok(ConditionReport::inconclusive(e.to_string())),
    };
    let (min_f, max_f) = (f.min(), f.max());
    let upper_proxy = *scan.psi_max.last().unwrap();
    let lower_proxy = scan.psi_min[0];
    let margins = (min_f - upper_proxy, lower_proxy - max_f);
    let tails_monotone =
        is_monotone(&scan.psi_max[scan.top_decade()]) && is_monotone(&scan.psi_min[scan.bottom_decade()]);
    let (verdict, diagnostic) = if !tails_monotone {
        (
            Verdict::Inconclusive,
            Some("ψ is not monotone near the ends of the scan range".to_string()),
        )
    } else if margins.0 > 0.0 && margins.1 > 0.0 {
        (Verdict::Satisfied, None)
    } else {
        (Verdict::Violated, None)
    };
    Ok(ConditionReport {
        verdict,
        upper_proxy,
        lower_proxy,
        min_f,
        max_f,
        margins,
        diagnostic,
    })
}

/// Trap constants from the ψ-scan: for `s ≥ upper` ψ_max stays below
/// `min f`; for `s ≤ lower` ψ_min stays above `max f`. Crossings between
/// scan points are refined by bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConstants {
    pub upper: Option<f64>,
    pub lower: Option<f64>,
}

pub fn trap_constants(
    data: &ProblemData,
    grid: &SphericalGrid,
    range: ScanRange,
    min_f: f64,
    max_f: f64,
) -> Result<TrapConstants> {
    let scan = PsiScan::new(data, grid, range)?;
    let m = scan.s.len();
    let (ang_lo, ang_hi) = data.g_angular_range(grid)?;

    // first index from which ψ_max < min f holds through the end
    let mut upper = None;
    if scan.psi_max[m - 1] < min_f {
        let mut k = m - 1;
        while k > 0 && scan.psi_max[k - 1] < min_f {
            k -= 1;
        }
        upper = Some(if k == 0 {
            scan.s[0]
        } else {
            bisect(scan.s[k - 1], scan.s[k], |s| {
                Ok(psi_at(data, ang_hi, s)? < min_f)
            }, true)?
        });
    }

    let mut lower = None;
    if scan.psi_min[0] > max_f {
        let mut k = 0;
        while k + 1 < m && scan.psi_min[k + 1] > max_f {
            k += 1;
        }
        lower = Some(if k + 1 == m {
            scan.s[m - 1]
        } else {
            bisect(scan.s[k], scan.s[k + 1], |s| {
                Ok(psi_at(data, ang_lo, s)? > max_f)
            }, false)?
        });
    }
    Ok(TrapConstants { upper, lower })
}

/// Bisection on `[a, b]` (geometric midpoints) for the switch of `pred`.
/// With `good_right`, `pred(b)` holds and the returned point is the infimum
/// of where it holds; otherwise `pred(a)` holds and the supremum is returned.
fn bisect(mut a: f64, mut b: f64, pred: impl Fn(f64) -> Result<bool>, good_right: bool) -> Result<f64> {
    for _ in 0..200 {
        if b / a - 1.0 <= 1e-14 {
            break;
        }
        let m = (a * b).sqrt();
        if pred(m)? == good_right {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(if good_right { b } else { a })
}

/// Default sample grids for the uniqueness checker.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessSamples {
    pub s: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for UniquenessSamples {
    fn default() -> Self {
        Self {
            s: (0..25).map(|k| 10f64.powf(-3.0 + 0.25 * k as f64)).collect(),
            lambda: (1..20).map(|k| 0.05 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UniquenessVerdict {
    /// The hypothesis held at every sample (not a proof).
    Supported,
    /// `φ(λs1)G(λs2) ≤ φ(s1)G(s2)λ^{1-n}` holds at this triple with λ < 1.
    Refuted { s1: f64, s2: f64, lambda: f64 },
}

impl fmt::Display for UniquenessVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UniquenessVerdict::Supported => {
                f.write_str("supported (sampled; not a proof)")
            }
            UniquenessVerdict::Refuted { s1, s2, lambda } => {
                write!(f, "refuted: witness s1 = {s1}, s2 = {s2}, lambda = {lambda}")
            }
        }
    }
}

/// Samples the uniqueness hypothesis: whenever
/// `φ(λs1)G(λs2) ≤ φ(s1)G(s2)λ^{1-n}`, λ must be at least 1.
pub fn check_uniqueness_condition(
    data: &ProblemData,
    grid: &SphericalGrid,
    samples: &UniquenessSamples,
) -> Result<UniquenessVerdict> {
    if !data.is_isotropic(grid) {
        return Err(Error::NotApplicable(
            "uniqueness check requires G(y) = G(|y|)".into(),
        ));
    }
    if samples.s.iter().any(|&s| !(s > 0.0))
        || samples.lambda.iter().any(|&l| !(l > 0.0 && l < 1.0))
    {
        return Err(Error::Config(
            "uniqueness samples need s > 0 and 0 < λ < 1".into(),
        ));
    }
    let n = data.dim() as i32;
    for &lambda in &samples.lambda {
        for &s1 in &samples.s {
            let lhs_phi = data.eval_phi(lambda * s1)?;
            let rhs_phi = data.eval_phi(s1)?;
            for &s2 in &samples.s {
                let lhs = lhs_phi * data.eval_g_radial(lambda * s2)?;
                let rhs = rhs_phi * data.eval_g_radial(s2)? * lambda.powi(1 - n);
                if lhs <= rhs * (1.0 + 1e-12) {
                    return Ok(UniquenessVerdict::Refuted { s1, s2, lambda });
                }
            }
        }
    }
    Ok(UniquenessVerdict::Supported)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid() -> Arc<SphericalGrid> {
        SphericalGrid::shared(2, 64).unwrap()
    }

    #[test]
    fn lp_dual_p_gt_q_is_satisfied() {
        let d = ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap();
        let r = check_condition(&d, &grid(), ScanRange::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Satisfied);
        assert!((r.upper_proxy - 1e-12).abs() <= 1e-24);
        assert!((r.lower_proxy - 1e12).abs() <= 1.0);
    }

    #[test]
    fn growing_psi_is_violated() {
        let d = ProblemData::lp_dual(2, 0.0, 2.0, "1").unwrap();
        let r = check_condition(&d, &grid(), ScanRange::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
        assert!(r.margins.0 < 0.0);
        let d = ProblemData::from_texts(2, "1", "1", None, "1").unwrap();
        let r = check_condition(&d, &grid(), ScanRange::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Violated);
    }

    #[test]
    fn oscillating_tail_is_inconclusive() {
        let d = ProblemData::from_texts(2, "(2 + sin(s)) / s^2", "1", None, "1").unwrap();
        let r = check_condition(&d, &grid(), ScanRange::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn evaluation_failure_is_inconclusive() {
        let d = ProblemData::from_texts(2, "s - 1", "1", None, "1").unwrap();
        let r = check_condition(&d, &grid(), ScanRange::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn psi_matches_power_law_for_lp_dual() {
        for (p, q) in [(2.0, 0.0), (1.5, 1.0), (3.0, -1.0), (0.0, 2.0)] {
            for dim in [2, 3] {
                let g = SphericalGrid::shared(dim, 32).unwrap();
                let d = ProblemData::lp_dual(dim, p, q, "1").unwrap();
                let scan = PsiScan::new(&d, &g, ScanRange::default()).unwrap();
                for (s, psi) in scan.s.iter().zip(&scan.psi_max) {
                    let expect = s.powf(q - p);
                    assert!((psi - expect).abs() <= 1e-12 * expect, "{p} {q} {s}");
                }
            }
        }
    }

    #[test]
    fn trap_constants_refine_the_crossing() {
        let d = ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap();
        let t = trap_constants(&d, &grid(), ScanRange::default(), 1.0, 1.0).unwrap();
        assert!((t.upper.unwrap() - 1.0).abs() < 1e-9);
        assert!((t.lower.unwrap() - 1.0).abs() < 1e-9);
        let d = ProblemData::lp_dual(2, 4.0, 0.0, "1").unwrap();
        let t = trap_constants(&d, &grid(), ScanRange::default(), 1.0, 1.0).unwrap();
        assert!((t.upper.unwrap() - 1.0).abs() < 1e-9);
        // ψ = s^{-2}, min f = 0.64, max f = 1.44
        let d = ProblemData::lp_dual(2, 2.0, 0.0, "1").unwrap();
        let t = trap_constants(&d, &grid(), ScanRange::default(), 0.64, 1.44).unwrap();
        assert!((t.upper.unwrap() - 1.25).abs() < 1e-9);
        assert!((t.lower.unwrap() - 1.0 / 1.2).abs() < 1e-9);
        let d = ProblemData::from_texts(2, "1", "1", None, "1").unwrap();
        let t = trap_constants(&d, &grid(), ScanRange::default(), 1.0, 1.0).unwrap();
        assert_eq!(t.upper, None);
    }

    #[test]
    fn uniqueness_examples() {
        let g = grid();
        let samples = UniquenessSamples::default();
        for (p, q) in [(2.0, 0.0), (1.5, 1.0), (3.0, -1.0)] {
            let d = ProblemData::lp_dual(2, p, q, "1").unwrap();
            assert_eq!(
                check_uniqueness_condition(&d, &g, &samples).unwrap(),
                UniquenessVerdict::Supported
            );
        }
        for (p, q) in [(0.0, 2.0), (1.0, 1.0)] {
            let d = ProblemData::lp_dual(2, p, q, "1").unwrap();
            assert!(matches!(
                check_uniqueness_condition(&d, &g, &samples).unwrap(),
                UniquenessVerdict::Refuted { lambda, .. } if lambda < 1.0
            ));
        }
        let d = ProblemData::from_texts(2, "1", "1", None, "1").unwrap();
        assert!(matches!(
            check_uniqueness_condition(&d, &g, &samples).unwrap(),
            UniquenessVerdict::Refuted { .. }
        ));
    }

    #[test]
    fn uniqueness_needs_isotropic_g() {
        let d = ProblemData::from_texts(2, "1", "1", Some("2 + u1"), "1").unwrap();
        assert!(matches!(
            check_uniqueness_condition(&d, &grid(), &UniquenessSamples::default()),
            Err(Error::NotApplicable(_))
        ));
        let d = ProblemData::from_texts(2, "s^(-1)", "r^(-2)", Some("1"), "1").unwrap();
        assert_eq!(
            check_uniqueness_condition(&d, &grid(), &UniquenessSamples::default()).unwrap(),
            UniquenessVerdict::Supported
        );
    }

    #[test]
    fn uniqueness_matches_p_gt_q_over_samples() {
        let g = grid();
        for p in [-1.0, 0.0, 0.5, 2.0, 3.5] {
            for q in [-2.0, 0.0, 0.5, 2.0, 4.0] {
                let d = ProblemData::lp_dual(2, p, q, "1").unwrap();
                let v = check_uniqueness_condition(&d, &g, &UniquenessSamples::default()).unwrap();
                assert_eq!(v == UniquenessVerdict::Supported, p > q, "p={p} q={q}");
            }
        }
    }
}
