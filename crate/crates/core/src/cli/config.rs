//! JSON run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::model::problem::{direction_vars, normal_vars};
use crate::model::{check_condition, ConditionReport, Expression, ProblemData, ScanRange};
use crate::oracle::NewtonConfig;
use crate::sphere::{BodyGeometry, ScalarField, SphericalGrid};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    grid: RawGrid,
    #[serde(default)]
    initial_body: Option<String>,
    #[serde(default)]
    flow: RawFlow,
    #[serde(default)]
    newton: RawNewton,
    #[serde(default)]
    outputs: RawOutputs,
    #[serde(default)]
    strict: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    #[serde(default)]
    lp_dual: Option<RawLpDual>,
    #[serde(default)]
    phi: Option<String>,
    #[serde(default)]
    g_radial: Option<String>,
    #[serde(default)]
    g_angular: Option<String>,
    f: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLpDual {
    p: f64,
    q: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: usize,
    #[serde(rename = "N")]
    nodes: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    dt0: Option<f64>,
    dt_min: Option<f64>,
    safety: Option<f64>,
    max_steps: Option<usize>,
    stop_residual: Option<f64>,
    stop_energy_slope: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNewton {
    damping: Option<f64>,
    max_iters: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    directory: Option<String>,
    snapshot_every: Option<usize>,
}

/// A validated configuration, with the solvability check already run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: ProblemData,
    pub grid: Arc<SphericalGrid>,
    pub h0: ScalarField,
    pub flow: FlowConfig,
    pub newton: NewtonConfig,
    pub output_dir: PathBuf,
    /// Write `snapshot_<step>.json` every this many steps; 0 disables.
    pub snapshot_every: usize,
    pub strict: bool,
    pub condition: ConditionReport,
}

fn at(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(m) => Error::Config(format!("{field}: {m}")),
        e => Error::Config(format!("{field}: {e}")),
    }
}

fn parse_expr(field: &str, text: &str, vars: &[&str]) -> Result<()> {
    Expression::parse(text, vars).map(|_| ()).map_err(at(field))
}

/// Reads and validates a configuration file. Relative output directories
/// are taken relative to the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;

    let grid = SphericalGrid::shared(raw.grid.n, raw.grid.nodes).map_err(at("grid"))?;
    let dim = raw.grid.n;
    let p = &raw.problem;
    parse_expr("problem.f", &p.f, normal_vars(dim))?;
    let data = match &p.lp_dual {
        Some(lp) => {
            if p.phi.is_some() || p.g_radial.is_some() || p.g_angular.is_some() {
                return Err(Error::Config(
                    "problem: lp_dual excludes phi, g_radial and g_angular".into(),
                ));
            }
            ProblemData::lp_dual(dim, lp.p, lp.q, &p.f).map_err(at("problem.lp_dual"))?
        }
        None => {
            let phi = p
                .phi
                .as_deref()
                .ok_or_else(|| Error::Config("problem.phi: missing (or give lp_dual)".into()))?;
            let g_radial = p.g_radial.as_deref().ok_or_else(|| {
                Error::Config("problem.g_radial: missing (or give lp_dual)".into())
            })?;
            parse_expr("problem.phi", phi, &["s"])?;
            parse_expr("problem.g_radial", g_radial, &["r"])?;
            if let Some(g) = &p.g_angular {
                parse_expr("problem.g_angular", g, direction_vars(dim))?;
            }
            ProblemData::from_texts(dim, phi, g_radial, p.g_angular.as_deref(), &p.f)
                .map_err(at("problem"))?
        }
    };
    data.f_on_grid(&grid).map_err(at("problem.f"))?;
    if data.g_angular_expr().is_some() {
        data.g_angular_range(&grid).map_err(at("problem.g_angular"))?;
    }

    let h0 = match raw.initial_body.as_deref().map(str::trim) {
        None | Some("unit") => ScalarField::constant(grid.clone(), 1.0),
        Some(text) => {
            let e = Expression::parse(text, &["t"]).map_err(at("initial_body"))?;
            let values = grid
                .theta()
                .iter()
                .map(|&t| e.eval_checked(&[t]))
                .collect::<Result<Vec<_>>>()
                .map_err(at("initial_body"))?;
            ScalarField::new(grid.clone(), values).map_err(at("initial_body"))?
        }
    };
    BodyGeometry::new(&h0).map_err(at("initial_body"))?;

    let d = FlowConfig::default();
    let flow = FlowConfig {
        dt0: raw.flow.dt0,
        dt_min: raw.flow.dt_min.unwrap_or(d.dt_min),
        safety: raw.flow.safety.unwrap_or(d.safety),
        max_steps: raw.flow.max_steps.unwrap_or(d.max_steps),
        stop_residual: raw.flow.stop_residual.unwrap_or(d.stop_residual),
        stop_energy_slope: raw.flow.stop_energy_slope.unwrap_or(d.stop_energy_slope),
    };
    flow.validate()?;
    let d = NewtonConfig::default();
    let newton = NewtonConfig {
        damping: raw.newton.damping.unwrap_or(d.damping),
        max_iters: raw.newton.max_iters.unwrap_or(d.max_iters),
        tol: raw.newton.tol.unwrap_or(d.tol),
    };
    newton.validate()?;

    let condition = check_condition(&data, &grid, ScanRange::default())?;
    Ok(RunConfig {
        data,
        grid,
        h0,
        flow,
        newton,
        output_dir: base.join(raw.outputs.directory.as_deref().unwrap_or("out")),
        snapshot_every: raw.outputs.snapshot_every.unwrap_or(0),
        strict: raw.strict,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Verdict;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config(text, Path::new("/tmp"))
    }

    const MINIMAL: &str =
        r#"{"problem": {"lp_dual": {"p": 2, "q": 0}, "f": "1"}, "grid": {"n": 2, "N": 256}}"#;

    #[test]
    fn minimal_config() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.condition.verdict, Verdict::Satisfied);
        assert_eq!(c.grid.len(), 256);
        assert!(c.h0.values().iter().all(|&v| v == 1.0));
        assert_eq!(c.output_dir, Path::new("/tmp/out"));
        assert_eq!(c.flow, FlowConfig::default());
    }

    #[test]
    fn syntax_error_names_field() {
        let e = parse(&MINIMAL.replace(r#""f": "1""#, r#""f": "cos(t""#)).unwrap_err();
        assert!(e.to_string().contains("problem.f:"), "{e}");
    }

    #[test]
    fn too_few_nodes() {
        let e = parse(&MINIMAL.replace("256", "8")).unwrap_err();
        assert!(matches!(e, Error::Config(ref m) if m.starts_with("grid:")), "{e}");
    }

    #[test]
    fn expression_problem_and_initial_body() {
        let c = parse(
            r#"{"problem": {"phi": "1", "g_radial": "1", "f": "1 + 0.2*cos(t)"},
                "grid": {"n": 2, "N": 64},
                "initial_body": "1 + 0.3*cos(t)",
                "flow": {"max_steps": 10, "dt0": 0.001},
                "outputs": {"directory": "runs/a", "snapshot_every": 5}}"#,
        )
        .unwrap();
        assert!((c.h0.values()[0] - 1.3).abs() < 1e-15);
        assert_eq!(c.flow.max_steps, 10);
        assert_eq!(c.flow.dt0, Some(0.001));
        assert_eq!(c.snapshot_every, 5);
        assert_eq!(c.output_dir, Path::new("/tmp/runs/a"));
    }

    #[test]
    fn rejected_configs() {
        for (text, field) in [
            (MINIMAL.replace(r#""f": "1""#, r#""f": "1", "phi": "s""#), "problem:"),
            (MINIMAL.replace(r#""f": "1""#, r#""f": "y""#), "problem.f:"),
            (MINIMAL.replace(r#""f": "1""#, r#""f": "cos(t)""#), "problem.f:"),
            (MINIMAL.replace("}}", r#"}, "initial_body": "1 + 0.9*cos(3*t)"}"#), "initial_body:"),
            (MINIMAL.replace("}}", r#"}, "flow": {"safety": 2}}"#), "flow.safety"),
            (MINIMAL.replace("}}", r#"}, "colour": 1}"#), "unknown field"),
            (r#"{"problem": {"phi": "s^-1", "f": "1"}, "grid": {"n": 2, "N": 64}}"#.to_string(), "problem.g_radial:"),
        ] {
            match parse(&text) {
                Err(Error::Config(m)) => assert!(m.contains(field), "{m}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
