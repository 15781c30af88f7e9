//! Command-line front end: configuration loading, run orchestration and
//! artifact output.

pub mod config;

use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{bounds_report, curvature_measure, energy, monotonicity_report, Region};
use crate::error::{Error, Result};
use crate::flow::{FlowProblem, FlowState, RunStatus};
use crate::model::{check_uniqueness_condition, UniquenessSamples, Verdict};
use crate::oracle::solve_stationary_n2;
use crate::sphere::ScalarField;

pub use config::{load_config, parse_config, RunConfig};

pub const EXIT_CONVERGED: u8 = 0;
pub const EXIT_NOT_CONVERGED: u8 = 1;
pub const EXIT_CONDITION_VIOLATED: u8 = 2;
pub const EXIT_GUARD_FAILURE: u8 = 3;
pub const EXIT_CONFIG_ERROR: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "orlicz-flow", version, about = "Curvature-flow solver for dual Orlicz-Minkowski problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve the initial body until it is stationary.
    RunFlow {
        config: PathBuf,
        /// Refuse to run when the solvability condition is violated.
        #[arg(long)]
        strict: bool,
        /// Output directory (overrides `outputs.directory`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the solvability and uniqueness checks for the configured data.
    CheckCondition {
        config: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Print the stationarity residual and energy of a snapshot.
    Residual { config: PathBuf, snapshot: PathBuf },
    /// Solve the stationary equation directly (n = 2).
    SolveNewton {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the curvature measure of a snapshot over a region.
    Measure {
        config: PathBuf,
        snapshot: PathBuf,
        /// `all` or `arc:a,b` (radians, half-open).
        #[arg(long, default_value = "all")]
        region: String,
    },
}

/// Support function on disk; node angles follow from `n` and `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: usize,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub time: f64,
    pub h: Vec<f64>,
}

impl Snapshot {
    pub fn of(state: &FlowState) -> Self {
        Self {
            n: state.h.grid().dim(),
            nodes: state.h.len(),
            time: state.time,
            h: state.h.values().to_vec(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: invalid snapshot: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// The snapshot as a field on the configured grid.
    pub fn field(&self, cfg: &RunConfig) -> Result<ScalarField> {
        if self.n != cfg.grid.dim() || self.nodes != cfg.grid.len() || self.h.len() != self.nodes {
            return Err(Error::Config(format!(
                "snapshot grid (n = {}, N = {}, {} values) does not match the configuration (n = {}, N = {})",
                self.n,
                self.nodes,
                self.h.len(),
                cfg.grid.dim(),
                cfg.grid.len()
            )));
        }
        ScalarField::new(cfg.grid.clone(), self.h.clone())
    }
}

/// Exit code for an error that ends a command.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } => EXIT_NOT_CONVERGED,
        Error::Domain { .. } | Error::ConvexityLost { .. } | Error::GuardFailure { .. } | Error::Model(_) => {
            EXIT_GUARD_FAILURE
        }
        _ => EXIT_CONFIG_ERROR,
    }
}

/// Messages mirrored to the `log` facade and to `run.log`.
struct RunLog {
    lines: Vec<String>,
}

impl RunLog {
    fn new() -> Self {
        Self { lines: Vec::new() }
    }

    fn info(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::info!("{msg}");
        self.lines.push(format!("INFO {msg}"));
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.lines.push(format!("WARN {msg}"));
    }

    fn error(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::error!("{msg}");
        self.lines.push(format!("ERROR {msg}"));
    }

    fn flush(&mut self, dir: &Path, truncate: bool) {
        if self.lines.is_empty() && !truncate {
            return;
        }
        let path = dir.join("run.log");
        let file = fs::create_dir_all(dir).and_then(|_| {
            OpenOptions::new()
                .create(true)
                .write(true)
                .append(!truncate)
                .truncate(truncate)
                .open(&path)
        });
        let written = file.and_then(|mut f| {
            for l in &self.lines {
                writeln!(f, "{l}")?;
            }
            Ok(())
        });
        if let Err(e) = written {
            log::error!("cannot write {}: {e}", path.display());
        }
        self.lines.clear();
    }
}

/// Runs one command, writing its report to `out`, and returns the exit code.
pub fn execute(cli: Cli, out: &mut dyn Write) -> u8 {
    let mut log = RunLog::new();
    let (config_path, out_override) = match &cli.command {
        Command::RunFlow { config, out, .. } | Command::SolveNewton { config, out } => {
            (config.clone(), out.clone())
        }
        Command::CheckCondition { config, .. }
        | Command::Residual { config, .. }
        | Command::Measure { config, .. } => (config.clone(), None),
    };
    let cfg = match load_config(&config_path) {
        Ok(c) => c,
        Err(e) => {
            log.error(e.to_string());
            log.flush(Path::new("."), false);
            return EXIT_CONFIG_ERROR;
        }
    };
    let dir = out_override.unwrap_or_else(|| cfg.output_dir.clone());
    let truncate = matches!(cli.command, Command::RunFlow { .. });
    let result = match cli.command {
        Command::RunFlow { strict, .. } => run_flow(&cfg, &dir, strict || cfg.strict, &mut log, out),
        Command::CheckCondition { strict, .. } => check_condition(&cfg, strict || cfg.strict, out),
        Command::Residual { snapshot, .. } => residual(&cfg, &snapshot, out),
        Command::SolveNewton { .. } => solve_newton(&cfg, &dir, &mut log, out),
        Command::Measure { snapshot, region, .. } => measure(&cfg, &snapshot, &region, out),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            log.error(e.to_string());
            exit_code(&e)
        }
    };
    log.flush(&dir, truncate);
    code
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn run_flow(cfg: &RunConfig, dir: &Path, strict: bool, log: &mut RunLog, out: &mut dyn Write) -> Result<u8> {
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("outputs.directory: {e}")))?;
    for line in cfg.condition.to_text().lines() {
        log.info(format!("condition {line}"));
    }
    match cfg.condition.verdict {
        Verdict::Satisfied => {}
        Verdict::Violated if strict => {
            log.error("solvability condition violated; not running in strict mode");
            write_out(out, &cfg.condition.to_text())?;
            return Ok(EXIT_CONDITION_VIOLATED);
        }
        v => log.warn(format!("solvability condition {v}; running anyway")),
    }

    let problem = FlowProblem::new(cfg.data.clone(), cfg.grid.clone())?;
    let every = cfg.snapshot_every;
    if every > 0 {
        Snapshot::of(&FlowState::initial(cfg.h0.clone())).save(&dir.join("snapshot_0.json"))?;
    }
    let result = problem.run_with(&cfg.h0, &cfg.flow, |state, _| {
        if every > 0 && state.step_index % every == 0 {
            Snapshot::of(state).save(&dir.join(format!("snapshot_{}.json", state.step_index)))?;
        }
        Ok(())
    })?;

    let mut csv = BufWriter::new(fs::File::create(dir.join("trace.csv"))?);
    result.trace.write_csv(&mut csv)?;
    csv.flush()?;
    Snapshot::of(&result.state).save(&dir.join("final.json"))?;

    let (status, code) = match &result.status {
        RunStatus::Converged => ("converged".to_string(), EXIT_CONVERGED),
        RunStatus::MaxSteps => ("max_steps".to_string(), EXIT_NOT_CONVERGED),
        RunStatus::Stalled => ("stalled".to_string(), EXIT_NOT_CONVERGED),
        RunStatus::GuardFailure { node, quantity, value } => {
            log.error(format!("guard failure at node {node}: {quantity} = {value:e}"));
            ("guard_failure".to_string(), EXIT_GUARD_FAILURE)
        }
    };
    let final_energy = match result.trace.last() {
        Some(r) => r.energy,
        None => energy(&problem, &problem.geometry(&result.state.h)?)?,
    };
    let monotone = match monotonicity_report(&result.trace) {
        Ok(r) if r.passed() => "pass".to_string(),
        Ok(r) => format!("fail ({} violations)", r.violations.len()),
        Err(_) => "n/a".to_string(),
    };
    let bounds = bounds_report(
        &result.trace,
        &problem,
        result.initial_range,
        10.0 * cfg.flow.stop_residual,
    );

    let mut report = format!(
        "status = {status}\nsteps = {}\ntime = {:e}\nresidual_sup_rel = {:e}\nresidual_l2_rel = {:e}\nenergy_initial = {:e}\nenergy_final = {:e}\nguard_halvings = {}\nmonotonicity = {monotone}\n",
        result.state.step_index,
        result.state.time,
        result.residual.sup_rel,
        result.residual.l2_rel,
        result.initial_energy,
        final_energy,
        result.state.guard.halvings,
    );
    for line in bounds.to_text().lines() {
        report.push_str(&format!("bounds.{line}\n"));
    }
    for line in report.lines() {
        log.info(line);
    }
    write_out(out, &report)?;
    Ok(code)
}

fn check_condition(cfg: &RunConfig, strict: bool, out: &mut dyn Write) -> Result<u8> {
    let mut text = cfg.condition.to_text();
    match check_uniqueness_condition(&cfg.data, &cfg.grid, &UniquenessSamples::default()) {
        Ok(v) => text.push_str(&format!("uniqueness = {v}\n")),
        Err(Error::NotApplicable(m)) => text.push_str(&format!("uniqueness = not applicable: {m}\n")),
        Err(e) => text.push_str(&format!("uniqueness = error: {e}\n")),
    }
    write_out(out, &text)?;
    Ok(if strict && cfg.condition.verdict == Verdict::Violated {
        EXIT_CONDITION_VIOLATED
    } else {
        EXIT_CONVERGED
    })
}

fn residual(cfg: &RunConfig, snapshot: &Path, out: &mut dyn Write) -> Result<u8> {
    let h = Snapshot::load(snapshot)?.field(cfg)?;
    let problem = FlowProblem::new(cfg.data.clone(), cfg.grid.clone())?;
    let geom = problem.geometry(&h)?;
    let r = problem.residual_of(&geom)?;
    let j = energy(&problem, &geom)?;
    write_out(
        out,
        &format!(
            "residual_sup_rel = {:e}\nresidual_l2_rel = {:e}\nenergy = {j:e}\n",
            r.sup_rel, r.l2_rel
        ),
    )?;
    Ok(EXIT_CONVERGED)
}

fn solve_newton(cfg: &RunConfig, dir: &Path, log: &mut RunLog, out: &mut dyn Write) -> Result<u8> {
    let r = solve_stationary_n2(&cfg.data, &cfg.h0, &cfg.newton)?;
    fs::create_dir_all(dir).map_err(|e| Error::Config(format!("outputs.directory: {e}")))?;
    let snap = Snapshot {
        n: 2,
        nodes: r.h.len(),
        time: 0.0,
        h: r.h.values().to_vec(),
    };
    snap.save(&dir.join("newton.json"))?;
    let text = format!("iterations = {}\nresidual_sup = {:e}\n", r.iterations, r.residual);
    for line in text.lines() {
        log.info(format!("newton {line}"));
    }
    write_out(out, &text)?;
    Ok(EXIT_CONVERGED)
}

fn measure(cfg: &RunConfig, snapshot: &Path, region: &str, out: &mut dyn Write) -> Result<u8> {
    let region = Region::parse(region)?;
    let h = Snapshot::load(snapshot)?.field(cfg)?;
    let problem = FlowProblem::new(cfg.data.clone(), cfg.grid.clone())?;
    let geom = problem.geometry(&h)?;
    let value = curvature_measure(&problem, &geom, &region)?;
    write_out(out, &format!("{value}\n"))?;
    Ok(EXIT_CONVERGED)
}
