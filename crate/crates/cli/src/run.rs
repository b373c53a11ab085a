//! Command execution and exit status.

use std::path::Path;

use fracheat_core::artifacts::{write_ext_trajectory, write_json, write_rate, write_sweep, write_trajectory, write_validation, VERSION};
use fracheat_core::extension_solver::extension_march;
use fracheat_core::lab::{fit_rate, sweep, validation_battery, SolverKind};
use fracheat_core::mild_solver::{mild_march, ProblemSpec, Reaction, Status};
use fracheat_core::Error as CoreError;
use serde_json::{json, Value};

use crate::config::{Command, ConfigError, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Success(String),
    SolverFailure(String),
    ValidationFailure(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Success(_) => 0,
            Outcome::SolverFailure(_) => 1,
            Outcome::ValidationFailure(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Outcome::Success(m) | Outcome::SolverFailure(m) | Outcome::ValidationFailure(m) => m,
        }
    }

    /// Keeps the most severe of two outcomes, joining messages.
    fn and(self, other: Outcome) -> Outcome {
        let msg = format!("{}; {}", self.message(), other.message());
        match self.exit_code().max(other.exit_code()) {
            0 => Outcome::Success(msg),
            1 => Outcome::SolverFailure(msg),
            _ => Outcome::ValidationFailure(msg),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Core(
                CoreError::InvalidParameter { .. } | CoreError::InvalidHistory(_) | CoreError::Domain(_) | CoreError::Unsupported(_),
            ) => 2,
            RunError::Core(_) => 1,
        }
    }
}

/// Run `command` and write its artifacts under `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome, RunError> {
    let prov = cfg.provenance(command);
    match command {
        Command::Validate => validate(cfg, &prov, out),
        Command::Simulate => simulate(&cfg.problem_spec()?, &prov, out),
        Command::Extend => extend(cfg, &cfg.problem_spec()?, &prov, out),
        Command::Sweep => run_sweep(cfg, &prov, out),
        Command::Rate => rate(cfg, &prov, out),
        Command::ReportData => report_data(cfg, &prov, out),
    }
}

fn status_outcome(what: &str, status: Status, t: f64, sup: f64, message: Option<&str>) -> Outcome {
    let summary = format!("{what}: {status:?} at t={t:.6}, sup={sup:.4e}");
    match status {
        Status::StepFailure => Outcome::SolverFailure(format!("{summary}: {}", message.unwrap_or("step failure"))),
        _ => Outcome::Success(summary),
    }
}

fn validate(cfg: &RunConfig, prov: &Value, out: &Path) -> Result<Outcome, RunError> {
    let report = validation_battery(&cfg.battery())?;
    write_validation(out, prov, &report)?;
    let failed: Vec<&str> = report.entries.iter().filter(|e| !e.pass).map(|e| e.name.as_str()).collect();
    Ok(if report.all_pass {
        Outcome::Success(format!("validate: {} checks passed", report.entries.len()))
    } else {
        Outcome::ValidationFailure(format!("validate: failed {}", failed.join(", ")))
    })
}

fn simulate(spec: &ProblemSpec, prov: &Value, out: &Path) -> Result<Outcome, RunError> {
    spec.validate()?;
    let traj = mild_march(spec)?;
    write_trajectory(out, prov, spec, &traj)?;
    Ok(status_outcome("simulate", traj.status, traj.final_time(), traj.final_sup(), traj.message.as_deref()))
}

fn extend(cfg: &RunConfig, spec: &ProblemSpec, prov: &Value, out: &Path) -> Result<Outcome, RunError> {
    let settings = cfg.ext.settings();
    let traj = extension_march(spec, &settings)?;
    write_ext_trajectory(out, prov, spec, &settings, &traj)?;
    Ok(status_outcome("extend", traj.status, traj.final_time(), traj.final_sup(), traj.message.as_deref()))
}

fn run_sweep(cfg: &RunConfig, prov: &Value, out: &Path) -> Result<Outcome, RunError> {
    let plan = cfg.sweep_plan()?;
    let report = sweep(&plan)?;
    write_sweep(out, prov, &report)?;
    let failed = report.runs.iter().filter(|r| r.status == Status::StepFailure).count();
    let inconsistent = report.cells.iter().filter(|c| !c.consistent).count();
    let summary = format!(
        "sweep: {} runs, {} cells, {} inconsistent with the predicted regime",
        report.runs.len(),
        report.cells.len(),
        inconsistent
    );
    Ok(if failed > 0 { Outcome::SolverFailure(format!("{summary}; {failed} runs hit a step failure")) } else { Outcome::Success(summary) })
}

/// `σ/(p-1)`, the rate of the self-similar blow-up profile.
fn oracle_rate(spec: &ProblemSpec) -> Option<f64> {
    (spec.reaction == Reaction::Power && spec.p > 1.0).then(|| spec.params.sigma / (spec.p - 1.0))
}

fn rate(cfg: &RunConfig, prov: &Value, out: &Path) -> Result<Outcome, RunError> {
    let spec = cfg.problem_spec()?;
    let (times, sups, status, run_outcome) = match cfg.rate.solver {
        SolverKind::Mild => {
            spec.validate()?;
            let traj = mild_march(&spec)?;
            write_trajectory(out, prov, &spec, &traj)?;
            let o = status_outcome("rate run", traj.status, traj.final_time(), traj.final_sup(), traj.message.as_deref());
            (traj.times, traj.sup_norms, traj.status, o)
        }
        SolverKind::Extension => {
            let settings = cfg.ext.settings();
            let traj = extension_march(&spec, &settings)?;
            write_ext_trajectory(out, prov, &spec, &settings, &traj)?;
            let o = status_outcome("rate run", traj.status, traj.final_time(), traj.final_sup(), traj.message.as_deref());
            (traj.times, traj.sup_norms, traj.status, o)
        }
    };
    if let Outcome::SolverFailure(_) = run_outcome {
        return Ok(run_outcome);
    }
    if status != Status::BlowupDetected {
        return Ok(Outcome::SolverFailure(format!("rate: no blow-up before t_max = {}", spec.t_max)));
    }
    let fit = match fit_rate(&times, &sups, true, &cfg.fit) {
        Ok(f) => f,
        Err(e) => return Ok(Outcome::SolverFailure(format!("rate: {e}"))),
    };
    let oracle = oracle_rate(&spec);
    write_rate(out, prov, &fit, oracle)?;
    let vs = oracle.map(|o| format!(" (σ/(p-1) = {o:.5})")).unwrap_or_default();
    Ok(Outcome::Success(format!("rate: β = {:.5} ± {:.2e}{vs}, T = {:.6}", fit.rate_exp, fit.rate_ci, fit.t_est)))
}

/// Everything the figure renderer consumes, plus `manifest.json` mapping
/// figure kinds to artifact paths.
fn report_data(cfg: &RunConfig, prov: &Value, out: &Path) -> Result<Outcome, RunError> {
    let has_problem = cfg.problem.as_ref().is_some_and(|p| p.sigma.is_some() && p.p.is_some());
    if !has_problem && cfg.sweep.is_none() {
        return Err(ConfigError::Invalid {
            key: "problem".into(),
            constraint: "report-data needs a complete [problem] table, a [sweep] table, or both".into(),
        }
        .into());
    }
    let mut figures = Vec::new();
    let mut outcome: Option<Outcome> = None;
    let mut merge = |o: Outcome| outcome = Some(match outcome.take() { Some(prev) => prev.and(o), None => o });
    if has_problem {
        merge(rate(cfg, prov, &out.join("rate"))?);
        figures.push(json!({"kind": "rate-curve", "supnorm": "rate/supnorm.csv", "rate": "rate/rate.json"}));
        merge(extend(cfg, &cfg.problem_spec()?, prov, &out.join("monitors"))?);
        figures.push(json!({"kind": "monitors", "energy": "monitors/energy.csv", "supnorm": "monitors/supnorm.csv"}));
    }
    if cfg.sweep.is_some() {
        merge(run_sweep(cfg, prov, &out.join("phase"))?);
        figures.push(json!({"kind": "phase-diagram", "phase": "phase/phase.csv", "cells": "phase/phase_cells.csv"}));
    }
    write_json(out.join("manifest.json"), &json!({"version": VERSION, "config": prov, "figures": figures}))?;
    Ok(outcome.expect("at least one part ran"))
}
