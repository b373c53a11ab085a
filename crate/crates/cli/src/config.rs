//! TOML run configuration.
//!
//! Every table rejects unknown keys. Defaults are filled in at parse time,
//! so the serialized [`RunConfig`] is the fully resolved configuration that
//! artifacts embed.

use std::path::PathBuf;

use fracheat_core::extension_solver::{ExtGrid, ExtGridSpec, ExtSettings};
use fracheat_core::lab::{BatteryConfig, BatteryTolerances, FitOptions, SolverKind, SweepPlan};
use fracheat_core::mild_solver::{PicardSpec, ProblemSpec, Reaction, StepControl};
use fracheat_core::{Error as CoreError, KernelParams, MemoryData, PeriodicGrid};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Simulate,
    Extend,
    Sweep,
    Rate,
    ReportData,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Extend => "extend",
            Command::Sweep => "sweep",
            Command::Rate => "rate",
            Command::ReportData => "report-data",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("`{key}`: {constraint}")]
    Invalid { key: String, constraint: String },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.into(), constraint: constraint.into() }
    }

    /// Core parameter errors carry the field name; prefix it with the table.
    fn from_core(table: &str, e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { name, constraint } => {
                let key = if name.starts_with(&format!("{table}.")) { name.to_string() } else { format!("{table}.{name}") };
                ConfigError::Invalid { key, constraint }
            }
            other => ConfigError::Invalid { key: table.to_string(), constraint: other.to_string() },
        }
    }
}

fn default_dim() -> usize {
    1
}
fn default_threshold() -> f64 {
    1e4
}
fn default_coarsen() -> f64 {
    64.0
}
fn default_tail_tol() -> f64 {
    1e-10
}
fn default_max_steps() -> usize {
    200_000
}
fn default_true() -> bool {
    true
}
fn default_seed() -> u64 {
    7
}

/// The equation and its numerics. `sigma` and `p` are required except in
/// sweeps, which set them per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub sigma: Option<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub p: Option<f64>,
    pub memory: MemoryData,
    /// Side of the periodic box.
    pub length: f64,
    pub n_x: usize,
    pub t_max: f64,
    #[serde(default = "default_threshold")]
    pub blowup_threshold: f64,
    /// History coarsening ratio; 0 keeps every node.
    #[serde(default = "default_coarsen")]
    pub coarsen: f64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_true")]
    pub store_slices: bool,
    #[serde(default)]
    pub step: StepControl,
    #[serde(default)]
    pub picard: PicardSpec,
    #[serde(default = "default_reaction")]
    pub reaction: Reaction,
}

fn default_reaction() -> Reaction {
    Reaction::Power
}

/// Extension grid and monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtConfig {
    pub n_y: usize,
    pub y_max: f64,
    /// Grading power of the `y` mesh; omitted picks the default.
    pub grading: Option<f64>,
    pub kaplan_k: Vec<f64>,
    /// Keep every `slice_stride`-th `(x, y)` slice; 0 keeps the last one.
    pub slice_stride: usize,
}

impl Default for ExtConfig {
    fn default() -> Self {
        let s = ExtSettings::default();
        ExtConfig {
            n_y: s.grid.n_y,
            y_max: s.grid.y_max,
            grading: s.grid.grading,
            kaplan_k: s.kaplan_k,
            slice_stride: s.slice_stride,
        }
    }
}

impl ExtConfig {
    pub fn settings(&self) -> ExtSettings {
        ExtSettings {
            grid: ExtGridSpec { n_y: self.n_y, y_max: self.y_max, grading: self.grading },
            kaplan_k: self.kaplan_k.clone(),
            slice_stride: self.slice_stride,
        }
    }
}

fn default_solver_ext() -> SolverKind {
    SolverKind::Extension
}
fn default_near_critical() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sigmas: Vec<f64>,
    pub ps: Vec<f64>,
    pub data_scales: Vec<f64>,
    #[serde(default = "default_solver_ext")]
    pub solver: SolverKind,
    /// Relative half-width of the unlabelled band around `p*`.
    #[serde(default = "default_near_critical")]
    pub near_critical: f64,
}

impl SweepConfig {
    pub fn runs(&self) -> usize {
        self.sigmas.len() * self.ps.len() * self.data_scales.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub sigma: f64,
    pub dim: usize,
    pub a_green_scale: f64,
    pub tolerances: BatteryTolerances,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        let b = BatteryConfig::default();
        ValidateConfig { sigma: b.sigma, dim: b.dim, a_green_scale: b.a_green_scale, tolerances: b.tolerances }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateConfig {
    pub solver: SolverKind,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig { solver: SolverKind::Mild }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; omitted uses one per core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub ext: ExtConfig,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub rate: RateConfig,
}

/// Parse and range-check a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

impl RunConfig {
    fn check(&self) -> Result<(), ConfigError> {
        if self.threads == Some(0) {
            return Err(ConfigError::invalid("threads", "must be at least 1"));
        }
        let v = &self.validate;
        KernelParams::new(v.sigma, v.dim).map_err(|e| ConfigError::from_core("validate", e))?;
        if !(v.a_green_scale > 0.0 && v.a_green_scale.is_finite()) {
            return Err(ConfigError::invalid("validate.a_green_scale", "must be positive and finite"));
        }
        let f = &self.fit;
        if !(f.decades > 0.0 && f.floor_factor >= 1.0 && f.min_points >= 3) {
            return Err(ConfigError::invalid("fit", "need decades > 0, floor_factor >= 1 and min_points >= 3"));
        }
        if let Some(p) = &self.problem {
            p.check_shape()?;
            if let (Some(sigma), Some(power)) = (p.sigma, p.p) {
                let spec = p.spec(sigma, power)?;
                spec.validate_numerics().map_err(|e| ConfigError::from_core("problem", e))?;
                self.check_ext(&spec)?;
            }
        }
        if let Some(s) = &self.sweep {
            self.check_sweep(s)?;
        }
        Ok(())
    }

    fn check_ext(&self, spec: &ProblemSpec) -> Result<(), ConfigError> {
        let e = &self.ext;
        if e.kaplan_k.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(ConfigError::invalid("ext.kaplan_k", "every k must be positive"));
        }
        let x = PeriodicGrid::from_spec(spec.grid).map_err(|e| ConfigError::from_core("problem", e))?;
        ExtGrid::new(x, &spec.params, &e.settings().grid).map_err(|e| ConfigError::from_core("ext", e))?;
        Ok(())
    }

    fn check_sweep(&self, s: &SweepConfig) -> Result<(), ConfigError> {
        for (key, list) in [("sweep.sigmas", &s.sigmas), ("sweep.ps", &s.ps), ("sweep.data_scales", &s.data_scales)] {
            if list.is_empty() {
                return Err(ConfigError::invalid(key, "must not be empty"));
            }
        }
        if let Some(a) = s.data_scales.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(ConfigError::invalid("sweep.data_scales", format!("must be positive, got {a}")));
        }
        if !(s.near_critical >= 0.0 && s.near_critical < 1.0) {
            return Err(ConfigError::invalid("sweep.near_critical", "must lie in [0, 1)"));
        }
        let Some(problem) = &self.problem else {
            return Err(ConfigError::invalid("problem", "sweeps need a [problem] table as the run template"));
        };
        for &sigma in &s.sigmas {
            KernelParams::new(sigma, problem.dim).map_err(|e| ConfigError::from_core("sweep", e))?;
            for &p in &s.ps {
                let max_scale = s.data_scales.iter().copied().fold(0.0, f64::max);
                let mut spec = problem.spec(sigma, p)?;
                spec.memory = spec.memory.scaled(max_scale);
                spec.validate_numerics().map_err(|e| {
                    let ConfigError::Invalid { key, constraint } = ConfigError::from_core("problem", e) else {
                        unreachable!()
                    };
                    ConfigError::invalid(key, format!("{constraint} (sweep run σ={sigma}, p={p}, scale={max_scale})"))
                })?;
            }
        }
        Ok(())
    }

    /// The `[problem]` table with `sigma` and `p` present.
    pub fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        let p = self.problem.as_ref().ok_or_else(|| ConfigError::invalid("problem", "missing table"))?;
        let sigma = p.sigma.ok_or_else(|| ConfigError::invalid("problem.sigma", "missing key"))?;
        let power = p.p.ok_or_else(|| ConfigError::invalid("problem.p", "missing key"))?;
        p.spec(sigma, power)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan, ConfigError> {
        let s = self.sweep.as_ref().ok_or_else(|| ConfigError::invalid("sweep", "missing table"))?;
        let problem = self.problem.as_ref().ok_or_else(|| ConfigError::invalid("problem", "missing table"))?;
        Ok(SweepPlan {
            sigmas: s.sigmas.clone(),
            ps: s.ps.clone(),
            data_scales: s.data_scales.clone(),
            base: problem.spec(s.sigmas[0], s.ps[0])?,
            solver: s.solver,
            ext: self.ext.settings(),
            near_critical: s.near_critical,
            fit: self.fit,
        })
    }

    pub fn battery(&self) -> BatteryConfig {
        let v = &self.validate;
        BatteryConfig { sigma: v.sigma, dim: v.dim, a_green_scale: v.a_green_scale, seed: self.seed, tolerances: v.tolerances }
    }

    /// Resolved config for artifacts. Output location and thread count do
    /// not affect results and are left out, so reruns elsewhere are
    /// byte-identical.
    pub fn provenance(&self, command: Command) -> Value {
        let mut c = self.clone();
        c.command = Some(command);
        c.output_dir = None;
        c.threads = None;
        serde_json::to_value(&c).expect("config serializes")
    }
}

impl ProblemConfig {
    fn check_shape(&self) -> Result<(), ConfigError> {
        if !(self.coarsen == 0.0 || self.coarsen >= 1.0) {
            return Err(ConfigError::invalid("problem.coarsen", "must be 0 (off) or at least 1"));
        }
        if self.max_steps == 0 {
            return Err(ConfigError::invalid("problem.max_steps", "must be at least 1"));
        }
        PeriodicGrid::new(self.dim, self.n_x, self.length).map_err(|e| ConfigError::from_core("problem", e))?;
        Ok(())
    }

    pub fn spec(&self, sigma: f64, p: f64) -> Result<ProblemSpec, ConfigError> {
        let params = KernelParams::new(sigma, self.dim).map_err(|e| ConfigError::from_core("problem", e))?;
        let mut spec = ProblemSpec::new(params, p, self.memory, self.length, self.n_x, self.t_max);
        spec.blowup_threshold = self.blowup_threshold;
        spec.coarsen = if self.coarsen == 0.0 { None } else { Some(self.coarsen) };
        spec.tail_tol = self.tail_tol;
        spec.max_steps = self.max_steps;
        spec.store_slices = self.store_slices;
        spec.step = self.step;
        spec.picard = self.picard;
        spec.reaction = self.reaction;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [problem]
        sigma = 0.5
        p = 2.0
        length = 40.0
        n_x = 64
        t_max = 0.5
        memory = { family = "heat-bump", amp = 1.0, shift = 1.0, exponent = 0.0 }
    "#;

    #[test]
    fn defaults_are_filled_in() {
        let c = parse_config(MINIMAL).unwrap();
        let p = c.problem.as_ref().unwrap();
        assert_eq!(p.dim, 1);
        assert_eq!(p.coarsen, 64.0);
        assert_eq!(c.seed, 7);
        assert_eq!(c.ext.n_y, 128);
        let v = c.provenance(Command::Simulate);
        assert_eq!(v["command"], "simulate");
        assert_eq!(v["problem"]["step"]["dt_max"], 0.01);
        assert!(v.get("output_dir").is_none() && v.get("threads").is_none());
    }

    #[test]
    fn core_errors_name_the_table() {
        let text = MINIMAL.replace("t_max = 0.5", "t_max = -1.0");
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("problem.t_max"), "{e}");
        let text = MINIMAL.replace("shift = 1.0", "shift = 0.0");
        let e = parse_config(&text).unwrap_err();
        assert!(e.to_string().contains("problem.memory.shift"), "{e}");
        let e = parse_config(&format!("{MINIMAL}\n[ext]\nn_y = 1\n")).unwrap_err();
        assert!(e.to_string().contains("ext.n_y"), "{e}");
    }
}
