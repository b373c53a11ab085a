//! Time marching of the mild formulation
//! `u = R_- f + ∫_0^t ∫ G(x-z, t-s) F(u)(z, s) dz ds`.
//!
//! In Fourier space the Green function of mode `λ` is
//! `r^{σ-1} e^{-λr} / Γ(σ)`; the reaction history is interpolated
//! piecewise linearly in time and integrated against it with exact moments.
//! Only the newest node is unknown and it is found by Picard iteration.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional_ops::{hat_weights, master_apply_slice, FieldHistory, SpaceTimeField};
use crate::grid::{max_abs, sup_norm, BoxSpec, PeriodicGrid};
use crate::kernels::{heat_kernel_r2, KernelParams};
use crate::memory::MemoryData;
use crate::quad::{self, Cluster};

/// Weights of panels with `λ r_lo` beyond this are dropped (`e^{-60}`).
const NEGLIGIBLE_DECAY: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    pub dt_initial: f64,
    pub dt_max: f64,
    /// Largest ratio between consecutive steps.
    pub growth: f64,
    /// Fraction of the blow-up time scale `sup^{-(p-1)/σ}` allowed per step.
    pub theta: f64,
    /// `dt <= early_ratio * t` once `t` exceeds `dt_initial`.
    pub early_ratio: f64,
    pub dt_floor: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { dt_initial: 1e-4, dt_max: 0.01, growth: 1.2, theta: 0.01, early_ratio: 0.1, dt_floor: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardSpec {
    pub max_iter: usize,
    /// Stop when successive iterates differ by less than `tol * sup|u|`.
    pub tol: f64,
}

impl Default for PicardSpec {
    fn default() -> Self {
        PicardSpec { max_iter: 40, tol: 1e-11 }
    }
}

/// Right-hand side of the equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Reaction {
    /// `max(u, 0)^p`.
    Power,
    /// Prescribed `h(x,t) = amp (1 + t)^exponent K_width(x)`.
    Linear { amp: f64, width: f64, exponent: f64 },
}

impl Reaction {
    pub fn linear_value(&self, r2: f64, t: f64, dim: usize) -> f64 {
        match *self {
            Reaction::Power => 0.0,
            Reaction::Linear { amp, width, exponent } => amp * (1.0 + t).powf(exponent) * heat_kernel_r2(r2, width, dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub params: KernelParams,
    pub p: f64,
    pub memory: MemoryData,
    pub grid: BoxSpec,
    pub t_max: f64,
    pub step: StepControl,
    pub picard: PicardSpec,
    pub blowup_threshold: f64,
    /// Drop history node `j` once its neighbours span less than
    /// `1/coarsen` of its age. `None` keeps every node.
    pub coarsen: Option<f64>,
    /// Relative tolerance for truncating infinite memory tails.
    pub tail_tol: f64,
    pub reaction: Reaction,
    pub max_steps: usize,
    pub store_slices: bool,
}

impl ProblemSpec {
    /// Spec with default numerics; `n_x = 1` gives the space-homogeneous
    /// problem.
    pub fn new(params: KernelParams, p: f64, memory: MemoryData, length: f64, n_x: usize, t_max: f64) -> Self {
        ProblemSpec {
            params,
            p,
            memory,
            grid: BoxSpec { dim: params.dim, n: n_x, length },
            t_max,
            step: StepControl::default(),
            picard: PicardSpec::default(),
            blowup_threshold: 1e4,
            coarsen: Some(64.0),
            tail_tol: 1e-10,
            reaction: Reaction::Power,
            max_steps: 200_000,
            store_slices: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let MemoryData::Constant { level } = self.memory {
            if level != 0.0 {
                return Err(Error::InvalidHistory("constant memory has no decaying history; use the extension solver".into()));
            }
        }
        self.validate_numerics()
    }

    /// Every check except the decay requirement on the memory, which only
    /// the representation formula needs.
    pub fn validate_numerics(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::param("p", format!("must be positive, got {}", self.p)));
        }
        if self.grid.dim != self.params.dim {
            return Err(Error::param("grid.dim", "must match the kernel dimension"));
        }
        self.memory.validate(&self.params)?;
        let s = &self.step;
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::param("t_max", "must be positive and finite"));
        }
        if !(s.dt_floor > 0.0) {
            return Err(Error::param("step.dt_floor", "must be positive"));
        }
        if !(s.dt_initial >= s.dt_floor && s.dt_max >= s.dt_initial) {
            return Err(Error::param("step.dt_initial", "need dt_floor <= dt_initial <= dt_max"));
        }
        if !(s.growth >= 1.0 && s.theta > 0.0 && s.early_ratio > 0.0) {
            return Err(Error::param("step", "growth >= 1, theta > 0 and early_ratio > 0 required"));
        }
        if self.picard.max_iter == 0 || !(self.picard.tol > 0.0) {
            return Err(Error::param("picard", "max_iter >= 1 and tol > 0 required"));
        }
        if let Some(c) = self.coarsen {
            if !(c >= 1.0) {
                return Err(Error::param("coarsen", "must be at least 1"));
            }
        }
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return Err(Error::param("tail_tol", "must lie in (0, 1)"));
        }
        let sup0 = self.memory.sup_at_zero(self.params.dim);
        if !(self.blowup_threshold > sup0) {
            return Err(Error::param(
                "blowup_threshold",
                format!("must exceed the initial sup-norm {sup0}"),
            ));
        }
        if self.reaction == Reaction::Power && self.p > 1.0 {
            // the step limit θ sup^{-(p-1)/σ} hits dt_floor at this level
            let reachable = (s.theta / s.dt_floor).powf(self.params.sigma / (self.p - 1.0));
            if self.blowup_threshold > reachable {
                return Err(Error::param(
                    "blowup_threshold",
                    format!("{} is unreachable before dt falls below dt_floor (limit {reachable:.3e})", self.blowup_threshold),
                ));
            }
        }
        if let Reaction::Linear { width, .. } = self.reaction {
            if !(width > 0.0) {
                return Err(Error::param("reaction.width", "must be positive"));
            }
        }
        Ok(())
    }

    /// `1/Γ(σ)` expressed through the Green prefactor.
    pub(crate) fn green_time_prefactor(&self) -> f64 {
        self.params.a_green * (4.0 * PI).powf(0.5 * self.params.dim as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    CompletedHorizon,
    BlowupDetected,
    StepFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub grid: BoxSpec,
    pub times: Vec<f64>,
    /// Empty unless the spec stores slices.
    #[serde(skip)]
    pub slices: Vec<Vec<f64>>,
    pub sup_norms: Vec<f64>,
    /// Step that produced each time (zero for the initial slice).
    pub dts: Vec<f64>,
    pub picard_iters: Vec<usize>,
    pub status: Status,
    pub message: Option<String>,
    /// Largest relative error bar of the memory forcing.
    pub forcing_error: f64,
    /// History nodes left after coarsening at the end.
    pub history_nodes: usize,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }
    pub fn final_sup(&self) -> f64 {
        *self.sup_norms.last().unwrap()
    }
}

struct Marcher<'a> {
    spec: &'a ProblemSpec,
    grid: PeriodicGrid,
    g_pref: f64,
    hist_t: Vec<f64>,
    hist_r: Vec<Vec<Complex64>>,
}

enum StepError {
    NoContraction,
    Fatal(Error),
}

impl<'a> Marcher<'a> {
    fn reaction(&self, u: &[f64], t: f64) -> Vec<f64> {
        match self.spec.reaction {
            Reaction::Power => {
                let p = self.spec.p;
                u.iter().map(|&v| if v > 0.0 { v.powf(p) } else { 0.0 }).collect()
            }
            Reaction::Linear { .. } => {
                let dim = self.grid.dim();
                (0..self.grid.len())
                    .map(|k| self.spec.reaction.linear_value(self.grid.radius2(k), t, dim))
                    .collect()
            }
        }
    }

    fn linear_spectrum(&self, t: f64) -> Vec<Complex64> {
        match self.spec.reaction {
            Reaction::Linear { amp, width, exponent } => {
                let a = amp * (1.0 + t).powf(exponent);
                self.grid.heat_spectrum(width).into_iter().map(|c| c * a).collect()
            }
            Reaction::Power => unreachable!(),
        }
    }

    /// Known part of the new slice and the weight of the unknown node per
    /// mode, plus the forcing's relative error bar.
    fn assemble(&self, t_new: f64) -> Result<(Vec<Complex64>, Vec<f64>, f64)> {
        let spec = self.spec;
        let grid = &self.grid;
        let m = self.hist_t.len();
        let mut known = if spec.memory.is_zero() {
            vec![Complex64::new(0.0, 0.0); grid.len()]
        } else {
            Vec::new()
        };
        let mut rel_err = 0.0;
        if known.is_empty() {
            let a = spec.memory.forcing_amplitude(t_new, &spec.params, spec.tail_tol)?;
            rel_err = if a.value != 0.0 { a.half_width / a.value.abs() } else { 0.0 };
            known = spec.memory.spatial_spectrum(grid, t_new).into_iter().map(|c| c * a.value).collect();
        }
        let sigma = spec.params.sigma;
        let g = self.g_pref;
        let hist_t = &self.hist_t;
        // weights[d][j] multiplies the reaction at node j; index m is the new node
        let weights: Vec<Vec<f64>> = grid
            .distinct_lambdas()
            .par_iter()
            .map(|&lam| {
                let mut w = vec![0.0; m + 1];
                for j in 0..m {
                    let newer = if j + 1 < m { hist_t[j + 1] } else { t_new };
                    let lo = t_new - newer;
                    let hi = t_new - hist_t[j];
                    if lam * lo > NEGLIGIBLE_DECAY {
                        continue;
                    }
                    let (w_lo, w_hi) = hat_weights(sigma, lam, lo, hi);
                    w[j] += g * w_hi;
                    w[j + 1] += g * w_lo;
                }
                w
            })
            .collect();
        let didx = grid.distinct_index();
        let hist_r = &self.hist_r;
        known.par_iter_mut().enumerate().for_each(|(k, acc)| {
            let w = &weights[didx[k]];
            for j in 0..m {
                if w[j] != 0.0 {
                    *acc += hist_r[j][k] * w[j];
                }
            }
        });
        let w_new = (0..grid.len()).map(|k| weights[didx[k]][m]).collect();
        Ok((known, w_new, rel_err))
    }

    fn try_step(&self, t_new: f64, guess: &[f64]) -> std::result::Result<(Vec<f64>, Vec<Complex64>, usize, f64), StepError> {
        let (known, w_new, rel_err) = self.assemble(t_new).map_err(StepError::Fatal)?;
        let grid = &self.grid;
        let combine = |r_hat: &[Complex64]| -> Vec<f64> {
            let s: Vec<Complex64> = known.iter().zip(r_hat).zip(&w_new).map(|((b, r), w)| b + r * w).collect();
            grid.ifft(&s)
        };
        if let Reaction::Linear { .. } = self.spec.reaction {
            let r_hat = self.linear_spectrum(t_new);
            let u = combine(&r_hat);
            return Ok((u, r_hat, 0, rel_err));
        }
        let tol = self.spec.picard.tol;
        let mut u = guess.to_vec();
        let mut prev_diff = f64::INFINITY;
        for it in 1..=self.spec.picard.max_iter {
            let r_hat = grid.fft(&self.reaction(&u, t_new));
            let next = combine(&r_hat);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(StepError::NoContraction);
            }
            let diff = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = max_abs(&next);
            u = next;
            if diff <= tol * scale.max(1e-300) {
                let r_hat = grid.fft(&self.reaction(&u, t_new));
                return Ok((u, r_hat, it, rel_err));
            }
            if it >= 3 && diff > 0.9 * prev_diff {
                return Err(StepError::NoContraction);
            }
            prev_diff = diff;
        }
        Err(StepError::NoContraction)
    }

    fn coarsen(&mut self, t_now: f64) {
        let Some(c) = self.spec.coarsen else { return };
        let mut j = 1;
        while j + 1 < self.hist_t.len() {
            let age = t_now - self.hist_t[j + 1];
            let span = self.hist_t[j + 1] - self.hist_t[j - 1];
            if age >= c * span {
                self.hist_t.remove(j);
                self.hist_r.remove(j);
            }
            j += 1;
        }
    }
}

/// March the mild formulation until the horizon, blow-up or failure.
pub fn mild_march(spec: &ProblemSpec) -> Result<Trajectory> {
    spec.validate()?;
    let grid = PeriodicGrid::from_spec(spec.grid)?;
    let u0 = spec.memory.slice(&grid, 0.0);
    let mut m = Marcher { spec, grid, g_pref: spec.green_time_prefactor(), hist_t: vec![0.0], hist_r: Vec::new() };
    let r0 = m.reaction(&u0, 0.0);
    m.hist_r.push(m.grid.fft(&r0));

    let mut traj = Trajectory {
        grid: spec.grid,
        times: vec![0.0],
        slices: Vec::new(),
        sup_norms: vec![sup_norm(&u0)],
        dts: vec![0.0],
        picard_iters: vec![0],
        status: Status::CompletedHorizon,
        message: None,
        forcing_error: 0.0,
        history_nodes: 1,
    };
    let mut prev = u0.clone();
    let mut prev2: Option<(f64, Vec<f64>)> = None;
    if spec.store_slices {
        traj.slices.push(u0);
    }
    let sc = spec.step;
    let mut t = 0.0;
    let mut dt = sc.dt_initial;
    let horizon_eps = 1e-12 * spec.t_max;
    let mut steps = 0usize;
    'outer: while t < spec.t_max - horizon_eps {
        if steps >= spec.max_steps {
            traj.status = Status::StepFailure;
            traj.message = Some(format!("step budget of {} exhausted at t = {t}", spec.max_steps));
            break;
        }
        dt = dt.min(spec.t_max - t);
        let (u, r_hat, iters, rel_err, used) = loop {
            if dt < sc.dt_floor {
                let sup = *traj.sup_norms.last().unwrap();
                if sup > spec.blowup_threshold {
                    traj.status = Status::BlowupDetected;
                } else {
                    traj.status = Status::StepFailure;
                    traj.message = Some(format!("step collapsed below dt_floor at t = {t} with sup = {sup}"));
                }
                break 'outer;
            }
            let t_new = t + dt;
            // linear extrapolation of the last two slices as the Picard guess
            let guess: Vec<f64> = match &prev2 {
                Some((t2, u2)) if t > *t2 => {
                    let w = dt / (t - t2);
                    prev.iter().zip(u2).map(|(a, b)| (a + w * (a - b)).max(0.0)).collect()
                }
                _ => prev.clone(),
            };
            match m.try_step(t_new, &guess) {
                Ok((u, r_hat, iters, rel_err)) => break (u, r_hat, iters, rel_err, dt),
                Err(StepError::NoContraction) => dt *= 0.5,
                Err(StepError::Fatal(e)) => return Err(e),
            }
        };
        steps += 1;
        t += used;
        if spec.t_max - t <= horizon_eps {
            t = spec.t_max;
        }
        m.hist_t.push(t);
        m.hist_r.push(r_hat);
        m.coarsen(t);
        let sup = sup_norm(&u);
        traj.times.push(t);
        traj.sup_norms.push(sup);
        traj.dts.push(used);
        traj.picard_iters.push(iters);
        traj.forcing_error = traj.forcing_error.max(rel_err);
        prev2 = Some((traj.times[traj.times.len() - 2], std::mem::replace(&mut prev, u)));
        if spec.store_slices {
            traj.slices.push(prev.clone());
        }
        if !sup.is_finite() {
            traj.status = if spec.reaction == Reaction::Power { Status::BlowupDetected } else { Status::StepFailure };
            break;
        }

        let mut next = (used * sc.growth).min(sc.dt_max);
        if t > sc.dt_initial {
            next = next.min((sc.early_ratio * t).max(sc.dt_initial));
        }
        if spec.reaction == Reaction::Power && spec.p > 1.0 && sup > 0.0 {
            next = next.min(sc.theta * sup.powf(-(spec.p - 1.0) / spec.params.sigma));
        }
        dt = next;
    }
    traj.history_nodes = m.hist_t.len();
    Ok(traj)
}

/// Residual of `𝓜u = F(u)` at sampled `(grid index, time index)` pairs.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// `(t, x, residual, relative residual)` per sample.
    pub samples: Vec<(f64, Vec<f64>, f64, f64)>,
    pub max_relative: f64,
}

/// Apply the master operator to a stored trajectory and compare with the
/// reaction. Relative residuals are scaled by `sup_x |F(u(·, t))|`.
pub fn residual_check(traj: &Trajectory, spec: &ProblemSpec, samples: &[(usize, usize)]) -> Result<ResidualReport> {
    if traj.slices.len() != traj.times.len() {
        return Err(Error::OutOfRange("trajectory has no stored slices".into()));
    }
    let grid = PeriodicGrid::from_spec(traj.grid)?;
    let mut field = SpaceTimeField::new(grid.clone(), FieldHistory::Memory(spec.memory));
    for (t, u) in traj.times.iter().zip(&traj.slices) {
        field.push(*t, u.clone())?;
    }
    let m = Marcher { spec, grid: grid.clone(), g_pref: 0.0, hist_t: vec![], hist_r: vec![] };
    let mut times: Vec<usize> = samples.iter().map(|s| s.1).collect();
    times.sort_unstable();
    times.dedup();
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    for n in times {
        if n == 0 || n >= traj.times.len() {
            return Err(Error::OutOfRange(format!("time index {n} is not an interior stored time")));
        }
        let mu = master_apply_slice(&field, &spec.params, n, spec.tail_tol)?;
        let t = traj.times[n];
        let r = m.reaction(&traj.slices[n], t);
        let scale = max_abs(&r);
        for &(k, nn) in samples.iter().filter(|s| s.1 == n) {
            if k >= grid.len() {
                return Err(Error::OutOfRange(format!("grid index {k} out of range")));
            }
            let res = mu[k] - r[k];
            let rel = if scale > 0.0 { res.abs() / scale } else { res.abs() };
            worst = worst.max(rel);
            out.push((traj.times[nn], grid.point(k), res, rel));
        }
    }
    Ok(ResidualReport { samples: out, max_relative: worst })
}

/// Direct quadrature of the representation formula for a linear reaction,
/// in free space: `R_- f + ∫_0^t h(·, s) ⋆ G(·, t-s) ds` at one point.
pub fn representation_direct(spec: &ProblemSpec, x: &[f64], t: f64) -> Result<f64> {
    let Reaction::Linear { amp, width, exponent } = spec.reaction else {
        return Err(Error::param("reaction", "direct representation needs a linear reaction"));
    };
    if !(t > 0.0) {
        return Ok(spec.memory.value(x, 0.0));
    }
    let forcing = crate::fractional_ops::memory_forcing(&spec.memory, x, t, &spec.params, spec.tail_tol)?.value;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let sigma = spec.params.sigma;
    let dim = spec.params.dim;
    // h(·,s) ⋆ G(·,t-s) = amp (1+s)^exponent (t-s)^{σ-1} K_{t-s+width} / Γ(σ)
    let integrand = |s: f64| {
        let r = t - s;
        if r <= 0.0 {
            return 0.0;
        }
        (1.0 + s).powf(exponent) * r.powf(sigma - 1.0) * heat_kernel_r2(r2, r + width, dim)
    };
    let duhamel = amp * spec.green_time_prefactor() * quad::graded(integrand, 0.0, t, Cluster::Right, 60);
    Ok(forcing + duhamel)
}
