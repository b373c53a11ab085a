//! Experiment harness: regime classification, explicit solutions, blow-up
//! rate fitting, Fujita sweeps and the closed-form validation battery.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension_solver::{conormal_trace, extension_march, static_extension, ExtGrid, ExtGridSpec, ExtSettings};
use crate::fractional_ops::{
    frac_laplacian, marchaud, marchaud_power_rule, master_apply_slice, FieldHistory, SpaceTimeField, Tail, TimeHistory,
};
use crate::grid::{max_abs, PeriodicGrid};
use crate::kernels::{heat_kernel, heat_kernel_r2, master_kernel, poisson_time_density, KernelParams};
use crate::memory::MemoryData;
use crate::mild_solver::{mild_march, ProblemSpec, Status};
use crate::quad;
use crate::special::{gamma, gamma_ratio};

/// Fujita exponent `1 + 2σ / (N + 2(1-σ))`.
pub fn p_star(sigma: f64, dim: usize) -> f64 {
    1.0 + 2.0 * sigma / (dim as f64 + 2.0 * (1.0 - sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    /// `p <= 1`: every solution is global.
    GlobalAll,
    /// `1 < p <= p*`: every nontrivial solution blows up.
    BlowupAll,
    /// `p > p*`: small data global, large data blow up.
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub p_star: f64,
}

pub fn fujita_classify(p: f64, sigma: f64, dim: usize) -> Result<Regime> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::param("p", "must be positive"));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::param("sigma", "must lie in (0,1)"));
    }
    if dim == 0 {
        return Err(Error::param("dim", "must be at least 1"));
    }
    let ps = p_star(sigma, dim);
    let kind = if p <= 1.0 {
        RegimeKind::GlobalAll
    } else if p <= ps {
        RegimeKind::BlowupAll
    } else {
        RegimeKind::Conditional
    };
    Ok(Regime { kind, p_star: ps })
}

/// Space-homogeneous blow-up solution `z(t) = c (T - t)^{-σ/(p-1)}` of
/// `∂_t^σ z = z^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitBlowup {
    pub p: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub c: f64,
    pub beta: f64,
}

impl ExplicitBlowup {
    pub fn new(p: f64, sigma: f64, horizon: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::param("p", "explicit blow-up needs p > 1"));
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::param("sigma", "must lie in (0,1)"));
        }
        let beta = sigma / (p - 1.0);
        let c = gamma_ratio(sigma * p / (p - 1.0), beta).powf(1.0 / (p - 1.0));
        Ok(ExplicitBlowup { p, sigma, horizon, c, beta })
    }

    pub fn value(&self, t: f64) -> f64 {
        if t >= self.horizon {
            f64::INFINITY
        } else {
            self.c * (self.horizon - t).powf(-self.beta)
        }
    }

    /// The solution restricted to `t <= 0`, as memory data.
    pub fn memory(&self) -> MemoryData {
        MemoryData::PowerBlowup { amp: self.c, horizon: self.horizon, exponent: self.beta }
    }

    /// `z_λ(t) = λ^{2σ/(p-1)} z(λ^2 t)`, the solution with horizon `T/λ^2`.
    pub fn rescaled(&self, lambda: f64) -> Self {
        ExplicitBlowup { horizon: self.horizon / (lambda * lambda), ..*self }
    }
}

/// Global solution `c_* (t + t1)_+^ν`, `ν = σ/(1-p)`, for `p < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplicitGlobal {
    pub p: f64,
    pub sigma: f64,
    pub t1: f64,
    pub c: f64,
    pub nu: f64,
}

impl ExplicitGlobal {
    pub fn new(p: f64, sigma: f64, t1: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param("p", "explicit global solution needs 0 < p < 1"));
        }
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::param("sigma", "must lie in (0,1)"));
        }
        let nu = sigma / (1.0 - p);
        let c = gamma_ratio(1.0 + nu, 1.0 + nu - sigma).powf(1.0 / (p - 1.0));
        Ok(ExplicitGlobal { p, sigma, t1, c, nu })
    }

    pub fn value(&self, t: f64) -> f64 {
        let r = t + self.t1;
        if r > 0.0 {
            self.c * r.powf(self.nu)
        } else {
            0.0
        }
    }

    pub fn memory(&self) -> MemoryData {
        MemoryData::PowerRamp { amp: self.c, shift: self.t1, exponent: self.nu }
    }
}

fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    v[n] = b;
    v
}

/// `|∂_t^σ z - z^p| / z^p` at `t` by product-integration quadrature of `z`
/// sampled on `[t - 1, t]` with `samples` panels and the exact power tail.
pub fn blowup_ode_residual(z: &ExplicitBlowup, t: f64, samples: usize) -> Result<f64> {
    if !(t < z.horizon) {
        return Err(Error::Domain(format!("t = {t} is past the horizon")));
    }
    let tail = Tail::PowerDecay { amp: z.c, horizon: z.horizon, exponent: z.beta };
    let h = TimeHistory::from_fn(uniform(t - 1.0, t, samples), |s| z.value(s), tail)?;
    let lhs = marchaud(&h, t, z.sigma)?;
    let rhs = z.value(t).powf(z.p);
    Ok((lhs - rhs).abs() / rhs)
}

/// Same check for the global solution, sampled on `[-t1, t]`.
pub fn global_ode_residual(u: &ExplicitGlobal, t: f64, samples: usize) -> Result<f64> {
    if !(t > -u.t1) {
        return Err(Error::Domain(format!("t = {t} precedes the support")));
    }
    let h = TimeHistory::from_fn(uniform(-u.t1, t, samples), |s| u.value(s), Tail::Zero)?;
    let lhs = marchaud(&h, t, u.sigma)?;
    let rhs = u.value(t).powf(u.p);
    Ok((lhs - rhs).abs() / rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Decades of growth below the final value used by the fit.
    pub decades: f64,
    pub min_points: usize,
    /// Only values above this multiple of the initial sup-norm are used.
    pub floor_factor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { decades: 1.0, min_points: 8, floor_factor: 10.0 }
    }
}

/// Joint fit of `m(t) ≈ A (T - t)^{-β}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub detected: bool,
    pub t_est: f64,
    pub rate_exp: f64,
    /// 95% half-width of `β` from the regression at the fitted `T`.
    pub rate_ci: f64,
    pub window: (f64, f64),
    /// RMS residual of `log m`.
    pub residual: f64,
    pub points: usize,
}

struct LineFit {
    slope: f64,
    sse: f64,
    sxx: f64,
}

fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let sse = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    LineFit { slope, sse, sxx }
}

/// Fit the blow-up rate from a sup-norm series using its running maximum.
pub fn fit_rate(times: &[f64], sup_norms: &[f64], detected: bool, opts: &FitOptions) -> Result<BlowupReport> {
    if times.len() != sup_norms.len() || times.is_empty() {
        return Err(Error::InsufficientData("times and sup-norms must be nonempty and of equal length".into()));
    }
    let m0 = sup_norms.iter().copied().find(|v| *v > 0.0).unwrap_or(0.0);
    if !(m0 > 0.0) {
        return Err(Error::InsufficientData("series has no positive values".into()));
    }
    let mut running = Vec::with_capacity(sup_norms.len());
    let mut best = f64::NEG_INFINITY;
    for &s in sup_norms {
        best = best.max(s);
        running.push(best);
    }
    let m_end = *running.last().unwrap();
    let floor = (opts.floor_factor * m0).max(m_end / 10f64.powf(opts.decades));
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (i, (&t, &m)) in times.iter().zip(&running).enumerate() {
        // only points where the maximum actually grew
        if m >= floor && m > last && sup_norms[i] == m && m.is_finite() {
            ts.push(t);
            ys.push(m.ln());
            last = m;
        }
    }
    if ts.len() < opts.min_points {
        return Err(Error::InsufficientData(format!(
            "{} points above {floor:.3e}, need {}",
            ts.len(),
            opts.min_points
        )));
    }
    let t_last = *ts.last().unwrap();
    let span = t_last - ts[0];
    let sse_at = |delta: f64| {
        let x: Vec<f64> = ts.iter().map(|t| (t_last + delta - t).ln()).collect();
        line_fit(&x, &ys).sse
    };
    // scan log δ, then refine the best bracket by golden section
    let lo = (span * 1e-10).max(t_last.abs() * 1e-15).max(1e-300).ln();
    let hi = (10.0 * span).ln();
    let n_scan = 400;
    let grid: Vec<f64> = (0..=n_scan).map(|i| lo + (hi - lo) * i as f64 / n_scan as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|v| sse_at(v.exp())).collect();
    let ib = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let (mut a, mut b) = (grid[ib.saturating_sub(1)], grid[(ib + 1).min(n_scan)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (sse_at(c.exp()), sse_at(d.exp()));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sse_at(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sse_at(d.exp());
        }
    }
    let delta = (0.5 * (a + b)).exp();
    let x: Vec<f64> = ts.iter().map(|t| (t_last + delta - t).ln()).collect();
    let fit = line_fit(&x, &ys);
    let n = ts.len() as f64;
    let se = (fit.sse / (n - 2.0) / fit.sxx).sqrt();
    Ok(BlowupReport {
        detected,
        t_est: t_last + delta,
        rate_exp: -fit.slope,
        rate_ci: 1.96 * se,
        window: (ts[0], t_last),
        residual: (fit.sse / n).sqrt(),
        points: ts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub skipped: bool,
    /// Largest `c` with `u >= c t^{σ-1} K_t` on the sampled window.
    pub c_fit: f64,
    pub samples: usize,
}

/// Fit the lower bound `u(x,t) >= c t^{σ-1} K_t(x)` over stored slices with
/// `t >= t0`, at points where `|x|^2 <= 8t` and `|x| <= L/4`.
pub fn lower_bound_check(
    grid: &PeriodicGrid,
    times: &[f64],
    slices: &[Vec<f64>],
    params: &KernelParams,
    t0: f64,
) -> LowerBoundReport {
    if slices.iter().all(|u| u.iter().all(|v| *v == 0.0)) {
        return LowerBoundReport { skipped: true, c_fit: 0.0, samples: 0 };
    }
    let quarter2 = (0.25 * grid.length()).powi(2);
    let mut c_fit = f64::INFINITY;
    let mut samples = 0;
    for (t, u) in times.iter().zip(slices) {
        if *t < t0 || *t <= 0.0 {
            continue;
        }
        for (k, v) in u.iter().enumerate() {
            let r2 = grid.radius2(k);
            if r2 > 8.0 * t || r2 > quarter2 {
                continue;
            }
            let b = t.powf(params.sigma - 1.0) * heat_kernel_r2(r2, *t, params.dim);
            c_fit = c_fit.min(v / b);
            samples += 1;
        }
    }
    if samples == 0 {
        return LowerBoundReport { skipped: true, c_fit: 0.0, samples: 0 };
    }
    LowerBoundReport { skipped: false, c_fit, samples }
}

/// Growth of the reaction integral `∫_{t0}^t ∫ (s^{σ-1} K_s)^p dx ds` per
/// decade of `t`, at `p = p*` and at a supercritical comparison exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogGrowthReport {
    pub p: f64,
    /// Closed-form increment per decade at `p*`: `ln 10 · p^{-N/2} (4π)^{N(1-p)/2}`.
    pub increment_closed: f64,
    pub increments: Vec<f64>,
    pub max_rel_dev: f64,
    /// Increments per decade at `1.2 p*`; they shrink geometrically.
    pub supercritical_increments: Vec<f64>,
}

fn reaction_integral(sigma: f64, dim: usize, p: f64, a: f64, b: f64) -> f64 {
    let n = dim as f64;
    let omega = 2.0 * PI.powf(0.5 * n) / gamma(0.5 * n);
    let inner = |s: f64| {
        let r = 14.0 * s.sqrt();
        let radial = quad::composite(
            |rr| (s.powf(sigma - 1.0) * heat_kernel_r2(rr * rr, s, dim)).powf(p) * rr.powf(n - 1.0),
            0.0,
            r,
            8,
            16,
        );
        if dim == 1 {
            2.0 * radial
        } else {
            omega * radial
        }
    };
    quad::composite(|v| inner(v.exp()) * v.exp(), a.ln(), b.ln(), 16, 16)
}

pub fn critical_log_growth(sigma: f64, dim: usize, t0: f64, decades: usize) -> LogGrowthReport {
    let p = p_star(sigma, dim);
    let n = dim as f64;
    let closed = 10f64.ln() * p.powf(-0.5 * n) * (4.0 * PI).powf(0.5 * n * (1.0 - p));
    let mut increments = Vec::new();
    let mut supercritical = Vec::new();
    let mut a = t0;
    for _ in 0..decades {
        increments.push(reaction_integral(sigma, dim, p, a, 10.0 * a));
        supercritical.push(reaction_integral(sigma, dim, 1.2 * p, a, 10.0 * a));
        a *= 10.0;
    }
    let max_rel_dev = increments.iter().map(|v| (v / closed - 1.0).abs()).fold(0.0, wmax);
    LogGrowthReport { p, increment_closed: closed, increments, max_rel_dev, supercritical_increments: supercritical }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Mild,
    Extension,
}

/// Sup-norm history of one run, whichever solver produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSeries {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub status: Status,
}

pub fn simulate(spec: &ProblemSpec, solver: SolverKind, ext: &ExtSettings) -> Result<RunSeries> {
    match solver {
        SolverKind::Mild => {
            let mut s = spec.clone();
            s.store_slices = false;
            let t = mild_march(&s)?;
            Ok(RunSeries { times: t.times, sup_norms: t.sup_norms, status: t.status })
        }
        SolverKind::Extension => {
            let t = extension_march(spec, ext)?;
            Ok(RunSeries { times: t.times, sup_norms: t.sup_norms, status: t.status })
        }
    }
}

fn interpolate(times: &[f64], slices: &[Vec<f64>], t: f64) -> Vec<f64> {
    let i = times.partition_point(|&s| s < t).clamp(1, times.len() - 1);
    let (a, b) = (times[i - 1], times[i]);
    let w = ((t - a) / (b - a)).clamp(0.0, 1.0);
    slices[i - 1].iter().zip(&slices[i]).map(|(x, y)| x + w * (y - x)).collect()
}

/// Largest sup-norm difference between the mild and extension traces at
/// `samples` equispaced times in `(0, t_end]`, relative to the largest
/// mild sup-norm.
pub fn trace_agreement(spec: &ProblemSpec, ext: &ExtSettings, t_end: f64, samples: usize) -> Result<f64> {
    let mut s = spec.clone();
    s.store_slices = true;
    s.t_max = t_end;
    let m = mild_march(&s)?;
    let e = extension_march(&s, ext)?;
    if m.status != Status::CompletedHorizon || e.status != Status::CompletedHorizon {
        return Err(Error::SolverFailure(format!("runs ended early: mild {:?}, extension {:?}", m.status, e.status)));
    }
    let scale = m.sup_norms.iter().copied().fold(0.0, wmax);
    let mut worst: f64 = 0.0;
    for k in 1..=samples {
        let t = t_end * k as f64 / samples as f64;
        let a = interpolate(&m.times, &m.slices, t);
        let b = interpolate(&e.times, &e.traces, t);
        worst = wmax(worst, a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, wmax));
    }
    Ok(worst / scale)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPlan {
    pub sigmas: Vec<f64>,
    pub ps: Vec<f64>,
    pub data_scales: Vec<f64>,
    /// Template; `σ`, `p` and the memory amplitude are set per run.
    pub base: ProblemSpec,
    pub solver: SolverKind,
    pub ext: ExtSettings,
    /// Cells with `|p - p*| <= near_critical * p*` are not labelled.
    pub near_critical: f64,
    pub fit: FitOptions,
}

/// One run of a sweep: a row of `phase.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub sigma: f64,
    pub dim: usize,
    pub p: f64,
    pub data_scale: f64,
    pub status: Status,
    pub t_est: Option<f64>,
    pub rate_exp: Option<f64>,
    pub rate_ci: Option<f64>,
    pub final_time: f64,
    pub initial_sup: f64,
    pub final_sup: f64,
    /// Completed with the sup-norm falling over the second half.
    pub decaying: bool,
}

impl RunRecord {
    pub fn escaped(&self) -> bool {
        self.status == Status::BlowupDetected
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellLabel {
    BlowupAll,
    Conditional,
    GlobalObserved,
    /// Within the near-critical band; blow-up may be too slow to observe.
    SlowIndeterminate,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRecord {
    pub sigma: f64,
    pub dim: usize,
    pub p: f64,
    pub p_star: f64,
    pub regime: RegimeKind,
    pub label: CellLabel,
    /// The label agrees with the predicted regime (unlabelled cells count
    /// as agreeing).
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub runs: Vec<RunRecord>,
    pub cells: Vec<CellRecord>,
}

/// Run one `(σ, p, scale)` member of a sweep.
pub fn run_cell(plan: &SweepPlan, sigma: f64, p: f64, scale: f64) -> Result<RunRecord> {
    let dim = plan.base.params.dim;
    let mut spec = plan.base.clone();
    spec.params = KernelParams::new(sigma, dim)?;
    spec.p = p;
    spec.memory = plan.base.memory.scaled(scale);
    let run = simulate(&spec, plan.solver, &plan.ext)?;
    let detected = run.status == Status::BlowupDetected;
    let fit = if detected { fit_rate(&run.times, &run.sup_norms, true, &plan.fit).ok() } else { None };
    let n = run.times.len();
    let final_time = run.times[n - 1];
    let final_sup = run.sup_norms[n - 1];
    let half = run.times.partition_point(|&t| t < 0.5 * final_time).min(n - 1);
    let decaying = run.status == Status::CompletedHorizon && final_sup < run.sup_norms[half] && final_sup < run.sup_norms[0];
    Ok(RunRecord {
        sigma,
        dim,
        p,
        data_scale: scale,
        status: run.status,
        t_est: fit.map(|f| f.t_est),
        rate_exp: fit.map(|f| f.rate_exp),
        rate_ci: fit.map(|f| f.rate_ci),
        final_time,
        initial_sup: run.sup_norms[0],
        final_sup,
        decaying,
    })
}

pub fn label_cell(runs: &[&RunRecord], sigma: f64, dim: usize, p: f64, near_critical: f64) -> Result<CellRecord> {
    let regime = fujita_classify(p, sigma, dim)?;
    let small = runs.iter().min_by(|a, b| a.data_scale.total_cmp(&b.data_scale));
    let large = runs.iter().max_by(|a, b| a.data_scale.total_cmp(&b.data_scale));
    let (Some(small), Some(large)) = (small, large) else {
        return Err(Error::InsufficientData("cell has no runs".into()));
    };
    let completed = |r: &RunRecord| r.status == Status::CompletedHorizon;
    let label = if p > 1.0 && (p - regime.p_star).abs() <= near_critical * regime.p_star {
        CellLabel::SlowIndeterminate
    } else if small.escaped() {
        CellLabel::BlowupAll
    } else if completed(small) && small.decaying && large.escaped() {
        CellLabel::Conditional
    } else if completed(small) && completed(large) {
        CellLabel::GlobalObserved
    } else {
        CellLabel::Indeterminate
    };
    let consistent = matches!(
        (regime.kind, label),
        (_, CellLabel::SlowIndeterminate | CellLabel::Indeterminate)
            | (RegimeKind::GlobalAll, CellLabel::GlobalObserved)
            | (RegimeKind::BlowupAll, CellLabel::BlowupAll)
            | (RegimeKind::Conditional, CellLabel::Conditional)
    );
    Ok(CellRecord { sigma, dim, p, p_star: regime.p_star, regime: regime.kind, label, consistent })
}

/// Run every `(σ, p, scale)` combination in parallel and label the cells.
pub fn sweep(plan: &SweepPlan) -> Result<SweepReport> {
    if plan.data_scales.is_empty() || plan.sigmas.is_empty() || plan.ps.is_empty() {
        return Err(Error::param("sweep", "sigma, p and data-scale lists must be nonempty"));
    }
    let mut jobs = Vec::new();
    for &s in &plan.sigmas {
        for &p in &plan.ps {
            for &a in &plan.data_scales {
                jobs.push((s, p, a));
            }
        }
    }
    let runs: Vec<RunRecord> =
        jobs.par_iter().map(|&(s, p, a)| run_cell(plan, s, p, a)).collect::<Result<Vec<_>>>()?;
    let dim = plan.base.params.dim;
    let mut cells = Vec::new();
    for &s in &plan.sigmas {
        for &p in &plan.ps {
            let members: Vec<&RunRecord> = runs.iter().filter(|r| r.sigma == s && r.p == p).collect();
            cells.push(label_cell(&members, s, dim, p, plan.near_critical)?);
        }
    }
    Ok(SweepReport { runs, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub order: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub entries: Vec<ValidationEntry>,
    pub all_pass: bool,
}

impl ValidationReport {
    pub fn entry(&self, name: &str) -> Option<&ValidationEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Acceptance tolerances of the battery. Errors are relative unless the
/// check is an absolute identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryTolerances {
    pub gaussian_normalization: f64,
    pub semigroup: f64,
    pub poisson_normalization: f64,
    pub c_flap: f64,
    pub power_rule: f64,
    /// Smallest observed order of the power-rule refinement.
    pub power_rule_order: f64,
    pub psi_identity: f64,
    pub fundamental_solution: f64,
    pub explicit_ode: f64,
    pub conormal: f64,
    /// Below this the fixed x-grid dominates the conormal error and
    /// refining `y` no longer has to reduce it.
    pub conormal_floor: f64,
    pub log_growth: f64,
}

impl Default for BatteryTolerances {
    fn default() -> Self {
        BatteryTolerances {
            gaussian_normalization: 1e-10,
            semigroup: 1e-12,
            poisson_normalization: 1e-8,
            c_flap: 1e-9,
            power_rule: 1e-3,
            power_rule_order: 0.9,
            psi_identity: 1e-2,
            fundamental_solution: 1e-2,
            explicit_ode: 1e-3,
            conormal: 2e-2,
            conormal_floor: 1e-4,
            log_growth: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryConfig {
    pub sigma: f64,
    pub dim: usize,
    /// Multiplies `A_{N,σ}` before the checks; anything but 1 must fail.
    pub a_green_scale: f64,
    pub seed: u64,
    pub tolerances: BatteryTolerances,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig { sigma: 0.5, dim: 1, a_green_scale: 1.0, seed: 7, tolerances: BatteryTolerances::default() }
    }
}

/// `max` that propagates NaN.
fn wmax(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn entry(name: &str, error: f64, tolerance: f64, order: Option<f64>, pass: bool) -> ValidationEntry {
    ValidationEntry { name: name.to_string(), error, tolerance, order, pass: pass && error.is_finite() }
}

fn within(name: &str, error: f64, tolerance: f64) -> ValidationEntry {
    entry(name, error, tolerance, None, error < tolerance)
}

fn gaussian_normalization(params: &KernelParams) -> f64 {
    let mut worst: f64 = 0.0;
    for &t in &[0.01f64, 0.3, 2.0] {
        let r = 12.0 * t.sqrt();
        let mass = if params.dim == 1 {
            quad::composite(|x| heat_kernel(&[x], t, params).unwrap(), -r, r, 8, 8)
        } else {
            // radial form for N >= 2
            let n = params.dim as f64;
            let omega = 2.0 * PI.powf(0.5 * n) / gamma(0.5 * n);
            omega * quad::composite(|q| heat_kernel_r2(q * q, t, params.dim) * q.powf(n - 1.0), 0.0, r, 8, 16)
        };
        worst = wmax(worst, (mass - 1.0).abs());
    }
    worst
}

fn semigroup_error() -> f64 {
    let mut worst: f64 = 0.0;
    for &(s, t) in &[(0.25, 1.0), (0.5, 1.0), (1.0, 2.0)] {
        for i in 0..9 {
            let x = -4.0 + i as f64;
            let conv = quad::composite(|z| heat_kernel_r2(z * z, s, 1) * heat_kernel_r2((x - z) * (x - z), t - s, 1), -15.0, 15.0, 128, 8);
            worst = wmax(worst, (conv - heat_kernel_r2(x * x, t, 1)).abs());
        }
    }
    worst
}

fn poisson_normalization(params: &KernelParams) -> f64 {
    let mut worst: f64 = 0.0;
    for &y in &[0.1f64, 1.0, 10.0] {
        let total = quad::composite(
            |v| {
                let t = v.exp();
                poisson_time_density(y, t, params) * t
            },
            (y * y).ln() - 12.0,
            (y * y).ln() + 60.0 / params.sigma,
            500,
            16,
        );
        worst = wmax(worst, (total - 1.0).abs());
    }
    worst
}

fn c_flap_error(params: &KernelParams) -> f64 {
    let dim = params.dim;
    let mut worst: f64 = 0.0;
    for &r in &[0.5f64, 1.0, 2.5] {
        let mut x = vec![0.0; dim];
        x[0] = r;
        let v = quad::composite(|v| master_kernel(&x, v.exp(), params).unwrap() * v.exp(), -12.0, 60.0 / params.sigma, 400, 16);
        let want = params.c_flap * r.powf(-(dim as f64) - 2.0 * params.sigma);
        worst = wmax(worst, (v / want - 1.0).abs());
    }
    worst
}

/// Relative errors of the sampled power rule at `m` and `10 m` panels.
fn power_rule_study(sigma: f64, m: usize) -> (f64, f64) {
    let err = |n: usize| {
        let mut worst: f64 = 0.0;
        for nu in [sigma, 1.0] {
            let h = TimeHistory::from_fn(uniform(0.0, 1.0, n), |s| s.max(0.0).powf(nu), Tail::Zero).unwrap();
            let got = marchaud(&h, 1.0, sigma).unwrap();
            let want = marchaud_power_rule(nu, sigma, 1.0).unwrap();
            worst = wmax(worst, (got - want).abs() / want);
        }
        worst
    };
    (err(m), err(10 * m))
}

/// `ψ = s^η K_s` on `[0, 1]` with `steps` uniform steps.
fn psi_identity_error(params: &KernelParams, eta: f64, n_x: usize, steps: usize) -> Result<f64> {
    let grid = PeriodicGrid::new(params.dim, n_x, 40.0)?;
    let mut field = SpaceTimeField::new(grid.clone(), FieldHistory::Memory(MemoryData::Zero));
    for s in uniform(0.0, 1.0, steps) {
        let amp = if s == 0.0 {
            if eta == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            s.powf(eta)
        };
        let spec = grid.heat_spectrum(s).into_iter().map(|c| c * amp).collect();
        field.push_spectrum(s, spec)?;
    }
    let got = master_apply_slice(&field, params, steps, 1e-10)?;
    let c = gamma_ratio(eta + 1.0, eta + 1.0 - params.sigma);
    let want = grid.heat_profile(1.0);
    let scale = c * want[grid.origin_index()];
    Ok(got.iter().zip(&want).map(|(g, w)| (g - c * w).abs()).fold(0.0, wmax) / scale)
}

/// `𝓜G = 0` away from the pole at 20 seeded points with `|x|^2 + t >= 1`,
/// and `R_- f + G ⋆ 𝓜ψ = ψ` for the self-similar family.
fn fundamental_solution_error(params: &KernelParams, seed: u64) -> Result<f64> {
    let sigma = params.sigma;
    let dim = params.dim;
    let n_x = if dim == 1 { 256 } else { 64 };
    let grid = PeriodicGrid::new(dim, n_x, 40.0)?;
    let t1 = 0.05;
    let g_time = params.a_green * (4.0 * PI).powf(0.5 * dim as f64);
    let g = MemoryData::HeatBump { amp: g_time, shift: t1, exponent: sigma - 1.0 };
    let n_t = 600;
    let s_end = 1.5;
    let mut field = SpaceTimeField::new(grid.clone(), FieldHistory::Memory(g));
    for i in 0..=n_t {
        let s = s_end * (i as f64 / n_t as f64).powi(2);
        field.push(s, g.slice(&grid, s))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(usize, usize)> = Vec::new();
    let first = field.times().partition_point(|&s| s + t1 < 0.5);
    while picks.len() < 20 {
        let n = rng.gen_range(first..=n_t);
        let t = field.times()[n] + t1;
        let k = rng.gen_range(0..grid.len());
        let x = grid.point(k);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 + t >= 1.0 && x.iter().all(|c| c.abs() <= 6.0) {
            picks.push((n, k));
        }
    }
    picks.sort_unstable();
    let mut worst: f64 = 0.0;
    let mut cached: Option<(usize, Vec<f64>)> = None;
    for &(n, k) in &picks {
        if cached.as_ref().map(|c| c.0) != Some(n) {
            cached = Some((n, master_apply_slice(&field, params, n, 1e-12)?));
        }
        let mg = &cached.as_ref().unwrap().1;
        let t = field.times()[n] + t1;
        let scale = g_time * t.powf(sigma - 1.0) * heat_kernel_r2(0.0, t, dim);
        worst = wmax(worst, mg[k].abs() / scale);
    }
    // normalization: the Duhamel integral with this A reproduces ψ
    for eta in [0.0, sigma] {
        let f = MemoryData::HeatBump { amp: 1.0, shift: t1, exponent: eta };
        let c = gamma_ratio(eta + 1.0, eta + 1.0 - sigma);
        for t in [0.5, 1.0, 2.0] {
            let forcing = f.forcing_amplitude(t, params, 1e-12)?.value;
            // u = (t-s)^σ/σ removes the endpoint singularity
            let duhamel = g_time
                * c
                * quad::composite(
                    |u| ((t - (sigma * u).powf(1.0 / sigma)).max(0.0) + t1).powf(eta - sigma),
                    0.0,
                    t.powf(sigma) / sigma,
                    32,
                    16,
                );
            let want = (t + t1).powf(eta);
            worst = wmax(worst, ((forcing + duhamel) - want).abs() / want);
        }
    }
    Ok(worst)
}

fn conormal_study(params: &KernelParams) -> Result<Vec<f64>> {
    let mut errs = Vec::new();
    for n_y in [32, 64, 128] {
        let x = PeriodicGrid::new(params.dim, if params.dim == 1 { 128 } else { 32 }, 20.0)?;
        let ext = ExtGrid::new(x, params, &ExtGridSpec { n_y, y_max: 10.0, grading: None })?;
        let xg = ext.x_grid();
        let u: Vec<f64> = (0..xg.len()).map(|i| (-xg.radius2(i)).exp()).collect();
        let slice = static_extension(&u, &ext, params);
        let tr = conormal_trace(&slice, &ext, params)?;
        let fl = frac_laplacian(xg, &u, params.sigma);
        errs.push(tr.iter().zip(&fl).map(|(a, b)| (a - b).abs()).fold(0.0, wmax) / max_abs(&fl));
    }
    Ok(errs)
}

/// Observed order from errors at resolutions differing by `ratio`.
fn order(coarse: f64, fine: f64, ratio: f64) -> f64 {
    (coarse / fine).ln() / ratio.ln()
}

/// Every closed-form identity, with measured errors and orders.
pub fn validation_battery(cfg: &BatteryConfig) -> Result<ValidationReport> {
    let mut params = KernelParams::new(cfg.sigma, cfg.dim)?;
    params.a_green *= cfg.a_green_scale;
    let sigma = params.sigma;
    let tol = &cfg.tolerances;
    let mut entries = Vec::new();

    entries.push(within("kernels/gaussian-normalization", gaussian_normalization(&params), tol.gaussian_normalization));
    entries.push(within("kernels/semigroup", semigroup_error(), tol.semigroup));
    let half = KernelParams::new(0.5, cfg.dim)?;
    let kappa_err = (half.kappa - 1.0).abs() + half.gamma_w.abs();
    entries.push(entry("kernels/kappa-half", kappa_err, 0.0, None, kappa_err == 0.0));
    entries.push(within("kernels/poisson-normalization", poisson_normalization(&params), tol.poisson_normalization));
    entries.push(within("kernels/c-flap", c_flap_error(&params), tol.c_flap));

    let (coarse, fine) = power_rule_study(sigma, 1000);
    let ord = order(coarse, fine, 10.0);
    entries.push(entry("marchaud/power-rule", fine, tol.power_rule, Some(ord), fine < tol.power_rule && ord >= tol.power_rule_order));

    let etas = [0.0, sigma, 0.4 * 0.5 * cfg.dim as f64];
    let (n_fine, n_coarse) = if cfg.dim == 1 { (256, 128) } else { (64, 32) };
    let mut worst_fine: f64 = 0.0;
    let mut worst_coarse: f64 = 0.0;
    let mut improving = true;
    for &eta in &etas {
        let c = psi_identity_error(&params, eta, n_coarse, 500)?;
        let f = psi_identity_error(&params, eta, n_fine, 1000)?;
        improving &= f <= c;
        worst_fine = wmax(worst_fine, f);
        worst_coarse = wmax(worst_coarse, c);
    }
    entries.push(entry(
        "master/psi-identity",
        worst_fine,
        tol.psi_identity,
        Some(order(worst_coarse, worst_fine, 2.0)),
        worst_fine < tol.psi_identity && improving,
    ));

    entries.push(within("master/fundamental-solution", fundamental_solution_error(&params, cfg.seed)?, tol.fundamental_solution));

    let mut worst: f64 = 0.0;
    for (s, p) in [(0.25, 1.5), (0.5, 2.0), (0.75, 3.0)] {
        let z = ExplicitBlowup::new(p, s, 1.0)?;
        for t in [-1.0, 0.0, 0.3, 0.6, 0.9] {
            worst = wmax(worst, blowup_ode_residual(&z, t, 10_000)?);
        }
    }
    entries.push(within("ode/explicit-blowup", worst, tol.explicit_ode));
    let mut worst: f64 = 0.0;
    for (s, p) in [(0.5, 0.5), (0.25, 0.8)] {
        let u = ExplicitGlobal::new(p, s, 1.0)?;
        for t in [0.0, 0.5, 1.0, 2.0, 4.0] {
            worst = wmax(worst, global_ode_residual(&u, t, 10_000)?);
        }
    }
    entries.push(within("ode/explicit-global", worst, tol.explicit_ode));

    let errs = conormal_study(&params)?;
    let decreasing = errs.windows(2).all(|w| w[1] < w[0] || w[0] < tol.conormal_floor);
    let last = *errs.last().unwrap();
    entries.push(entry(
        "extension/conormal",
        last,
        tol.conormal,
        Some(order(errs[errs.len() - 2], last, 2.0)),
        last < tol.conormal && decreasing,
    ));

    let lg = critical_log_growth(sigma, cfg.dim, 1.0, 3);
    let shrinking = lg.supercritical_increments.windows(2).all(|w| w[1] < 0.9 * w[0]);
    entries.push(entry("lab/critical-log-growth", lg.max_rel_dev, tol.log_growth, None, lg.max_rel_dev < tol.log_growth && shrinking));

    let all_pass = entries.iter().all(|e| e.pass);
    Ok(ValidationReport { entries, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fujita_exponents() {
        assert!((p_star(0.5, 1) - 1.5).abs() < 1e-15);
        assert!((p_star(0.75, 1) - 2.0).abs() < 1e-15);
        assert_eq!(fujita_classify(1.0, 0.3, 2).unwrap().kind, RegimeKind::GlobalAll);
        assert_eq!(fujita_classify(1.5, 0.5, 1).unwrap().kind, RegimeKind::BlowupAll);
        assert_eq!(fujita_classify(1.51, 0.5, 1).unwrap().kind, RegimeKind::Conditional);
    }

    #[test]
    fn explicit_constants() {
        let z = ExplicitBlowup::new(2.0, 0.5, 1.0).unwrap();
        assert!((z.c - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!((z.beta - 0.5).abs() < 1e-15);
        let u = ExplicitGlobal::new(0.5, 0.5, 1.0).unwrap();
        assert!((u.nu - 1.0).abs() < 1e-15);
        assert!((u.c - PI / 4.0).abs() < 1e-14, "{}", u.c);
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let times: Vec<f64> = (0..400).map(|i| 1.0 - 0.5 * 0.98f64.powi(i)).collect();
        let sup: Vec<f64> = times.iter().map(|t| (1.0 - t).powi(-2)).collect();
        let r = fit_rate(&times, &sup, true, &FitOptions::default()).unwrap();
        assert!((r.rate_exp - 2.0).abs() < 1e-6, "{r:?}");
        assert!((r.t_est - 1.0).abs() < 1e-6, "{r:?}");
        let short = fit_rate(&times[..5], &sup[..5], true, &FitOptions::default());
        assert!(matches!(short, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn critical_growth_is_logarithmic() {
        for (s, n) in [(0.5, 1), (0.3, 2)] {
            let r = critical_log_growth(s, n, 1.0, 3);
            assert!(r.max_rel_dev < 1e-8, "{r:?}");
        }
    }
}
