//! Marchaud derivative, the master operator on gridded space-time fields,
//! the fractional Laplacian, and the history term of the representation
//! formula.
//!
//! Time integrals against the singular kernels are done by product
//! integration: data are interpolated piecewise linearly and the kernel
//! moments on each panel are exact.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;
use crate::kernels::KernelParams;
use crate::memory::{Bounded, MemoryData};
use crate::quad::{self, Cluster};
use crate::special::{gamma_ratio, lower_power_exp, power_exp_moment, upper_power_exp};

/// Behaviour of a scalar history before its first sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tail {
    /// `v = 0` before the first sample.
    Zero,
    /// `v` keeps the first sample's value.
    Constant,
    /// `v(s) = amp (horizon - s)^{-exponent}`. The master operator of this
    /// tail decays like `|s|^{-(exponent + σ)}`, so the decay exponent
    /// exceeds `σ` exactly when `exponent > 0`.
    PowerDecay { amp: f64, horizon: f64, exponent: f64 },
}

/// Sampled scalar history `v(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeHistory {
    times: Vec<f64>,
    values: Vec<f64>,
    tail: Tail,
}

impl TimeHistory {
    pub fn new(times: Vec<f64>, values: Vec<f64>, tail: Tail) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::param("history", "times and values differ in length"));
        }
        if times.len() < 2 {
            return Err(Error::param("history", "needs at least 2 samples"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("history", "sample times must be strictly increasing"));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::param("history", "samples must be finite"));
        }
        if let Tail::PowerDecay { horizon, exponent, .. } = tail {
            if !(exponent > 0.0) {
                return Err(Error::InvalidHistory(format!(
                    "power tail exponent {exponent} gives an operator decay rate not above σ"
                )));
            }
            if !(horizon > times[0]) {
                return Err(Error::InvalidHistory("power tail horizon must follow the first sample".into()));
            }
        }
        Ok(TimeHistory { times, values, tail })
    }

    /// Sample `f` at the given times.
    pub fn from_fn<F: Fn(f64) -> f64>(times: Vec<f64>, f: F, tail: Tail) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values, tail)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn tail(&self) -> Tail {
        self.tail
    }

    /// Piecewise-linear value inside the sampled range.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let ts = &self.times;
        if t < ts[0] || t > *ts.last().unwrap() {
            return None;
        }
        let j = ts.partition_point(|&s| s <= t);
        if j == 0 {
            return Some(self.values[0]);
        }
        if j == ts.len() {
            return Some(*self.values.last().unwrap());
        }
        let (t0, t1) = (ts[j - 1], ts[j]);
        let w = (t - t0) / (t1 - t0);
        Some(self.values[j - 1] * (1.0 - w) + self.values[j] * w)
    }
}

/// Product-integration weights `(w_lo, w_hi)` with
/// `∫_lo^hi τ^{a-1} e^{-λτ} D(τ) dτ = w_lo D(lo) + w_hi D(hi)` for linear `D`.
///
/// With `lo = 0` and `a <= 0` the lower weight diverges; it is returned as
/// zero and the caller must supply data with `D(0) = 0`.
pub fn hat_weights(a: f64, lam: f64, lo: f64, hi: f64) -> (f64, f64) {
    let width = hi - lo;
    if width <= 0.0 {
        return (0.0, 0.0);
    }
    if lo > 0.0 && width <= 0.25 * lo && lam * width <= 1.0 {
        // smooth kernel over the panel; the moment form would cancel
        let k = |r: f64| r.powf(a - 1.0) * (-lam * r).exp();
        let w_lo = quad::gauss_legendre(|r| k(r) * (hi - r), lo, hi, 16) / width;
        let w_hi = quad::gauss_legendre(|r| k(r) * (r - lo), lo, hi, 16) / width;
        return (w_lo, w_hi);
    }
    let m1 = power_exp_moment(a + 1.0, lam, lo, hi);
    if lo == 0.0 && a <= 0.0 {
        return (0.0, m1 / width);
    }
    let m0 = power_exp_moment(a, lam, lo, hi);
    ((hi * m0 - m1) / width, (m1 - lo * m0) / width)
}

/// Marchaud derivative `(1/|Γ(-σ)|) ∫_{-∞}^t (h(t) - h(s)) (t-s)^{-1-σ} ds`
/// of a sampled history at a time `t` inside the sampled range.
pub fn marchaud(h: &TimeHistory, t: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::param("sigma", "must lie in (0, 1)"));
    }
    let ht = h
        .interpolate(t)
        .ok_or_else(|| Error::OutOfRange(format!("t = {t} outside the sampled history")))?;
    let ts = h.times();
    let vs = h.values();
    let k = ts.partition_point(|&s| s < t);
    // nodes s_0 .. s_{k-1} < t, then t itself
    let mut acc = 0.0;
    let mut newer = (t, ht);
    for j in (0..k).rev() {
        let lo = t - newer.0;
        let hi = t - ts[j];
        let (w_lo, w_hi) = hat_weights(-sigma, 0.0, lo, hi);
        acc += w_lo * (ht - newer.1) + w_hi * (ht - vs[j]);
        newer = (ts[j], vs[j]);
    }
    acc += tail_contribution(h, t, ht, sigma);
    Ok(acc / crate::special::gamma(-sigma).abs())
}

fn tail_contribution(h: &TimeHistory, t: f64, ht: f64, sigma: f64) -> f64 {
    let s0 = h.times()[0];
    let w0 = t - s0;
    if w0 <= 0.0 {
        // t is the first sample: only a flat tail is integrable there
        return match h.tail() {
            Tail::Constant => 0.0,
            _ => f64::INFINITY,
        };
    }
    let flat = ht * w0.powf(-sigma) / sigma;
    match h.tail() {
        Tail::Zero => flat,
        Tail::Constant => flat - h.values()[0] * w0.powf(-sigma) / sigma,
        Tail::PowerDecay { amp, horizon, exponent } => {
            // s = t - w0/v maps the tail to v in (0, 1]
            let d = horizon - t;
            let f = |v: f64| {
                if v <= 0.0 {
                    return 0.0;
                }
                v.powf(sigma - 1.0 + exponent) * (w0 + d * v).powf(-exponent)
            };
            flat - amp * w0.powf(-sigma) * quad::graded(f, 0.0, 1.0, Cluster::Left, 50)
        }
    }
}

/// Exact Marchaud derivative of `s_+^ν` at `t > 0`:
/// `Γ(ν+1)/Γ(ν+1-σ) t^{ν-σ}`.
pub fn marchaud_power_rule(nu: f64, sigma: f64, t: f64) -> Result<f64> {
    if !(nu > sigma - 1.0) {
        return Err(Error::Domain(format!("power rule needs ν > σ - 1, got ν = {nu}")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("power rule needs t > 0, got {t}")));
    }
    Ok(gamma_ratio(nu + 1.0, nu + 1.0 - sigma) * t.powf(nu - sigma))
}

/// What a [`SpaceTimeField`] equals before its first stored time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldHistory {
    /// Prescribed memory data; the field must start at `t = 0`.
    Memory(MemoryData),
    /// The first stored slice extended constantly to `-∞`.
    Frozen,
}

/// Gridded `u(x, t)` on a periodic box with its full past.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    grid: PeriodicGrid,
    history: FieldHistory,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    spectra: Vec<Vec<Complex64>>,
}

impl SpaceTimeField {
    pub fn new(grid: PeriodicGrid, history: FieldHistory) -> Self {
        SpaceTimeField { grid, history, times: Vec::new(), values: Vec::new(), spectra: Vec::new() }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }
    pub fn history(&self) -> FieldHistory {
        self.history
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn slice(&self, n: usize) -> &[f64] {
        &self.values[n]
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::param("t", "must be finite"));
        }
        match self.times.last() {
            Some(&last) if !(t > last) => Err(Error::param("t", "field times must be strictly increasing")),
            None if matches!(self.history, FieldHistory::Memory(_)) && t != 0.0 => Err(Error::InvalidHistory(
                "a field with memory history must start at t = 0".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Append a slice given by grid values.
    pub fn push(&mut self, t: f64, values: Vec<f64>) -> Result<()> {
        self.check_time(t)?;
        if values.len() != self.grid.len() {
            return Err(Error::param("slice", "length differs from the grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("slice", "values must be finite"));
        }
        self.spectra.push(self.grid.fft(&values));
        self.values.push(values);
        self.times.push(t);
        Ok(())
    }

    /// Append a slice given by its (unnormalized) spectrum.
    pub fn push_spectrum(&mut self, t: f64, spectrum: Vec<Complex64>) -> Result<()> {
        self.check_time(t)?;
        if spectrum.len() != self.grid.len() {
            return Err(Error::param("slice", "spectrum length differs from the grid"));
        }
        let values = self.grid.ifft(&spectrum);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("slice", "values must be finite"));
        }
        self.values.push(values);
        self.spectra.push(spectrum);
        self.times.push(t);
        Ok(())
    }

    /// Largest fraction of mass carried near the box boundary by any slice.
    pub fn containment(&self) -> f64 {
        self.values.iter().map(|u| self.grid.boundary_mass_fraction(u)).fold(0.0, f64::max)
    }

    /// Index of the stored time equal to `t`.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| s == t)
    }
}

/// `∫_0^T (1 - e^{-λτ}) τ^{-1-σ} dτ`.
fn flat_defect(sigma: f64, lam: f64, big_t: f64) -> f64 {
    if lam == 0.0 {
        return 0.0;
    }
    (-lam * big_t).exp_m1() * big_t.powf(-sigma) / sigma + lam / sigma * lower_power_exp(1.0 - sigma, lam, big_t)
}

/// `∫_{τ0}^∞ e^{-λτ} τ^{-1-σ} dτ` for `τ0 > 0`.
fn upper_neg(sigma: f64, lam: f64, tau0: f64) -> f64 {
    if lam == 0.0 {
        return tau0.powf(-sigma) / sigma;
    }
    (-lam * tau0).exp() * tau0.powf(-sigma) / sigma - lam / sigma * upper_power_exp(1.0 - sigma, lam, tau0)
}

/// Master operator of the field on the whole grid at stored time index `n`.
///
/// Per Fourier mode the operator reads
/// `∫_0^∞ L(τ) [û(t) - e^{-λτ} û(t-τ)] dτ`; the part `û(t)(1 - e^{-λτ})` is
/// integrated exactly and the rest by product integration with the exact
/// kernel `τ^{-1-σ} e^{-λτ}`.
pub fn master_apply_slice(field: &SpaceTimeField, params: &KernelParams, n: usize, tail_tol: f64) -> Result<Vec<f64>> {
    if n >= field.len() {
        return Err(Error::OutOfRange(format!("time index {n} beyond the stored field")));
    }
    let sigma = params.sigma;
    let grid = &field.grid;
    let t = field.times[n];
    let t0 = field.times[0];
    let tau0 = t - t0;

    let (hist_spec, hist_coef) = match field.history {
        FieldHistory::Memory(f) => {
            if n == 0 {
                return Err(Error::OutOfRange("the master operator needs t past the first stored time".into()));
            }
            let h = f.history_integral(t, sigma, tail_tol)?;
            let s = f.spatial_profile(grid, t);
            (Some(grid.fft(&s)), h.value)
        }
        FieldHistory::Frozen => (None, 0.0),
    };

    let taus: Vec<f64> = field.times[..=n].iter().map(|&s| t - s).collect();
    let distinct = grid.distinct_lambdas();
    // weights[d][j] for panel j = [τ_{j+1}, τ_j] between nodes j+1 and j
    let weights: Vec<Vec<(f64, f64)>> = distinct
        .par_iter()
        .map(|&lam| (0..n).map(|j| hat_weights(-sigma, lam, taus[j + 1], taus[j])).collect())
        .collect();
    let per_lambda: Vec<(f64, f64)> = distinct
        .iter()
        .map(|&lam| {
            let defect = if tau0 > 0.0 { flat_defect(sigma, lam, tau0) } else { 0.0 };
            let upper = if tau0 > 0.0 { upper_neg(sigma, lam, tau0) } else { 0.0 };
            (defect, upper)
        })
        .collect();

    let un = &field.spectra[n];
    let didx = grid.distinct_index();
    let norm = params.time_norm();
    let out: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let d = didx[k];
            let lam = distinct[d];
            let u_now = un[k];
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &(w_lo, w_hi)) in weights[d].iter().enumerate() {
                acc += (u_now - field.spectra[j + 1][k]) * w_lo + (u_now - field.spectra[j][k]) * w_hi;
            }
            let (defect, upper) = per_lambda[d];
            acc += u_now * defect;
            match (&hist_spec, field.history) {
                (Some(s), _) => {
                    acc += u_now * tau0.powf(-sigma) / sigma - s[k] * hist_coef;
                }
                (None, _) if tau0 > 0.0 => {
                    acc += u_now * tau0.powf(-sigma) / sigma - field.spectra[0][k] * upper;
                }
                (None, _) => {
                    // single frozen slice: ∫ τ^{-1-σ}(1 - e^{-λτ}) = λ^σ |Γ(-σ)|
                    acc += u_now * lam.powf(sigma) / norm;
                }
            }
            acc * norm
        })
        .collect();
    Ok(grid.ifft(&out))
}

/// Master operator at one grid point `flat` and stored time index `n`.
pub fn master_apply(field: &SpaceTimeField, params: &KernelParams, flat: usize, n: usize, tail_tol: f64) -> Result<f64> {
    if flat >= field.grid.len() {
        return Err(Error::OutOfRange(format!("grid index {flat} out of range")));
    }
    Ok(master_apply_slice(field, params, n, tail_tol)?[flat])
}

/// `(-Δ)^σ u` by the spectral multiplier `|ξ|^{2σ}`.
pub fn frac_laplacian(grid: &PeriodicGrid, u: &[f64], sigma: f64) -> Vec<f64> {
    grid.apply_multiplier(u, |lam| lam.powf(sigma))
}

/// History term of the representation formula at `(x, t)`, `t > 0`.
pub fn memory_forcing(f: &MemoryData, x: &[f64], t: f64, params: &KernelParams, tail_tol: f64) -> Result<Bounded> {
    f.validate(params)?;
    let a = f.forcing_amplitude(t, params, tail_tol)?;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let s = f.spatial_at(r2, t, params.dim);
    Ok(Bounded { value: a.value * s, half_width: a.half_width * s })
}

/// History term on the grid (band-limited spatial factor) with the
/// amplitude's error bar.
pub fn memory_forcing_slice(
    f: &MemoryData,
    grid: &PeriodicGrid,
    t: f64,
    params: &KernelParams,
    tail_tol: f64,
) -> Result<(Vec<f64>, Bounded)> {
    let a = f.forcing_amplitude(t, params, tail_tol)?;
    let prof = f.spatial_profile(grid, t);
    Ok((prof.into_iter().map(|v| v * a.value).collect(), a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;
    use std::f64::consts::PI;

    fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
    }

    #[test]
    fn hat_weights_integrate_linear_data() {
        for &(a, lam, lo, hi) in &[(-0.5, 0.0, 0.3, 0.9), (-0.3, 7.0, 0.01, 0.2), (0.5, 3.0, 0.0, 0.4), (0.7, 50.0, 1.0, 1.1)] {
            let (w0, w1) = hat_weights(a, lam, lo, hi);
            let d = |r: f64| 2.0 - 3.0 * r;
            let want = quad::graded(|r| r.powf(a - 1.0) * (-lam * r).exp() * d(r), lo, hi, Cluster::Left, 40);
            let got = w0 * d(lo) + w1 * d(hi);
            assert!((got - want).abs() < 1e-11 * want.abs().max(1.0), "a={a} got={got} want={want}");
        }
    }

    #[test]
    fn marchaud_of_constant_vanishes() {
        let h = TimeHistory::from_fn(uniform(-1.0, 1.0, 50), |_| 3.0, Tail::Constant).unwrap();
        assert!(marchaud(&h, 0.3, 0.4).unwrap().abs() < 1e-12);
    }

    #[test]
    fn marchaud_sqrt_power() {
        let h = TimeHistory::from_fn(uniform(0.0, 1.0, 4000), |s| s.max(0.0).sqrt(), Tail::Zero).unwrap();
        let got = marchaud(&h, 1.0, 0.5).unwrap();
        assert!((got - PI.sqrt() / 2.0).abs() < 1e-4, "{got}");
    }

    #[test]
    fn marchaud_with_power_tail() {
        let f = |s: f64| (1.0 - s).powf(-0.5);
        let h = TimeHistory::from_fn(
            uniform(-2.0, 0.5, 5000),
            f,
            Tail::PowerDecay { amp: 1.0, horizon: 1.0, exponent: 0.5 },
        )
        .unwrap();
        let got = marchaud(&h, 0.5, 0.5).unwrap();
        let want = 2.0 / PI.sqrt();
        assert!((got - want).abs() < 1e-4 * want, "{got}");
        assert!(TimeHistory::new(vec![0.0, 1.0], vec![1.0, 1.0], Tail::PowerDecay { amp: 1.0, horizon: 2.0, exponent: 0.0 }).is_err());
    }

    #[test]
    fn power_rule_values() {
        assert!((marchaud_power_rule(1.0, 0.5, 1.0).unwrap() - 2.0 / PI.sqrt()).abs() < 1e-14);
        assert!((marchaud_power_rule(0.5, 0.5, 4.0).unwrap() - PI.sqrt() / 2.0).abs() < 1e-14);
        assert!((marchaud_power_rule(0.3, 0.3, 7.0).unwrap() - gamma(1.3)).abs() < 1e-14);
        assert!(marchaud_power_rule(-0.6, 0.5, 1.0).is_err());
    }

    #[test]
    fn frozen_single_slice_is_fractional_laplacian() {
        let grid = PeriodicGrid::new(1, 64, 20.0).unwrap();
        let params = KernelParams::new(0.4, 1).unwrap();
        let u = grid.heat_profile(0.5);
        let mut field = SpaceTimeField::new(grid.clone(), FieldHistory::Frozen);
        field.push(0.0, u.clone()).unwrap();
        let a = master_apply_slice(&field, &params, 0, 1e-8).unwrap();
        let b = frac_laplacian(&grid, &u, 0.4);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
        // constant slices over time change nothing
        field.push(0.3, u.clone()).unwrap();
        field.push(1.0, u.clone()).unwrap();
        let c = master_apply_slice(&field, &params, 2, 1e-8).unwrap();
        for (x, y) in c.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10, "{x} {y}");
        }
    }

    fn psi_field(grid: &PeriodicGrid, eta: f64, times: &[f64]) -> SpaceTimeField {
        let mut field = SpaceTimeField::new(grid.clone(), FieldHistory::Memory(MemoryData::Zero));
        for &s in times {
            let amp = if s == 0.0 { if eta == 0.0 { 1.0 } else { 0.0 } } else { s.powf(eta) };
            let spec = grid.heat_spectrum(s).into_iter().map(|c| c * amp).collect();
            field.push_spectrum(s, spec).unwrap();
        }
        field
    }

    #[test]
    fn master_operator_of_self_similar_profile() {
        let grid = PeriodicGrid::new(1, 128, 40.0).unwrap();
        let params = KernelParams::new(0.5, 1).unwrap();
        for &eta in &[0.0, 0.5, 0.2] {
            let times = uniform(0.0, 1.0, 500);
            let field = psi_field(&grid, eta, &times);
            let got = master_apply_slice(&field, &params, 500, 1e-10).unwrap();
            let c = gamma_ratio(eta + 1.0, eta + 1.0 - 0.5);
            let want = grid.heat_profile(1.0);
            let scale = c * want[grid.origin_index()];
            let err = got.iter().zip(&want).map(|(g, w)| (g - c * w).abs()).fold(0.0, f64::max) / scale;
            assert!(err < 5e-4, "eta={eta} err={err}");
        }
    }

    /// The memory family continued past t = 0 by its own formula.
    fn continued_field(grid: &PeriodicGrid, f: MemoryData, times: &[f64]) -> SpaceTimeField {
        let mut field = SpaceTimeField::new(grid.clone(), FieldHistory::Memory(f));
        for &s in times {
            field.push(s, f.slice(grid, s)).unwrap();
        }
        field
    }

    #[test]
    fn memory_history_enters_through_the_tail() {
        let grid = PeriodicGrid::new(1, 128, 40.0).unwrap();
        let params = KernelParams::new(0.3, 1).unwrap();
        let f = MemoryData::HeatBump { amp: 2.0, shift: 0.5, exponent: 0.7 };
        let times = uniform(0.0, 1.0, 400);
        let field = continued_field(&grid, f, &times);
        let got = master_apply_slice(&field, &params, 400, 1e-12).unwrap();
        let want: Vec<f64> = grid.heat_profile(1.5).iter().map(|v| v * f.marchaud_amplitude(1.0, 0.3)).collect();
        let scale = want[grid.origin_index()];
        let err = got.iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max) / scale;
        assert!(err < 1e-4, "err={err}");
    }

    #[test]
    fn fundamental_solution_is_annihilated() {
        // G shifted back by t1 so its singular point lies in the past
        let grid = PeriodicGrid::new(1, 256, 40.0).unwrap();
        let sigma = 0.5;
        let params = KernelParams::new(sigma, 1).unwrap();
        let t1 = 0.05;
        let f = MemoryData::HeatBump { amp: 1.0 / gamma(sigma), shift: t1, exponent: sigma - 1.0 };
        let times: Vec<f64> = (0..=600).map(|i| (i as f64 / 600.0).powi(2)).collect();
        let field = continued_field(&grid, f, &times);
        let got = master_apply_slice(&field, &params, 600, 1e-12).unwrap();
        let u = field.slice(600);
        let scale = u[grid.origin_index()];
        let worst = got.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
        assert!(worst < 1e-3, "worst={worst}");
    }

    #[test]
    fn memory_field_must_start_at_zero() {
        let grid = PeriodicGrid::new(1, 8, 4.0).unwrap();
        let mut f = SpaceTimeField::new(grid, FieldHistory::Memory(MemoryData::Zero));
        assert!(f.push(0.5, vec![0.0; 8]).is_err());
        assert!(f.push(0.0, vec![0.0; 8]).is_ok());
        assert!(f.push(0.0, vec![0.0; 8]).is_err());
    }
}
