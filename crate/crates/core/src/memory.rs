//! Memory data: the prescribed history `f(x, s)` for `s <= 0`.
//!
//! Only analytic families are supported. For each of them the master
//! operator of the history is closed-form, so the history term of the
//! representation formula reduces to a one dimensional time integral.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;
use crate::kernels::{heat_kernel_r2, poisson_time_density, KernelParams};
use crate::quad::{self, Cluster};
use crate::special::{gamma, gamma_ratio};

/// History families. `HeatBump` spreads by the heat flow,
/// `f(x,s) = amp (s+shift)_+^η K_{s+shift}(x)`; the others are uniform in
/// space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MemoryData {
    Zero,
    /// `f ≡ level`. Admissible for the extension; the representation
    /// formula needs decaying history and rejects it.
    Constant { level: f64 },
    /// `amp (s + shift)_+^exponent`.
    PowerRamp { amp: f64, shift: f64, exponent: f64 },
    /// `amp (horizon - s)^{-exponent}`, the history of the explicit
    /// blow-up profile.
    PowerBlowup { amp: f64, horizon: f64, exponent: f64 },
    HeatBump { amp: f64, shift: f64, exponent: f64 },
}

/// A value with a rigorous error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    pub half_width: f64,
}

impl Bounded {
    pub fn exact(value: f64) -> Self {
        Bounded { value, half_width: 0.0 }
    }
    pub fn lower(&self) -> f64 {
        self.value - self.half_width
    }
    pub fn upper(&self) -> f64 {
        self.value + self.half_width
    }
}

impl MemoryData {
    /// A heat bump with `shift = 1`, `η = 0`: `amp K_{s+1}(x)`.
    pub fn bump(amp: f64) -> Self {
        MemoryData::HeatBump { amp, shift: 1.0, exponent: 0.0 }
    }

    pub fn validate(&self, params: &KernelParams) -> Result<()> {
        let sigma = params.sigma;
        match *self {
            MemoryData::Zero => Ok(()),
            MemoryData::Constant { level } => {
                if level.is_finite() && level >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::param("memory.level", "must be finite and nonnegative"))
                }
            }
            MemoryData::PowerRamp { amp, shift, exponent } => {
                check_amp(amp)?;
                if !(shift > 0.0) {
                    return Err(Error::param("memory.shift", "must be positive"));
                }
                if !(exponent >= 0.0) {
                    return Err(Error::param("memory.exponent", "ramp exponent must be >= 0"));
                }
                Ok(())
            }
            MemoryData::PowerBlowup { amp, horizon, exponent } => {
                check_amp(amp)?;
                if !(horizon > 0.0) {
                    return Err(Error::param("memory.horizon", "must be positive"));
                }
                if !(exponent > 0.0) {
                    return Err(Error::param("memory.exponent", "blow-up exponent must be positive"));
                }
                Ok(())
            }
            MemoryData::HeatBump { amp, shift, exponent } => {
                check_amp(amp)?;
                if !(shift > 0.0) {
                    return Err(Error::param("memory.shift", "must be positive"));
                }
                if !(exponent > sigma - 1.0) {
                    return Err(Error::param(
                        "memory.exponent",
                        format!("bump exponent must exceed σ-1 = {}", sigma - 1.0),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Same family with the amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            MemoryData::Zero => MemoryData::Zero,
            MemoryData::Constant { level } => MemoryData::Constant { level: level * factor },
            MemoryData::PowerRamp { amp, shift, exponent } => {
                MemoryData::PowerRamp { amp: amp * factor, shift, exponent }
            }
            MemoryData::PowerBlowup { amp, horizon, exponent } => {
                MemoryData::PowerBlowup { amp: amp * factor, horizon, exponent }
            }
            MemoryData::HeatBump { amp, shift, exponent } => {
                MemoryData::HeatBump { amp: amp * factor, shift, exponent }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            MemoryData::Zero => true,
            MemoryData::Constant { level } => level == 0.0,
            MemoryData::PowerRamp { amp, .. }
            | MemoryData::PowerBlowup { amp, .. }
            | MemoryData::HeatBump { amp, .. } => amp == 0.0,
        }
    }

    pub fn is_uniform(&self) -> bool {
        !matches!(self, MemoryData::HeatBump { .. })
    }

    /// Time factor `a(s)` with `f(x,s) = a(s) S_s(x)`.
    pub fn amplitude(&self, s: f64) -> f64 {
        match *self {
            MemoryData::Zero => 0.0,
            MemoryData::Constant { level } => level,
            MemoryData::PowerRamp { amp, shift, exponent } | MemoryData::HeatBump { amp, shift, exponent } => {
                let r = s + shift;
                if r > 0.0 {
                    amp * r.powf(exponent)
                } else {
                    0.0
                }
            }
            MemoryData::PowerBlowup { amp, horizon, exponent } => amp * (horizon - s).powf(-exponent),
        }
    }

    /// Time factor of the master operator applied to the history, closed
    /// form for every family.
    pub fn marchaud_amplitude(&self, s: f64, sigma: f64) -> f64 {
        match *self {
            MemoryData::Zero | MemoryData::Constant { .. } => 0.0,
            MemoryData::PowerRamp { amp, shift, exponent } | MemoryData::HeatBump { amp, shift, exponent } => {
                let r = s + shift;
                if r > 0.0 {
                    amp * gamma_ratio(exponent + 1.0, exponent + 1.0 - sigma) * r.powf(exponent - sigma)
                } else {
                    0.0
                }
            }
            MemoryData::PowerBlowup { amp, horizon, exponent } => {
                amp * gamma_ratio(exponent + sigma, exponent) * (horizon - s).powf(-exponent - sigma)
            }
        }
    }

    /// Decay constants `(c, γ_H)` with `|Mf(s)| <= c |s|^{-γ_H}` for
    /// `s <= -1`; `None` for histories whose operator vanishes far back.
    pub fn decay(&self, sigma: f64) -> Option<(f64, f64)> {
        match *self {
            MemoryData::PowerBlowup { amp, exponent, .. } => {
                Some((amp * gamma_ratio(exponent + sigma, exponent), exponent + sigma))
            }
            _ => None,
        }
    }

    /// Earliest time where the history is nonzero (`-∞` for power tails).
    fn support_start(&self) -> f64 {
        match *self {
            MemoryData::Zero => 0.0,
            MemoryData::PowerRamp { shift, .. } | MemoryData::HeatBump { shift, .. } => -shift,
            MemoryData::Constant { .. } | MemoryData::PowerBlowup { .. } => f64::NEG_INFINITY,
        }
    }

    fn spatial_shift(&self) -> Option<f64> {
        match *self {
            MemoryData::HeatBump { shift, .. } => Some(shift),
            _ => None,
        }
    }

    /// Spatial factor at time `t` evaluated at squared radius `r2`.
    pub fn spatial_at(&self, r2: f64, t: f64, dim: usize) -> f64 {
        match self.spatial_shift() {
            Some(shift) if t + shift > 0.0 => heat_kernel_r2(r2, t + shift, dim),
            Some(_) => 0.0,
            None => 1.0,
        }
    }

    /// Spatial factor on the grid (band-limited heat profile for bumps).
    pub fn spatial_profile(&self, grid: &PeriodicGrid, t: f64) -> Vec<f64> {
        match self.spatial_shift() {
            Some(shift) if t + shift > 0.0 => grid.heat_profile(t + shift),
            Some(_) => vec![0.0; grid.len()],
            None => vec![1.0; grid.len()],
        }
    }

    /// Spectrum of [`Self::spatial_profile`], built without a transform.
    pub fn spatial_spectrum(&self, grid: &PeriodicGrid, t: f64) -> Vec<Complex64> {
        match self.spatial_shift() {
            Some(shift) if t + shift > 0.0 => grid.heat_spectrum(t + shift),
            Some(_) => vec![Complex64::new(0.0, 0.0); grid.len()],
            None => {
                let mut s = vec![Complex64::new(0.0, 0.0); grid.len()];
                s[0] = Complex64::new(grid.len() as f64, 0.0);
                s
            }
        }
    }

    /// `f(x, s)` pointwise.
    pub fn value(&self, x: &[f64], s: f64) -> f64 {
        let a = self.amplitude(s);
        if a == 0.0 {
            return 0.0;
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        a * self.spatial_at(r2, s, x.len())
    }

    /// `f(·, s)` on the grid.
    pub fn slice(&self, grid: &PeriodicGrid, s: f64) -> Vec<f64> {
        let a = self.amplitude(s);
        if a == 0.0 {
            return vec![0.0; grid.len()];
        }
        self.spatial_profile(grid, s).into_iter().map(|v| a * v).collect()
    }

    /// `sup_x f(x, 0)`.
    pub fn sup_at_zero(&self, dim: usize) -> f64 {
        let a = self.amplitude(0.0);
        a * self.spatial_at(0.0, 0.0, dim)
    }

    /// Time factor of the history term of the representation formula,
    /// `(1/Γ(σ)) ∫_{-∞}^0 a_M(s) (t-s)^{σ-1} ds`, where `a_M` is
    /// [`Self::marchaud_amplitude`]. The Green function's spatial part is
    /// absorbed by the semigroup property into the spatial factor at `t`.
    pub fn forcing_amplitude(&self, t: f64, params: &KernelParams, tail_tol: f64) -> Result<Bounded> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("forcing needs t > 0, got {t}")));
        }
        let sigma = params.sigma;
        match *self {
            MemoryData::Zero => return Ok(Bounded::exact(0.0)),
            MemoryData::Constant { level: 0.0 } => return Ok(Bounded::exact(0.0)),
            MemoryData::Constant { .. } => {
                return Err(Error::InvalidHistory(
                    "constant history does not decay; the representation formula needs f -> 0 as s -> -∞".into(),
                ))
            }
            _ => {}
        }
        if let Some((_, gh)) = self.decay(sigma) {
            if gh <= sigma {
                return Err(Error::InvalidHistory(format!(
                    "decay exponent {gh} must exceed σ = {sigma}"
                )));
            }
        }
        let integral = match *self {
            MemoryData::PowerRamp { amp, shift, exponent } | MemoryData::HeatBump { amp, shift, exponent } => {
                let coef = amp * gamma_ratio(exponent + 1.0, exponent + 1.0 - sigma);
                Bounded::exact(ramp_history_integral(coef, exponent - sigma, shift, t, sigma - 1.0))
            }
            _ => {
                let b = |s: f64| self.marchaud_amplitude(s, sigma);
                history_time_integral(&b, self.decay(sigma), t, sigma - 1.0, tail_tol)
            }
        };
        let g = gamma(sigma);
        Ok(Bounded { value: integral.value / g, half_width: integral.half_width / g })
    }

    /// `∫_{-∞}^0 a(s) (t-s)^{-1-σ} ds`, the history part of the Marchaud
    /// integral seen from time `t > 0`.
    pub fn history_integral(&self, t: f64, sigma: f64, tail_tol: f64) -> Result<Bounded> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("history integral needs t > 0, got {t}")));
        }
        match *self {
            MemoryData::Zero => Ok(Bounded::exact(0.0)),
            MemoryData::Constant { level } => Ok(Bounded::exact(level * t.powf(-sigma) / sigma)),
            MemoryData::PowerBlowup { amp, exponent, .. } => {
                let a = |s: f64| self.amplitude(s);
                Ok(history_time_integral(&a, Some((amp, exponent)), t, -1.0 - sigma, tail_tol))
            }
            MemoryData::PowerRamp { amp, shift, exponent } | MemoryData::HeatBump { amp, shift, exponent } => {
                Ok(Bounded::exact(ramp_history_integral(amp, exponent, shift, t, -1.0 - sigma)))
            }
        }
    }

    /// Vertical profile `φ(y)` of the weighted Poisson extension at `t = 0`:
    /// `E(f)(x, y, 0) = φ(y) S_0(x)`.
    pub fn extension_profile(&self, y: f64, params: &KernelParams) -> f64 {
        if y <= 0.0 {
            return self.amplitude(0.0);
        }
        if self.is_zero() {
            return 0.0;
        }
        // r = y^2 / (4u) maps the time density to u^{σ-1} e^{-u} / Γ(σ)
        let y2 = y * y;
        let integrand = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let r = y2 / (4.0 * u);
            let jac = y2 / (4.0 * u * u);
            self.amplitude(-r) * poisson_time_density(y, r, params) * jac
        };
        let u0 = match self.support_start() {
            s if s.is_finite() && s < 0.0 => y2 / (4.0 * (-s)),
            _ => 0.0,
        };
        quad::graded(integrand, u0, u0 + 12.0, Cluster::Left, 50)
            + quad::composite(integrand, u0 + 12.0, u0 + 90.0, 24, 16)
    }
}

fn check_amp(amp: f64) -> Result<()> {
    if amp.is_finite() && amp >= 0.0 {
        Ok(())
    } else {
        Err(Error::param("memory.amp", "must be finite and nonnegative"))
    }
}

/// `∫_{-shift}^0 coef (s+shift)^power (t-s)^expo ds` for `t > 0`,
/// `power > -1`.
///
/// With `u = (s+shift)^{power+1}` the endpoint singularity becomes a
/// constant, and the offset from the support start is carried exactly
/// instead of being recovered from `s + shift`.
fn ramp_history_integral(coef: f64, power: f64, shift: f64, t: f64, expo: f64) -> f64 {
    if shift <= 0.0 || coef == 0.0 {
        return 0.0;
    }
    let alpha = (power + 1.0).min(1.0);
    let f = |u: f64| {
        let x = u.powf(1.0 / alpha);
        x.powf(power + 1.0 - alpha) * (t + (shift - x)).powf(expo)
    };
    coef / alpha * quad::graded(f, 0.0, shift.powf(alpha), Cluster::Both, 56)
}

/// `∫_{-∞}^0 b(s) (t-s)^{expo} ds` for `t > 0`, `expo < 0`.
///
/// The tail beyond `-S` is bounded with the decay constants
/// `|b(s)| <= c |s|^{-rate}` and `(t-s)^{expo} <= |s|^{expo}`, and `S` is
/// doubled until the bound is below `tail_tol` times the running value.
fn history_time_integral<B: Fn(f64) -> f64>(
    b: &B,
    decay: Option<(f64, f64)>,
    t: f64,
    expo: f64,
    tail_tol: f64,
) -> Bounded {
    let f = |s: f64| b(s) * (t - s).powf(expo);
    let (c, rate) = decay.expect("power tail requires decay constants");
    let mut acc = quad::graded(f, -1.0, 0.0, Cluster::Right, 56);
    let mut s_cut = 1.0;
    let tail_rate = rate - expo - 1.0;
    loop {
        acc += quad::gauss_legendre(f, -2.0 * s_cut, -s_cut, 16);
        s_cut *= 2.0;
        let bound = c * s_cut.powf(-tail_rate) / tail_rate;
        if bound <= tail_tol * acc.abs() || s_cut > 1e300 {
            // integrand has the sign of b; the tail lies in [0, bound]
            let sign = if acc < 0.0 { -1.0 } else { 1.0 };
            return Bounded { value: acc + sign * 0.5 * bound, half_width: 0.5 * bound };
        }
    }
}
