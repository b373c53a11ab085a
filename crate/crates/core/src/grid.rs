//! Uniform periodic box `[-L/2, L/2)^N` with an FFT in every axis.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
}

/// Periodic grid with cached transforms.
#[derive(Clone)]
pub struct PeriodicGrid {
    spec: BoxSpec,
    total: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    lambdas: Vec<f64>,
    distinct: Vec<f64>,
    distinct_index: Vec<usize>,
}

impl std::fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicGrid").field("spec", &self.spec).finish()
    }
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::param("dim", "supported dimensions are 1, 2, 3"));
        }
        if n == 0 {
            return Err(Error::param("n_x", "must be at least 1"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::param("length", format!("must be positive, got {length}")));
        }
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let total = n.pow(dim as u32);
        let spec = BoxSpec { dim, n, length };
        let mut lambdas = vec![0.0; total];
        for (flat, lam) in lambdas.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut rest = flat;
            for _ in 0..dim {
                let k = signed_mode(rest % n, n) as f64;
                rest /= n;
                let xi = 2.0 * PI * k / length;
                acc += xi * xi;
            }
            *lam = acc;
        }
        let mut distinct: Vec<f64> = lambdas.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        let distinct_index = lambdas
            .iter()
            .map(|l| distinct.binary_search_by(|d| d.partial_cmp(l).unwrap()).unwrap())
            .collect();
        Ok(PeriodicGrid { spec, total, forward, inverse, lambdas, distinct, distinct_index })
    }

    pub fn from_spec(spec: BoxSpec) -> Result<Self> {
        Self::new(spec.dim, spec.n, spec.length)
    }

    pub fn spec(&self) -> BoxSpec {
        self.spec
    }
    pub fn dim(&self) -> usize {
        self.spec.dim
    }
    pub fn n(&self) -> usize {
        self.spec.n
    }
    pub fn length(&self) -> f64 {
        self.spec.length
    }
    pub fn len(&self) -> usize {
        self.total
    }
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
    pub fn spacing(&self) -> f64 {
        self.spec.length / self.spec.n as f64
    }
    /// Volume element `h^N`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.spec.dim as i32)
    }
    pub fn volume(&self) -> f64 {
        self.spec.length.powi(self.spec.dim as i32)
    }

    /// `|ξ|^2` of every Fourier mode in FFT order.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
    /// Sorted distinct values of `|ξ|^2`.
    pub fn distinct_lambdas(&self) -> &[f64] {
        &self.distinct
    }
    /// Position of each mode's `|ξ|^2` in [`Self::distinct_lambdas`].
    pub fn distinct_index(&self) -> &[usize] {
        &self.distinct_index
    }

    /// Coordinates of the flat index (axis 0 fastest).
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.spec.dim);
        let mut rest = flat;
        for _ in 0..self.spec.dim {
            out.push(self.coord(rest % self.spec.n));
            rest /= self.spec.n;
        }
        out
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.spec.length + i as f64 * self.spacing()
    }

    pub fn radius2(&self, flat: usize) -> f64 {
        self.point(flat).iter().map(|v| v * v).sum()
    }

    /// Flat index of the grid point closest to the origin.
    pub fn origin_index(&self) -> usize {
        let c = self.spec.n / 2;
        let mut flat = 0;
        let mut stride = 1;
        for _ in 0..self.spec.dim {
            flat += c * stride;
            stride *= self.spec.n;
        }
        flat
    }

    /// Unnormalized forward transform.
    pub fn fft(&self, data: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    /// Normalized inverse transform, real part.
    pub fn ifft(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut buf = spec.to_vec();
        self.transform(&mut buf, &self.inverse);
        let scale = 1.0 / self.total as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.spec.n;
        if n == 1 {
            return;
        }
        let mut stride = 1;
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for _ in 0..self.spec.dim {
            let block = stride * n;
            for start in 0..self.total {
                // first element of a line along this axis
                if (start / stride) % n != 0 {
                    continue;
                }
                let base = (start / block) * block + start % stride;
                if base != start {
                    continue;
                }
                for (j, v) in line.iter_mut().enumerate() {
                    *v = buf[start + j * stride];
                }
                plan.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    buf[start + j * stride] = *v;
                }
            }
            stride *= n;
        }
    }

    /// Apply a real multiplier `m(|ξ|^2)` to a field.
    pub fn apply_multiplier<F: Fn(f64) -> f64>(&self, data: &[f64], m: F) -> Vec<f64> {
        let mut s = self.fft(data);
        for (c, &lam) in s.iter_mut().zip(&self.lambdas) {
            *c *= m(lam);
        }
        self.ifft(&s)
    }

    /// Spectrum of the band-limited periodized heat kernel `K_t` centred at
    /// the origin (`t = 0` gives the discrete delta's band-limited version).
    pub fn heat_spectrum(&self, t: f64) -> Vec<Complex64> {
        let n = self.spec.n;
        let amp = self.total as f64 / self.volume();
        (0..self.total)
            .map(|flat| {
                let mut rest = flat;
                let mut parity = 0i64;
                for _ in 0..self.spec.dim {
                    parity += signed_mode(rest % n, n);
                    rest /= n;
                }
                // shift from the box corner at -L/2 to the origin
                let sign = if parity.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                Complex64::new(sign * amp * (-self.lambdas[flat] * t).exp(), 0.0)
            })
            .collect()
    }

    /// Grid samples of the band-limited periodized `K_t`.
    pub fn heat_profile(&self, t: f64) -> Vec<f64> {
        if self.total == 1 {
            return vec![1.0 / self.volume()];
        }
        self.ifft(&self.heat_spectrum(t))
    }

    /// Fraction of `∫|u|` carried by points with some coordinate beyond
    /// `L/4` from the centre.
    pub fn boundary_mass_fraction(&self, u: &[f64]) -> f64 {
        if self.spec.n == 1 {
            return 0.0;
        }
        let quarter = 0.25 * self.spec.length;
        let mut total = 0.0;
        let mut outer = 0.0;
        for (flat, v) in u.iter().enumerate() {
            let a = v.abs();
            total += a;
            if self.point(flat).iter().any(|c| c.abs() > quarter) {
                outer += a;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            outer / total
        }
    }
}

fn signed_mode(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

pub fn sup_norm(u: &[f64]) -> f64 {
    u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn max_abs(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |m, v| m.max(v.abs()))
}
