//! Space-time kernels of the master operator and the constants attached to
//! them.
//!
//! Every kernel is evaluated as `exp(log-prefactor - exponent)` so extreme
//! ratios `|x|^2 / t` underflow cleanly to zero instead of producing
//! `inf * 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{gamma, ln_gamma};

/// Fractional order, dimension and every derived constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma: f64,
    pub dim: usize,
    /// Extension weight exponent `1 - 2σ`.
    pub gamma_w: f64,
    /// Conormal constant `Γ(σ) / (2^γ Γ(1-σ))`.
    pub kappa: f64,
    /// Poisson kernel normalization.
    pub d_pois: f64,
    /// Fundamental solution prefactor `(4π)^{-N/2} / Γ(σ)`.
    pub a_green: f64,
    /// Fractional Laplacian constant `4^σ Γ(N/2+σ) / (π^{N/2} |Γ(-σ)|)`.
    pub c_flap: f64,
    /// Normalization of the Gaussian test function on the half space.
    pub rho_test: f64,
}

impl KernelParams {
    pub fn new(sigma: f64, dim: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 1.0) {
            return Err(Error::param("sigma", format!("must lie in (0,1), got {sigma}")));
        }
        if dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        let n = dim as f64;
        let gamma_w = 1.0 - 2.0 * sigma;
        let kappa = gamma(sigma) / (2f64.powf(gamma_w) * gamma(1.0 - sigma));
        let d_pois = 1.0 / ((4.0 * PI).powf(0.5 * n) * 4f64.powf(sigma) * gamma(sigma));
        let a_green = (4.0 * PI).powf(-0.5 * n) / gamma(sigma);
        let c_flap = 4f64.powf(sigma) * gamma(0.5 * n + sigma) / (PI.powf(0.5 * n) * gamma(-sigma).abs());
        let rho_test = 2.0 / (PI.powf(0.5 * n) * gamma(1.0 - sigma));
        Ok(KernelParams { sigma, dim, gamma_w, kappa, d_pois, a_green, c_flap, rho_test })
    }

    /// `1 / |Γ(-σ)|`, the prefactor of the time kernel.
    pub fn time_norm(&self) -> f64 {
        1.0 / gamma(-self.sigma).abs()
    }

    /// Exponent η of the rescaled test functions, `(N + 2 - 2σ) / 2`.
    pub fn test_exponent(&self) -> f64 {
        (self.dim as f64 + 2.0 - 2.0 * self.sigma) / 2.0
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn require_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Gauss-Weierstrass kernel from the squared radius.
#[inline]
pub fn heat_kernel_r2(r2: f64, t: f64, dim: usize) -> f64 {
    (-0.5 * dim as f64 * (4.0 * PI * t).ln() - r2 / (4.0 * t)).exp()
}

/// `K_t(x) = (4πt)^{-N/2} exp(-|x|^2 / 4t)`.
pub fn heat_kernel(x: &[f64], t: f64, params: &KernelParams) -> Result<f64> {
    require_positive("t", t)?;
    Ok(heat_kernel_r2(norm2(x), t, params.dim))
}

/// `L_σ(t) = t^{-1-σ} / |Γ(-σ)|`.
pub fn time_kernel(t: f64, params: &KernelParams) -> Result<f64> {
    require_positive("t", t)?;
    Ok((-(1.0 + params.sigma) * t.ln() - ln_gamma(-params.sigma)).exp())
}

/// `M(x,t) = K_t(x) L_σ(t)`.
pub fn master_kernel(x: &[f64], t: f64, params: &KernelParams) -> Result<f64> {
    require_positive("t", t)?;
    let n = params.dim as f64;
    let log = -0.5 * n * (4.0 * PI * t).ln() - (1.0 + params.sigma) * t.ln() - ln_gamma(-params.sigma)
        - norm2(x) / (4.0 * t);
    Ok(log.exp())
}

/// Fundamental solution `A t^{-N/2-1+σ} e^{-|x|^2/4t}` for `t > 0`, zero otherwise.
pub fn green_kernel(x: &[f64], t: f64, params: &KernelParams) -> f64 {
    green_kernel_r2(norm2(x), t, params)
}

#[inline]
pub fn green_kernel_r2(r2: f64, t: f64, params: &KernelParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let n = params.dim as f64;
    let log = params.a_green.ln() + (params.sigma - 1.0 - 0.5 * n) * t.ln() - r2 / (4.0 * t);
    log.exp()
}

/// Poisson kernel of the weighted extension problem.
pub fn poisson_kernel(x: &[f64], y: f64, t: f64, params: &KernelParams) -> Result<f64> {
    require_positive("y", y)?;
    require_positive("t", t)?;
    let n = params.dim as f64;
    let s = params.sigma;
    let log = params.d_pois.ln() + 2.0 * s * y.ln() - (0.5 * n + 1.0 + s) * t.ln()
        - (norm2(x) + y * y) / (4.0 * t);
    Ok(log.exp())
}

/// Spatial integral of the Poisson kernel, `∫ P_y(x,t) dx`: the density in
/// `t` of the extension's time averaging at height `y`.
pub fn poisson_time_density(y: f64, t: f64, params: &KernelParams) -> f64 {
    if t <= 0.0 || y <= 0.0 {
        return 0.0;
    }
    let s = params.sigma;
    let n = params.dim as f64;
    let log = params.d_pois.ln() + 0.5 * n * (4.0 * PI).ln() + 2.0 * s * y.ln() - (1.0 + s) * t.ln()
        - y * y / (4.0 * t);
    log.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    fn p(sigma: f64, dim: usize) -> KernelParams {
        KernelParams::new(sigma, dim).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelParams::new(1.2, 1).is_err());
        assert!(KernelParams::new(0.0, 1).is_err());
        assert!(KernelParams::new(0.5, 0).is_err());
        assert!(heat_kernel(&[0.0], 0.0, &p(0.5, 1)).is_err());
        assert!(time_kernel(-1.0, &p(0.5, 1)).is_err());
        assert!(poisson_kernel(&[0.0], 0.0, 1.0, &p(0.5, 1)).is_err());
    }

    #[test]
    fn half_order_constants() {
        let k = p(0.5, 1);
        assert_eq!(k.gamma_w, 0.0);
        assert!((k.kappa - 1.0).abs() < 1e-15);
        assert!((k.a_green - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((k.rho_test - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn heat_kernel_unit_peak() {
        let k = p(0.5, 1);
        let v = heat_kernel(&[0.0], 1.0 / (4.0 * PI), &k).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_normalization_improves_under_refinement() {
        for dim in [1usize, 2] {
            let k = p(0.4, dim);
            for &t in &[0.01f64, 0.3, 2.0] {
                let r = 12.0 * t.sqrt();
                let mut last = f64::INFINITY;
                for m in [2usize, 4, 8] {
                    let mass = if dim == 1 {
                        quad::composite(|x| heat_kernel(&[x], t, &k).unwrap(), -r, r, m, 8)
                    } else {
                        quad::composite(
                            |x| quad::composite(|y| heat_kernel(&[x, y], t, &k).unwrap(), -r, r, m, 8),
                            -r,
                            r,
                            m,
                            8,
                        )
                    };
                    let err = (mass - 1.0).abs();
                    assert!(err <= last.max(1e-14));
                    last = err;
                }
                assert!(last < 1e-10, "dim={dim} t={t} err={last}");
            }
        }
    }

    #[test]
    fn semigroup_property() {
        let k = p(0.5, 1);
        for &(s, t) in &[(0.25, 1.0), (0.5, 1.0), (1.0, 2.0)] {
            let mut prev = f64::INFINITY;
            for m in [16usize, 32, 64, 128, 256] {
                let mut worst: f64 = 0.0;
                for i in 0..9 {
                    let x = -4.0 + i as f64;
                    let conv = quad::composite(
                        |z| heat_kernel(&[z], s, &k).unwrap() * heat_kernel(&[x - z], t - s, &k).unwrap(),
                        -15.0,
                        15.0,
                        m,
                        8,
                    );
                    worst = worst.max((conv - heat_kernel(&[x], t, &k).unwrap()).abs());
                }
                assert!(worst <= prev.max(1e-14));
                prev = worst;
            }
            assert!(prev < 1e-12, "s={s} t={t} err={prev}");
        }
    }

    #[test]
    fn time_kernel_values() {
        let k = p(0.5, 1);
        let v = time_kernel(1.0, &k).unwrap();
        assert!((v - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-15);
        for &s in &[0.25, 0.75] {
            let kk = p(s, 1);
            let oracle = 1.0 / statrs::function::gamma::gamma(-s).abs();
            assert!((time_kernel(1.0, &kk).unwrap() - oracle).abs() < 1e-13);
        }
        // power-law scaling
        let lam: f64 = 1.7;
        let t = 0.3;
        let lhs = time_kernel(lam * lam * t, &k).unwrap();
        let rhs = lam.powf(-2.0 - 2.0 * k.sigma) * time_kernel(t, &k).unwrap();
        assert!((lhs / rhs - 1.0).abs() < 1e-14);
    }

    #[test]
    fn master_kernel_factorizes_and_integrates() {
        let k = p(0.3, 1);
        for &(x, t) in &[(0.0, 0.2), (1.3, 0.7), (-2.0, 3.0)] {
            let m = master_kernel(&[x], t, &k).unwrap();
            let f = heat_kernel(&[x], t, &k).unwrap() * time_kernel(t, &k).unwrap();
            assert!((m / f - 1.0).abs() < 1e-13);
        }
        let t = 0.8;
        let mass = quad::composite(|x| master_kernel(&[x], t, &k).unwrap(), -12.0, 12.0, 16, 8);
        assert!((mass / time_kernel(t, &k).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_laplacian_constant_by_time_quadrature() {
        for dim in [1usize, 2, 3] {
            for &s in &[0.25, 0.5, 0.75] {
                let k = p(s, dim);
                for &r in &[0.5f64, 1.0, 2.5] {
                    // t = e^v turns the time integral into a smooth integrand
                    let v = quad::composite(
                        |v| {
                            let t = v.exp();
                            master_kernel(&[r, 0.0, 0.0][..dim], t, &k).unwrap() * t
                        },
                        -12.0,
                        60.0 / s,
                        400,
                        16,
                    );
                    let want = k.c_flap * r.powf(-(dim as f64) - 2.0 * s);
                    assert!((v / want - 1.0).abs() < 1e-9, "dim={dim} s={s} r={r} {v} {want}");
                }
            }
        }
    }

    #[test]
    fn green_kernel_indicator_and_scaling() {
        let k = p(0.35, 2);
        assert_eq!(green_kernel(&[0.1, 0.2], 0.0, &k), 0.0);
        assert_eq!(green_kernel(&[0.1, 0.2], -1.0, &k), 0.0);
        let lam: f64 = 2.3;
        let x = [0.4, -0.9];
        let t = 0.6;
        let lhs = green_kernel(&[lam * x[0], lam * x[1]], lam * lam * t, &k);
        let rhs = lam.powf(-2.0 - 2.0 + 2.0 * k.sigma) * green_kernel(&x, t, &k);
        assert!((lhs / rhs - 1.0).abs() < 1e-13);
        // master kernel homogeneity of degree -N-2-2σ
        let lhs = master_kernel(&[lam * x[0], lam * x[1]], lam * lam * t, &k).unwrap();
        let rhs = lam.powf(-2.0 - 2.0 - 2.0 * k.sigma) * master_kernel(&x, t, &k).unwrap();
        assert!((lhs / rhs - 1.0).abs() < 1e-13);
    }

    #[test]
    fn poisson_normalization() {
        let k = p(0.5, 1);
        for &y in &[0.1f64, 1.0, 10.0] {
            // inner x-integral by quadrature, outer t-integral in t = e^v
            let total = quad::composite(
                |v| {
                    let t = v.exp();
                    let r = 14.0 * t.sqrt();
                    let inner = quad::composite(|x| poisson_kernel(&[x], y, t, &k).unwrap(), -r, r, 4, 16);
                    inner * t
                },
                (y * y).ln() - 12.0,
                (y * y).ln() + 90.0,
                300,
                16,
            );
            assert!((total - 1.0).abs() < 1e-8, "y={y} total={total}");
        }
        // dimension two, σ off one half, via the closed x-integral
        let k2 = p(0.3, 2);
        let total = quad::composite(
            |v| {
                let t = v.exp();
                poisson_time_density(1.0, t, &k2) * t
            },
            -12.0,
            160.0,
            500,
            16,
        );
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn poisson_kernel_proportional_to_master_kernel() {
        let k = p(0.6, 1);
        let ratio_const = k.d_pois * (4.0 * PI).powf(0.5) / k.time_norm();
        for &(x, t) in &[(0.3, 0.5), (1.0, 2.0)] {
            let y: f64 = 1e-4;
            let pv = poisson_kernel(&[x], y, t, &k).unwrap() * y.powf(-2.0 * k.sigma);
            let m = master_kernel(&[x], t, &k).unwrap();
            assert!((pv / (m * ratio_const) - 1.0).abs() < 1e-7);
        }
    }
}
