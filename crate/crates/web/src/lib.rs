//! Browser bindings: the explicit blow-up profile, the Fujita boundary and
//! a space-homogeneous march started from a rescaled profile history.
//!
//! The plain functions return core errors and are what the native tests
//! call; the `#[wasm_bindgen]` wrappers only convert errors for JS.

use fracheat_core::lab::{fit_rate, fujita_classify, p_star, ExplicitBlowup, FitOptions, RegimeKind};
use fracheat_core::mild_solver::{mild_march, ProblemSpec, Status};
use fracheat_core::{KernelParams, Result};
use wasm_bindgen::prelude::*;

/// A sampled curve with optional run diagnostics.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    xs: Vec<f64>,
    ys: Vec<f64>,
    status: String,
    /// Fitted or closed-form blow-up rate; NaN when there is none.
    rate: f64,
    /// Blow-up time; NaN when there is none.
    blowup_time: f64,
}

#[wasm_bindgen]
impl Series {
    #[wasm_bindgen(getter)]
    pub fn xs(&self) -> Vec<f64> {
        self.xs.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn ys(&self) -> Vec<f64> {
        self.ys.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn status(&self) -> String {
        self.status.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn rate(&self) -> f64 {
        self.rate
    }
    #[wasm_bindgen(getter, js_name = blowupTime)]
    pub fn blowup_time(&self) -> f64 {
        self.blowup_time
    }
}

/// `z(t) = c (1 - t)^{-σ/(p-1)}` on `samples` points of `[-1, 1)`, spaced
/// geometrically towards the singularity.
pub fn profile(sigma: f64, p: f64, samples: usize) -> Result<Series> {
    let z = ExplicitBlowup::new(p, sigma, 1.0)?;
    let n = samples.max(2);
    // 1 - t runs from 2 down to 1e-4
    let xs: Vec<f64> = (0..n).map(|i| 1.0 - 2.0 * 2e4f64.powf(-(i as f64) / (n - 1) as f64)).collect();
    let ys = xs.iter().map(|&t| z.value(t)).collect();
    Ok(Series { xs, ys, status: "explicit".into(), rate: z.beta, blowup_time: z.horizon })
}

/// `p*(σ)` on `samples` points of `(0, 1)`.
pub fn boundary(dim: usize, samples: usize) -> Result<Series> {
    KernelParams::new(0.5, dim)?;
    let n = samples.max(2);
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let ys = xs.iter().map(|&s| p_star(s, dim)).collect();
    Ok(Series { xs, ys, status: "boundary".into(), rate: f64::NAN, blowup_time: f64::NAN })
}

pub fn classify(p: f64, sigma: f64, dim: usize) -> Result<&'static str> {
    Ok(match fujita_classify(p, sigma, dim)?.kind {
        RegimeKind::GlobalAll => "global-all",
        RegimeKind::BlowupAll => "blowup-all",
        RegimeKind::Conditional => "conditional",
    })
}

/// Space-homogeneous mild run whose history is `scale` times the explicit
/// profile. `scale = 1` reproduces `z` and blows up at `t = 1`.
pub fn march(sigma: f64, p: f64, scale: f64, t_max: f64) -> Result<Series> {
    let z = ExplicitBlowup::new(p, sigma, 1.0)?;
    let params = KernelParams::new(sigma, 1)?;
    let mut spec = ProblemSpec::new(params, p, z.memory().scaled(scale), 1.0, 1, t_max);
    spec.store_slices = false;
    spec.max_steps = 50_000;
    // highest level the step control can reach, capped for the plot
    let reachable = (spec.step.theta / spec.step.dt_floor).powf(sigma / (p - 1.0));
    spec.blowup_threshold = (0.5 * reachable).min(1e6).max(10.0 * z.value(0.0) * scale);
    let traj = mild_march(&spec)?;
    let (rate, blowup_time) = match traj.status {
        Status::BlowupDetected => fit_rate(&traj.times, &traj.sup_norms, true, &FitOptions::default())
            .map(|f| (f.rate_exp, f.t_est))
            .unwrap_or((f64::NAN, traj.final_time())),
        _ => (f64::NAN, f64::NAN),
    };
    let status = match traj.status {
        Status::CompletedHorizon => "completed-horizon",
        Status::BlowupDetected => "blowup-detected",
        Status::StepFailure => "step-failure",
    };
    Ok(Series { xs: traj.times, ys: traj.sup_norms, status: status.into(), rate, blowup_time })
}

fn js(e: fracheat_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = explicitProfile)]
pub fn explicit_profile(sigma: f64, p: f64, samples: usize) -> std::result::Result<Series, JsError> {
    profile(sigma, p, samples).map_err(js)
}

#[wasm_bindgen(js_name = fujitaBoundary)]
pub fn fujita_boundary(dim: usize, samples: usize) -> std::result::Result<Series, JsError> {
    boundary(dim, samples).map_err(js)
}

#[wasm_bindgen]
pub fn regime(p: f64, sigma: f64, dim: usize) -> std::result::Result<String, JsError> {
    classify(p, sigma, dim).map(str::to_string).map_err(js)
}

#[wasm_bindgen(js_name = homogeneousMarch)]
pub fn homogeneous_march(sigma: f64, p: f64, scale: f64, t_max: f64) -> std::result::Result<Series, JsError> {
    march(sigma, p, scale, t_max).map_err(js)
}
