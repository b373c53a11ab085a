use fracheat_core::artifacts::{write_ext_trajectory, write_trajectory};
use fracheat_core::extension_solver::{
    energy_violations, extension_march, kaplan_j, levine_check, levine_consistent, ExtGrid, ExtGridSpec, ExtSettings, ExtTrajectory,
};
use fracheat_core::lab::{blowup_ode_residual, fit_rate, fujita_classify, ExplicitBlowup, FitOptions, RegimeKind};
use fracheat_core::mild_solver::{mild_march, ProblemSpec, Status, Trajectory};
use fracheat_core::{KernelParams, MemoryData, PeriodicGrid};
use proptest::prelude::*;
use serde_json::json;

fn small_spec(sigma: f64, p: f64, amp: f64) -> ProblemSpec {
    let params = KernelParams::new(sigma, 1).unwrap();
    let mut spec = ProblemSpec::new(params, p, MemoryData::bump(amp), 20.0, 64, 0.3);
    spec.store_slices = true;
    // stop while the peak is still resolved on this grid
    let reachable = (spec.step.theta / spec.step.dt_floor).powf(sigma / (p - 1.0));
    spec.blowup_threshold = (0.5 * reachable).min(50.0);
    spec.max_steps = 20_000;
    spec
}

fn ext_settings() -> ExtSettings {
    ExtSettings {
        grid: ExtGridSpec { n_y: 48, y_max: 15.0, grading: None },
        kaplan_k: vec![1.0],
        slice_stride: 1,
    }
}

fn mild(spec: &ProblemSpec) -> Trajectory {
    mild_march(spec).unwrap()
}

fn ext(spec: &ProblemSpec) -> ExtTrajectory {
    extension_march(spec, &ext_settings()).unwrap()
}

/// Pointwise `lo <= hi` on common times, up to `tol` times the sup.
fn dominated(times_lo: &[f64], lo: &[Vec<f64>], times_hi: &[f64], hi: &[Vec<f64>], tol: f64) -> bool {
    for (i, t) in times_lo.iter().enumerate() {
        let Some(j) = times_hi.iter().position(|s| (s - t).abs() < 1e-14) else { continue };
        let scale = hi[j].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        if lo[i].iter().zip(&hi[j]).any(|(a, b)| *a > b + tol * scale) {
            return false;
        }
    }
    true
}

fn ext_traces_with_times(t: &ExtTrajectory) -> (Vec<f64>, Vec<Vec<f64>>) {
    (t.times.clone(), t.traces.clone())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn mild_solutions_are_ordered_by_their_data(
        sigma in 0.3f64..0.8, p in 1.2f64..2.5, amp in 0.1f64..2.0, gap in 0.05f64..1.0,
    ) {
        let mut lo = small_spec(sigma, p, amp);
        let mut hi = small_spec(sigma, p, amp * (1.0 + gap));
        // fixed steps so the two runs share time nodes
        for s in [&mut lo, &mut hi] {
            s.step.growth = 1.0;
            s.step.dt_initial = 0.01;
            s.step.theta = 1e6;
        }
        let a = mild(&lo);
        let b = mild(&hi);
        prop_assert!(dominated(&a.times, &a.slices, &b.times, &b.slices, 1e-6));
    }

    #[test]
    fn extension_solutions_are_ordered_by_their_data(
        sigma in 0.25f64..0.8, p in 1.2f64..2.5, amp in 0.1f64..2.0, gap in 0.05f64..1.0,
    ) {
        let mut lo = small_spec(sigma, p, amp);
        let mut hi = small_spec(sigma, p, amp * (1.0 + gap));
        for s in [&mut lo, &mut hi] {
            s.step.growth = 1.0;
            s.step.dt_initial = 0.005;
            s.step.theta = 1e6;
        }
        let (ta, ua) = ext_traces_with_times(&ext(&lo));
        let (tb, ub) = ext_traces_with_times(&ext(&hi));
        prop_assert!(dominated(&ta, &ua, &tb, &ub, 1e-6));
    }

    #[test]
    fn nonnegative_data_stays_nonnegative(sigma in 0.25f64..0.85, p in 1.1f64..3.0, amp in 0.05f64..2.0) {
        let spec = small_spec(sigma, p, amp);
        let m = mild(&spec);
        for s in &m.slices {
            let sup = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(s.iter().all(|v| *v >= -1e-6 * sup));
        }
        let e = ext(&spec);
        for s in &e.traces {
            let sup = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(s.iter().all(|v| *v >= -1e-6 * sup));
        }
    }

    #[test]
    fn energy_does_not_increase(sigma in 0.25f64..0.85, p in 1.2f64..3.0, amp in 0.05f64..5.0) {
        let mut spec = small_spec(sigma, p, amp);
        spec.t_max = 1.0;
        let e = ext(&spec);
        let v = energy_violations(&e, 1e-6);
        prop_assert!(v.is_empty(), "{v:?}");
    }

    #[test]
    fn levine_consistency_holds(sigma in 0.25f64..0.85, p in 1.2f64..3.0, amp in 0.05f64..20.0) {
        let mut spec = small_spec(sigma, p, amp);
        spec.t_max = 1.0;
        let e = ext(&spec);
        prop_assert!(levine_consistent(&e, 1e-8, spec.blowup_threshold));
        if levine_check(&e, 1e-8).is_some() && e.status == Status::CompletedHorizon {
            // negative energy: the run must escape on a longer horizon
            spec.t_max = 200.0;
            let long = ext(&spec);
            prop_assert_eq!(long.status, Status::BlowupDetected);
        }
    }
}

proptest! {
    #[test]
    fn kaplan_weight_has_unit_mass(sigma in 0.1f64..0.9, k in 0.2f64..4.0, dim in 1usize..3) {
        let params = KernelParams::new(sigma, dim).unwrap();
        let n = if dim == 1 { 128 } else { 48 };
        let x = PeriodicGrid::new(dim, n, 24.0).unwrap();
        let g = ExtGrid::new(x, &params, &ExtGridSpec { n_y: 96, y_max: 12.0, grading: None }).unwrap();
        let one = vec![1.0; g.slice_len()];
        let j = kaplan_j(&one, &g, &params, k).unwrap();
        prop_assert!((j - 1.0).abs() < 1e-3, "J = {j}");
    }

    #[test]
    fn regimes_are_ordered_in_p(sigma in 0.05f64..0.95, dim in 1usize..4, p in 0.2f64..5.0, dp in 0.0f64..2.0) {
        let rank = |k: RegimeKind| match k {
            RegimeKind::GlobalAll => 0,
            RegimeKind::BlowupAll => 1,
            RegimeKind::Conditional => 2,
        };
        let a = fujita_classify(p, sigma, dim).unwrap();
        let b = fujita_classify(p + dp, sigma, dim).unwrap();
        prop_assert!(rank(a.kind) <= rank(b.kind));
        prop_assert!(a.p_star > 1.0 && a.p_star <= 1.0 + 2.0 * sigma / dim as f64);
    }

    #[test]
    fn rate_fit_is_scale_and_shift_equivariant(
        beta in 0.3f64..3.0, amp in 0.1f64..10.0, scale in 0.01f64..100.0, shift in -5.0f64..5.0, stretch in 0.1f64..10.0,
    ) {
        let horizon = 1.0;
        let times: Vec<f64> = (0..300).map(|i| horizon - 0.5 * 0.97f64.powi(i)).collect();
        let sups: Vec<f64> = times.iter().map(|t| amp * (horizon - t).powf(-beta)).collect();
        let base = fit_rate(&times, &sups, true, &FitOptions::default()).unwrap();
        let scaled: Vec<f64> = sups.iter().map(|s| s * scale).collect();
        let moved: Vec<f64> = times.iter().map(|t| stretch * t + shift).collect();
        let r = fit_rate(&moved, &scaled, true, &FitOptions::default()).unwrap();
        prop_assert!((base.rate_exp - beta).abs() < 1e-4 * beta);
        prop_assert!((r.rate_exp - base.rate_exp).abs() < 1e-4 * beta);
        prop_assert!((r.t_est - (stretch * base.t_est + shift)).abs() < 1e-6 * stretch.max(1.0));
    }

    #[test]
    fn rescaled_blowup_profiles_solve_the_same_equation(
        sigma in 0.2f64..0.8, p in 1.3f64..3.0, lambda in 0.5f64..2.0, frac in 0.0f64..0.9,
    ) {
        let z = ExplicitBlowup::new(p, sigma, 1.0).unwrap();
        let zl = z.rescaled(lambda);
        let t = frac * zl.horizon;
        let want = lambda.powf(2.0 * sigma / (p - 1.0)) * z.value(lambda * lambda * t);
        prop_assert!((zl.value(t) / want - 1.0).abs() < 1e-12);
        prop_assert!(blowup_ode_residual(&zl, t, 4000).unwrap() < 5e-3);
    }
}

#[test]
fn artifacts_are_deterministic() {
    let mut spec = small_spec(0.5, 2.0, 1.0);
    spec.t_max = 0.2;
    let cfg = json!({"case": "determinism"});
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    write_trajectory(d1.path().join("mild"), &cfg, &spec, &mild(&spec)).unwrap();
    write_trajectory(d2.path().join("mild"), &cfg, &spec, &mild(&spec)).unwrap();
    let s = ext_settings();
    let e1 = extension_march(&spec, &s).unwrap();
    let e2 = extension_march(&spec, &s).unwrap();
    write_ext_trajectory(d1.path().join("ext"), &cfg, &spec, &s, &e1).unwrap();
    write_ext_trajectory(d2.path().join("ext"), &cfg, &spec, &s, &e2).unwrap();
    for f in ["mild/supnorm.csv", "mild/times.csv", "mild/slices/000003.bin", "ext/supnorm.csv", "ext/energy.csv", "ext/meta.json"] {
        let a = std::fs::read(d1.path().join(f)).unwrap();
        let b = std::fs::read(d2.path().join(f)).unwrap();
        assert!(!a.is_empty() && a == b, "{f} differs");
    }
}
