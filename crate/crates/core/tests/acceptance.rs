//! One PASS/FAIL line per primary acceptance criterion.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture`.

use fracheat_core::artifacts::{write_ext_trajectory, write_trajectory};
use fracheat_core::extension_solver::{
    energy_violations, extension_march, kaplan_j, levine_consistent, ExtGrid, ExtGridSpec, ExtSettings, ExtTrajectory,
};
use fracheat_core::lab::{
    fit_rate, p_star, sweep, trace_agreement, validation_battery, BatteryConfig, CellLabel, ExplicitBlowup, FitOptions,
    SolverKind, SweepPlan, ValidationReport,
};
use fracheat_core::mild_solver::{mild_march, ProblemSpec, Reaction, Status};
use fracheat_core::{KernelParams, MemoryData, PeriodicGrid};
use serde_json::json;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(name: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { name, pass, detail }
}

fn batteries() -> Vec<(f64, ValidationReport)> {
    [0.25, 0.5, 0.75]
        .iter()
        .map(|&s| (s, validation_battery(&BatteryConfig { sigma: s, ..BatteryConfig::default() }).unwrap()))
        .collect()
}

fn battery_line(reports: &[(f64, ValidationReport)], names: &[&str]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, r) in reports {
        for n in names {
            let e = r.entry(n).unwrap();
            pass &= e.pass;
            let ord = e.order.map(|o| format!(", order {o:.2}")).unwrap_or_default();
            parts.push(format!("σ={s} {n} {:.2e} (tol {:.0e}{ord})", e.error, e.tolerance));
        }
    }
    (pass, parts.join("; "))
}

fn closed_forms(reports: &[(f64, ValidationReport)]) -> Outcome {
    let (pass, detail) = battery_line(reports, &["marchaud/power-rule", "master/psi-identity"]);
    report("closed-form battery", pass, detail)
}

fn fundamental_solution(reports: &[(f64, ValidationReport)]) -> Outcome {
    let (mut pass, mut detail) = battery_line(reports, &["master/fundamental-solution"]);
    // the check must notice a wrong normalization constant
    let off = validation_battery(&BatteryConfig { a_green_scale: 1.1, ..BatteryConfig::default() }).unwrap();
    let e = off.entry("master/fundamental-solution").unwrap();
    pass &= !e.pass;
    detail.push_str(&format!("; A×1.1 gives {:.2e} (rejected: {})", e.error, !e.pass));
    report("fundamental solution", pass, detail)
}

fn explicit_odes(reports: &[(f64, ValidationReport)]) -> Outcome {
    let (pass, detail) = battery_line(&reports[..1], &["ode/explicit-blowup", "ode/explicit-global"]);
    report("explicit ODE solutions", pass, detail)
}

fn conormal(reports: &[(f64, ValidationReport)]) -> Outcome {
    let (pass, detail) = battery_line(reports, &["extension/conormal"]);
    report("conormal/extension consistency", pass, detail)
}

fn cross_solver() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let settings = ExtSettings { grid: ExtGridSpec { n_y: 128, y_max: 20.0, grading: None }, ..Default::default() };
    for sigma in [0.25, 0.5, 0.75, 0.9] {
        let params = KernelParams::new(sigma, 1).unwrap();
        let mut spec = ProblemSpec::new(params, 2.0, MemoryData::bump(1.0), 40.0, 128, 1.0);
        spec.reaction = Reaction::Linear { amp: 0.5, width: 0.5, exponent: -1.5 };
        match trace_agreement(&spec, &settings, 1.0, 100) {
            Ok(err) => {
                pass &= err < 2e-2;
                parts.push(format!("σ={sigma} {err:.2e}"));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("σ={sigma} error: {e}"));
            }
        }
    }
    report("cross-solver equivalence", pass, format!("{} (tol 2e-2)", parts.join(", ")))
}

fn fujita() -> Outcome {
    let params = KernelParams::new(0.5, 1).unwrap();
    let mut base = ProblemSpec::new(params, 2.0, MemoryData::bump(1.0), 256.0, 512, 200.0);
    base.blowup_threshold = 1e3;
    base.step.dt_max = 0.05;
    let plan = SweepPlan {
        sigmas: vec![0.5],
        ps: vec![1.2, 1.3, 1.7, 2.0],
        data_scales: vec![0.5, 10.0],
        base,
        solver: SolverKind::Extension,
        ext: ExtSettings { grid: ExtGridSpec { n_y: 128, y_max: 100.0, grading: None }, ..Default::default() },
        near_critical: 0.05,
        fit: FitOptions::default(),
    };
    let r = sweep(&plan).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for run in &r.runs {
        let small = run.data_scale < 1.0;
        let ok = if !small || run.p < p_star(0.5, 1) {
            run.escaped() && run.final_time < 200.0
        } else {
            run.status == Status::CompletedHorizon && run.decaying
        };
        pass &= ok;
        parts.push(format!(
            "p={} a={}: {:?} t={:.3} sup={:.2e}",
            run.p, run.data_scale, run.status, run.final_time, run.final_sup
        ));
    }
    let below: Vec<f64> = r.cells.iter().filter(|c| c.label == CellLabel::BlowupAll).map(|c| c.p).collect();
    let above: Vec<f64> = r.cells.iter().filter(|c| c.label == CellLabel::Conditional).map(|c| c.p).collect();
    let bracket = below.iter().all(|&p| p <= 1.5) && above.iter().all(|&p| p > 1.5) && below.len() == 2 && above.len() == 2;
    pass &= bracket && r.cells.iter().all(|c| c.consistent);
    parts.push(format!("blow-up-for-all cells {below:?}, conditional cells {above:?}, p*=1.5"));
    report("Fujita phase diagram", pass, parts.join("; "))
}

fn rates() -> Outcome {
    let params = KernelParams::new(0.5, 1).unwrap();
    let mut spec = ProblemSpec::new(params, 1.3, MemoryData::bump(10.0), 40.0, 128, 5.0);
    spec.blowup_threshold = 1e6;
    let settings = ExtSettings { grid: ExtGridSpec { n_y: 128, y_max: 20.0, grading: None }, ..Default::default() };
    let e = extension_march(&spec, &settings).unwrap();
    let want = 0.5 / 0.3;
    let fit = fit_rate(&e.times, &e.sup_norms, e.status == Status::BlowupDetected, &FitOptions::default()).unwrap();
    let err_a = (fit.rate_exp - want).abs() / want;

    let z = ExplicitBlowup::new(2.0, 0.5, 1.0).unwrap();
    let mut zs = ProblemSpec::new(params, 2.0, z.memory(), 40.0, 16, 2.0);
    zs.blowup_threshold = 1e4;
    let m = mild_march(&zs).unwrap();
    let zfit = fit_rate(&m.times, &m.sup_norms, m.status == Status::BlowupDetected, &FitOptions::default()).unwrap();
    let err_b = (zfit.rate_exp - z.beta).abs() / z.beta;
    let pass = fit.detected && err_a < 0.15 && zfit.detected && err_b < 0.05;
    report(
        "blow-up rate",
        pass,
        format!(
            "p=1.3: β={:.4}±{:.1e}, T={:.5} (want {want:.4}, rel {err_a:.2e}, tol 0.15); explicit z: β={:.5}, T={:.5} (want 0.5, rel {err_b:.2e}, tol 0.05)",
            fit.rate_exp, fit.rate_ci, fit.t_est, zfit.rate_exp, zfit.t_est
        ),
    )
}

fn small_spec(sigma: f64, p: f64, amp: f64) -> ProblemSpec {
    let params = KernelParams::new(sigma, 1).unwrap();
    let mut spec = ProblemSpec::new(params, p, MemoryData::bump(amp), 20.0, 64, 0.3);
    spec.store_slices = true;
    spec.blowup_threshold = 50.0;
    spec.step.growth = 1.0;
    spec.step.dt_initial = 0.005;
    spec.step.theta = 1e6;
    spec
}

fn min_ratio(slices: &[Vec<f64>]) -> f64 {
    slices
        .iter()
        .map(|u| {
            let sup = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
            u.iter().fold(0.0f64, |a, v| a.min(*v)) / sup
        })
        .fold(0.0, f64::min)
}

fn excess(ta: &[f64], a: &[Vec<f64>], tb: &[f64], b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, t) in ta.iter().enumerate() {
        let Some(j) = tb.iter().position(|s| (s - t).abs() < 1e-14) else { continue };
        let scale = b[j].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for (x, y) in a[i].iter().zip(&b[j]) {
            worst = worst.max((x - y) / scale);
        }
    }
    worst
}

fn properties() -> Outcome {
    let ext_settings =
        ExtSettings { grid: ExtGridSpec { n_y: 64, y_max: 15.0, grading: None }, kaplan_k: vec![1.0, 0.25], slice_stride: 1 };
    let mut pos: f64 = 0.0;
    let mut cmp: f64 = 0.0;
    let mut energy = 0;
    let mut ext_runs: Vec<ExtTrajectory> = Vec::new();
    for (sigma, p, amp) in [(0.3, 1.5, 1.0), (0.5, 2.0, 1.5), (0.75, 3.0, 0.5), (0.5, 1.2, 0.05)] {
        let lo = small_spec(sigma, p, amp);
        let hi = small_spec(sigma, p, 1.5 * amp);
        let (ml, mh) = (mild_march(&lo).unwrap(), mild_march(&hi).unwrap());
        let (el, eh) = (extension_march(&lo, &ext_settings).unwrap(), extension_march(&hi, &ext_settings).unwrap());
        pos = pos.min(min_ratio(&ml.slices)).min(min_ratio(&mh.slices));
        pos = pos.min(min_ratio(&el.traces)).min(min_ratio(&eh.traces));
        cmp = cmp.max(excess(&ml.times, &ml.slices, &mh.times, &mh.slices));
        cmp = cmp.max(excess(&el.times, &el.traces, &eh.times, &eh.traces));
        let mut long = lo.clone();
        long.t_max = 1.0;
        let el = extension_march(&long, &ext_settings).unwrap();
        energy += energy_violations(&el, 1e-6).len();
        ext_runs.extend([el, eh]);
    }
    let levine = ext_runs.iter().all(|t| levine_consistent(t, 1e-8, 50.0));

    let mut kaplan: f64 = 0.0;
    for (sigma, dim) in [(0.25, 1), (0.5, 1), (0.75, 1), (0.5, 2)] {
        let params = KernelParams::new(sigma, dim).unwrap();
        let x = PeriodicGrid::new(dim, if dim == 1 { 128 } else { 48 }, 24.0).unwrap();
        let g = ExtGrid::new(x, &params, &ExtGridSpec { n_y: 96, y_max: 12.0, grading: None }).unwrap();
        let one = vec![1.0; g.slice_len()];
        for k in [0.25, 1.0, 4.0] {
            kaplan = kaplan.max((kaplan_j(&one, &g, &params, k).unwrap() - 1.0).abs());
        }
    }

    let spec = small_spec(0.5, 2.0, 1.0);
    let cfg = json!({"case": "acceptance"});
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        write_trajectory(d.path().join("mild"), &cfg, &spec, &mild_march(&spec).unwrap()).unwrap();
        let e = extension_march(&spec, &ext_settings).unwrap();
        write_ext_trajectory(d.path().join("ext"), &cfg, &spec, &ext_settings, &e).unwrap();
    }
    let deterministic = ["mild/supnorm.csv", "mild/slices/000010.bin", "ext/supnorm.csv", "ext/energy.csv"]
        .iter()
        .all(|f| std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap());

    let pass = pos >= -1e-6 && cmp <= 1e-6 && energy == 0 && kaplan < 1e-3 && levine && deterministic;
    report(
        "property suite",
        pass,
        format!(
            "min u/sup {pos:.1e} (floor -1e-6), comparison excess {cmp:.1e} (tol 1e-6), energy increases {energy}, \
             Kaplan |∫φ dμ - 1| {kaplan:.1e} (tol 1e-3), Levine consistent {levine}, deterministic artifacts {deterministic}"
        ),
    )
}

#[test]
fn acceptance() {
    let reports = batteries();
    let outcomes = vec![
        closed_forms(&reports),
        fundamental_solution(&reports),
        explicit_odes(&reports),
        conormal(&reports),
        cross_solver(),
        fujita(),
        rates(),
        properties(),
    ];
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    for o in &outcomes {
        assert!(!o.detail.is_empty());
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
