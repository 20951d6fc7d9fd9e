mod support;

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use warpflow::flow::{run, DtPolicy, FlowConfig, FlowTrace, Scheme, Stepper};
use warpflow::functionals::{minkowski_residuals, SliceProfile};
use warpflow::graphgeom::{closeness, compute_fields, GraphState};
use warpflow::grid::{GridMode, SphereGrid};
use warpflow::initial::{mode_field, random_graph, RandomSpec};
use warpflow::monitors::{
    check_alpha_monotonicity, check_area_monotonicity, check_convexity_preservation, check_inequalities,
    epsilon0_bound, variational_mismatch, variational_quantities, AreaFunctional, Floors, Status, Verdict,
};
use warpflow::warp::WarpedSpace;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn timed(label: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let passed = o.passed && elapsed < budget;
    let line = format!(
        "{label} {}  {}  [{:.2} s of {} s]\n",
        if passed { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    passed
}

fn random_spec(value: serde_json::Value) -> RandomSpec {
    serde_json::from_value(value).unwrap()
}

fn passed(v: &Verdict) -> bool {
    v.status == Status::Passed
}

fn brief(v: &Verdict) -> String {
    format!(
        "{}={:?}({:.2e}/{:.1e})",
        v.name,
        v.status,
        v.worst_violation.unwrap_or(f64::NAN),
        v.tolerance
    )
}

/// Band-limited zonal field with coefficients drawn from `seed`, evaluated on `grid`.
fn zonal_field(grid: &SphereGrid, seed: u64, l_max: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = vec![0.0; grid.node_count()];
    for l in 1..=l_max {
        let c = scale * rng.random_range(-1.0..=1.0) / ((1 + l) * (1 + l)) as f64;
        for (x, m) in f.iter_mut().zip(mode_field(grid, l, 0).unwrap()) {
            *x += c * m;
        }
    }
    f
}

fn ac1() -> Outcome {
    let schw = WarpedSpace::schwarzschild(2, 1.0, None, 8.0).unwrap();
    let cases = [
        ("euclidean", WarpedSpace::euclidean(2, 0.0, 3.0).unwrap(), 0.3, 2.5, 0.0),
        ("hyperbolic", WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap(), 0.3, 2.5, 0.0),
        ("sphere", WarpedSpace::sphere(2, 1.0, 0.0, 1.5).unwrap(), 0.3, 1.4, 0.0),
        ("schwarzschild", schw.clone(), schw.r_min() + 0.1, 7.5, 3.0),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, (name, space, lo, hi, c0)) in cases.iter().enumerate() {
        let d = support::riemann_disagreement(space, *lo, *hi, 100, 100 + k as u64);
        let rep = space.staticity_report();
        let good = d < 1e-6 && rep.is_static && rep.max_residual < rep.tolerance && (rep.c0 - c0).abs() < 1e-10;
        ok &= good;
        detail.push(format!("{name}: fd {d:.1e} static {} C0 {:.12}", rep.is_static, rep.c0));
    }
    outcome(ok, detail.join("; "))
}

fn ac2() -> Outcome {
    let space = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
    let grid = SphereGrid::build(GridMode::Axisym, 2, 256).unwrap();
    let start = GraphState::slice(&space, &grid, 1.0).unwrap();
    let cfg = FlowConfig {
        scheme: Scheme::Rk4,
        dt_policy: DtPolicy::Adaptive { c_cfl: 0.2 },
        t_max: f64::INFINITY,
        grad_tol: 1e-12,
        monitors_every: 10,
        snapshot_every: None,
        max_steps: None,
    };
    let mut stepper = Stepper::new(&space, &grid, &cfg);
    let mut state = start.clone();
    for k in 0..1000 {
        let dt = stepper.next_dt(&state).unwrap();
        stepper.step(&mut state, dt, k).unwrap();
    }
    let worst = state
        .gamma
        .iter()
        .zip(&start.gamma)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    outcome(worst < 1e-12, format!("max|gamma(t)-gamma(0)| = {worst:.2e} after 1000 steps to t = {:.3}", state.t))
}

struct Reference {
    space: WarpedSpace,
    trace: FlowTrace,
    elapsed: Duration,
}

fn reference_run() -> Reference {
    let space = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
    let grid = SphereGrid::build(GridMode::Axisym, 2, 256).unwrap();
    let g0 = space.gamma_of_r(1.0).unwrap();
    let state = GraphState::new(grid.coords().iter().map(|c| g0 + 0.05 * c[0].cos()).collect());
    let cfg = FlowConfig {
        scheme: Scheme::Rk4,
        dt_policy: DtPolicy::Adaptive { c_cfl: 0.2 },
        t_max: 100.0,
        grad_tol: 1e-12,
        monitors_every: 40,
        snapshot_every: None,
        max_steps: None,
    };
    let start = Instant::now();
    let trace = run(&space, &grid, &state, &cfg, &[0.0, 2.0]).unwrap();
    Reference {
        space,
        trace,
        elapsed: start.elapsed(),
    }
}

fn ac3(r: &Reference) -> Outcome {
    let tr = &r.trace;
    let v0 = tr.rows[0].v_phi;
    let drift = tr.rows.iter().map(|x| (x.v_phi / v0 - 1.0).abs()).fold(0.0, f64::max);
    let rise = tr
        .steps
        .windows(2)
        .map(|w| (w[1].max_grad_sq - w[0].max_grad_sq) / w[0].max_grad_sq.max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    let rate = tr.measured_decay_rate.unwrap_or(f64::NAN);
    let radius_err = match (tr.r_infinity, tr.r_star) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::NAN,
    };
    let ok = tr.converged && drift < 1e-5 && rise <= 1e-13 && rate <= -0.9 * tr.beta_hat && radius_err < 1e-4;
    outcome(
        ok,
        format!(
            "converged {} in {} steps; drift {drift:.2e}; worst step rise {rise:.2e}; rate {rate:.4} vs beta_hat {:.4}; |r_inf - r*| {radius_err:.2e}; run {:.1} s",
            tr.converged,
            tr.steps.len() - 1,
            tr.beta_hat,
            r.elapsed.as_secs_f64()
        ),
    )
}

fn pinned_floors() -> Floors {
    Floors {
        monotone: 1e-10,
        ..Floors::default()
    }
}

fn monotone_suite(trace: &FlowTrace, space: &WarpedSpace, with_a1: bool) -> Vec<Verdict> {
    let floors = pinned_floors();
    let mut v = vec![
        check_alpha_monotonicity(trace, space, 0.0, &floors),
        check_alpha_monotonicity(trace, space, 2.0, &floors),
        check_area_monotonicity(trace, space, AreaFunctional::A0, &floors),
    ];
    if with_a1 {
        v.push(check_area_monotonicity(trace, space, AreaFunctional::A1, &floors));
    }
    v
}

fn ac4(r: &Reference) -> Outcome {
    let mut verdicts = monotone_suite(&r.trace, &r.space, false);
    let space = WarpedSpace::schwarzschild(3, 1.0, None, 6.0).unwrap();
    let grid = SphereGrid::build(GridMode::Axisym, 3, 128).unwrap();
    let r0 = space.r_min();
    let spec = random_spec(serde_json::json!({
        "l_max": 3, "amplitude": 0.05, "r_base_range": [r0 + 0.6, r0 + 1.0],
        "static_convex": true, "within_epsilon0": true
    }));
    let (state, _) = random_graph(&space, &grid, None, &spec, 4, 0).unwrap();
    let cfg = FlowConfig {
        scheme: Scheme::Rk4,
        dt_policy: DtPolicy::Adaptive { c_cfl: 0.2 },
        t_max: 5.0,
        grad_tol: 1e-12,
        monitors_every: 20,
        snapshot_every: None,
        max_steps: None,
    };
    let trace = run(&space, &grid, &state, &cfg, &[0.0, 2.0]).unwrap();
    verdicts.extend(monotone_suite(&trace, &space, true));
    let ok = verdicts.iter().all(passed);
    let names: Vec<String> = verdicts.iter().map(brief).collect();
    outcome(ok, format!("hyperbolic n=2: {}; schwarzschild n=3: {}", names[..3].join(" "), names[3..].join(" ")))
}

fn ac5() -> Outcome {
    let probe = WarpedSpace::schwarzschild(2, 1.0, None, 10.0).unwrap();
    let big_r = probe.r_min() + 1.0;
    let space = WarpedSpace::schwarzschild(2, 1.0, None, big_r + 1.0).unwrap();
    let grid = SphereGrid::build(GridMode::Axisym, 2, 128).unwrap();
    let eps0 = epsilon0_bound(&space, big_r).unwrap();
    let spec = random_spec(serde_json::json!({
        "l_max": 4, "amplitude": 0.2, "r_base_range": [big_r - 0.6, big_r - 0.3],
        "static_convex": true, "max_closeness": eps0
    }));
    let (state, index) = (0..50)
        .find_map(|k| {
            let (s, _) = random_graph(&space, &grid, None, &spec, 5, k).ok()?;
            let f = compute_fields(&space, &grid, &s).ok()?;
            let top = f.r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (top <= big_r).then_some((s, k))
        })
        .expect("no admissible initial graph");
    let eps = closeness(&grid, &state).unwrap();
    let cfg = FlowConfig {
        scheme: Scheme::Rk4,
        dt_policy: DtPolicy::Adaptive { c_cfl: 0.2 },
        t_max: 20.0,
        grad_tol: 1e-12,
        monitors_every: 5,
        snapshot_every: None,
        max_steps: None,
    };
    let trace = run(&space, &grid, &state, &cfg, &[]).unwrap();
    let min_all = trace.rows.iter().map(|r| r.min_smin).fold(f64::INFINITY, f64::min);
    let min_later = trace
        .rows
        .iter()
        .filter(|r| r.t > 0.0)
        .map(|r| r.min_smin)
        .fold(f64::INFINITY, f64::min);
    let verdicts = check_convexity_preservation(&trace, &space, &grid, &Floors::default()).unwrap();
    let ok = min_all >= -1e-8 && min_later > 0.0 && verdicts.iter().all(passed);
    outcome(
        ok,
        format!(
            "R {big_r:.4}, eps0 {eps0:.3e}, member {index} eps {eps:.3e}; min s_min {min_all:.4e}, after t>0 {min_later:.4e}; {}",
            verdicts.iter().map(brief).collect::<Vec<_>>().join(" ")
        ),
    )
}

fn ac6() -> Outcome {
    let space = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
    let coarse = SphereGrid::build(GridMode::Axisym, 2, 256).unwrap();
    let fine = SphereGrid::build(GridMode::Axisym, 2, 512).unwrap();
    let residuals = |grid: &SphereGrid, k: u64| {
        let g0 = space.gamma_of_r(0.8 + 0.05 * k as f64).unwrap();
        let p = zonal_field(grid, 600 + k, 5, 0.3);
        let state = GraphState::new(p.iter().map(|x| g0 + x).collect());
        let f = compute_fields(&space, grid, &state).unwrap();
        let m = minkowski_residuals(&f);
        (m.first.abs(), m.second.unwrap().abs())
    };
    let mut worst_ratio = f64::INFINITY;
    let mut worst_fine: f64 = 0.0;
    for k in 0..10 {
        let (c1, c2) = residuals(&coarse, k);
        let (f1, f2) = residuals(&fine, k);
        worst_ratio = worst_ratio.min(c1 / f1).min(c2 / f2);
        worst_fine = worst_fine.max(f1).max(f2);
    }
    outcome(
        worst_ratio >= 8.0 && worst_fine < 1e-6,
        format!("smallest refinement ratio {worst_ratio:.2}; largest residual at 512 {worst_fine:.2e}"),
    )
}

fn ac7(r: &Reference) -> Outcome {
    let q = variational_quantities(&r.trace);
    let (_, v0) = q.iter().find(|(l, _)| l == "V_phi_alpha_0").unwrap();
    let m1 = variational_mismatch(&r.trace.rows, 1, &**v0).unwrap();
    let m2 = variational_mismatch(&r.trace.rows, 2, &**v0).unwrap();
    let ratio = m2.worst / m1.worst;
    outcome(
        (3.0..=5.5).contains(&ratio),
        format!(
            "mismatch {:.3e} at spacing dt_m, {:.3e} at 2 dt_m, ratio {ratio:.2}",
            m1.worst, m2.worst
        ),
    )
}

fn ac8() -> Outcome {
    let grids: Vec<SphereGrid> = [256, 512]
        .iter()
        .map(|&n| SphereGrid::build(GridMode::Axisym, 2, n).unwrap())
        .collect();
    let mut orders = Vec::new();
    let mut worst_fine: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for k in 0..5 {
        let res: Vec<f64> = grids
            .iter()
            .map(|g| {
                let f = zonal_field(g, 800 + k, 5, 0.3);
                peak = peak.max(f.iter().fold(0.0, |m: f64, x| m.max(x.abs())));
                g.ricci_identity_residual(&f).unwrap().iter().fold(0.0, |m: f64, x| m.max(x.abs()))
            })
            .collect();
        orders.push((res[0] / res[1]).log2());
        worst_fine = worst_fine.max(res[1]);
    }
    let in_window = orders.iter().all(|p| (3.5..=4.5).contains(p));
    outcome(
        in_window && worst_fine < 1e-7,
        format!(
            "orders 256 to 512 {:?}; largest residual at 512 {worst_fine:.2e} (field peak {peak:.3})",
            orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn ac9() -> Outcome {
    let floors = Floors::default();
    let schw = WarpedSpace::schwarzschild(2, 1.0, None, 8.0).unwrap();
    let grid = SphereGrid::build(GridMode::Axisym, 2, 256).unwrap();
    let r0 = schw.r_min();
    let profiles: Vec<SliceProfile> = [0.0, 0.5, 1.0].iter().map(|&a| SliceProfile::new(&schw, a).unwrap()).collect();
    let spec = random_spec(serde_json::json!({
        "l_max": 4, "amplitude": 0.05, "r_base_range": [r0 + 0.5, r0 + 2.0],
        "static_convex": true, "within_epsilon0": true
    }));
    let mut min_a0_gap = f64::INFINITY;
    for k in 0..20 {
        let (state, _) = random_graph(&schw, &grid, None, &spec, 9, k).unwrap();
        let verdicts = check_inequalities(&schw, &grid, &state, &profiles, 1e-12, &floors).unwrap();
        for v in verdicts.iter().filter(|v| v.name.starts_with("inequality_A0")) {
            min_a0_gap = min_a0_gap.min(-v.worst_violation.unwrap());
        }
    }

    let hyp = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
    let hyp_profiles = [SliceProfile::new(&hyp, 0.0).unwrap()];
    let hspec = random_spec(serde_json::json!({
        "l_max": 4, "amplitude": 0.1, "r_base_range": [0.6, 1.5], "static_convex": true
    }));
    let vv = |state: &GraphState| {
        check_inequalities(&hyp, &grid, state, &hyp_profiles, 1e-12, &floors)
            .unwrap()
            .into_iter()
            .find(|v| v.name == "inequality_VVphi_alpha_0")
            .unwrap()
    };
    let mut strict = true;
    let mut min_strict_gap = f64::INFINITY;
    for k in 0..20 {
        let (state, _) = random_graph(&hyp, &grid, None, &hspec, 10, k).unwrap();
        let v = vv(&state);
        let gap = -v.worst_violation.unwrap();
        strict &= gap > v.tolerance && v.equality == Some(false);
        min_strict_gap = min_strict_gap.min(gap);
    }
    let mut equal = true;
    let mut max_slice_gap: f64 = 0.0;
    for r in [0.5, 1.0, 2.0] {
        let v = vv(&GraphState::slice(&hyp, &grid, r).unwrap());
        equal &= v.equality == Some(true) && passed(&v);
        max_slice_gap = max_slice_gap.max(v.worst_violation.unwrap().abs());
    }
    outcome(
        min_a0_gap >= -1e-8 && strict && equal,
        format!(
            "schwarzschild min A0 gap {min_a0_gap:.3e}; hyperbolic non-slice min gap {min_strict_gap:.3e} strict {strict}; slice |gap| {max_slice_gap:.2e} equality {equal}"
        ),
    )
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let mut results = vec![
        timed("AC-1", secs(10), ac1),
        timed("AC-2", secs(5), ac2),
    ];
    let reference = reference_run();
    results.push(timed("AC-3", secs(60), || {
        let mut o = ac3(&reference);
        o.passed &= reference.elapsed < secs(60);
        o
    }));
    results.push(timed("AC-4", secs(120), || ac4(&reference)));
    results.push(timed("AC-5", secs(120), ac5));
    results.push(timed("AC-6", secs(120), ac6));
    results.push(timed("AC-7", secs(60), || ac7(&reference)));
    results.push(timed("AC-8", secs(60), ac8));
    results.push(timed("AC-9", secs(120), ac9));
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(k, _)| k + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
