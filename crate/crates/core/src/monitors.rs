//! Verdicts over traces and single snapshots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowTrace, TraceRow};
use crate::functionals::{weighted_area, weighted_mean_curvature_integral, SliceProfile, VolumeTable};
use crate::graphgeom::{closeness, compute_fields, GraphState};
use crate::grid::SphereGrid;
use crate::warp::WarpedSpace;

/// Multiplier on refinement-estimated error.
pub const ERROR_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
    NotApplicable,
    /// The run ended before the question could be decided.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Location {
    Time { t: f64 },
    Node { node: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub status: Status,
    /// Signed; non-positive margins mean the property held with room to spare.
    pub worst_violation: Option<f64>,
    pub tolerance: f64,
    pub location: Option<Location>,
    pub preconditions_held: bool,
    /// Set by inequality checks when the gap vanishes on a slice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equality: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    pub fn judge(name: impl Into<String>, worst: f64, tolerance: f64, location: Option<Location>) -> Self {
        let passed = worst <= tolerance;
        Verdict {
            name: name.into(),
            passed,
            status: if passed { Status::Passed } else { Status::Failed },
            worst_violation: Some(worst),
            tolerance,
            location,
            preconditions_held: true,
            equality: None,
            note: None,
        }
    }

    pub fn not_applicable(name: impl Into<String>, tolerance: f64, note: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            passed: false,
            status: Status::NotApplicable,
            worst_violation: None,
            tolerance,
            location: None,
            preconditions_held: false,
            equality: None,
            note: Some(note.into()),
        }
    }

    pub fn inconclusive(name: impl Into<String>, tolerance: f64, note: impl Into<String>) -> Self {
        Verdict {
            status: Status::Inconclusive,
            preconditions_held: true,
            ..Self::not_applicable(name, tolerance, note)
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// True for verdicts that count against a run.
    pub fn is_failure(&self) -> bool {
        self.status == Status::Failed
    }
}

/// User floors under the refinement-scaled tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Floors {
    /// Relative drift of `V_φ`.
    pub conservation: f64,
    /// Relative change per monitored step.
    pub monotone: f64,
    /// Relative increase of `max|Dγ|²` per step.
    pub gradient: f64,
    /// Absolute overshoot of the initial `γ` bracket.
    pub c0: f64,
    /// Absolute floor on `s_min`.
    pub convexity: f64,
    /// Absolute gap floor.
    pub inequality: f64,
    /// Relative mismatch of the first-variation formulas.
    pub variational: f64,
    pub limit_radius: f64,
    /// Allowed shortfall of the fitted decay rate against `β̂`.
    pub decay_slack: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Floors {
            conservation: 1e-5,
            monotone: 1e-10,
            gradient: 1e-13,
            c0: 1e-12,
            convexity: 1e-8,
            inequality: 1e-8,
            variational: 1e-6,
            limit_radius: 1e-4,
            decay_slack: 0.1,
        }
    }
}

fn worst_by<I>(items: I) -> Option<(f64, f64, Option<Location>)>
where
    I: IntoIterator<Item = (f64, f64, Option<Location>)>,
{
    items.into_iter().fold(None, |best, cur| match best {
        Some(b) if b.0 - b.1 >= cur.0 - cur.1 => Some(b),
        _ => Some(cur),
    })
}

pub fn check_volume_conservation(trace: &FlowTrace, floors: &Floors) -> Verdict {
    let name = "volume_conservation";
    if trace.rows.len() < 2 {
        return Verdict::not_applicable(name, floors.conservation, "trace has fewer than two rows");
    }
    let v0 = trace.rows[0].v_phi;
    let (worst, t) = trace
        .rows
        .iter()
        .map(|r| ((r.v_phi / v0 - 1.0).abs(), r.t))
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let est = coarse_spread(&trace.rows, |r| r.v_phi, |c| c.v_phi);
    Verdict::judge(name, worst, floors.conservation.max(ERROR_FACTOR * est), Some(Location::Time { t }))
}

/// Largest difference between fine and coarse relative drift.
fn coarse_spread(
    rows: &[TraceRow],
    fine: impl Fn(&TraceRow) -> f64,
    coarse: impl Fn(&crate::flow::CoarseRow) -> f64,
) -> f64 {
    let (Some(first), Some(c0)) = (rows.first(), rows.first().and_then(|r| r.coarse.as_ref())) else {
        return 0.0;
    };
    let (f0, c0) = (fine(first), coarse(c0));
    rows.iter()
        .filter_map(|r| r.coarse.as_ref().map(|c| ((fine(r) / f0 - 1.0) - (coarse(c) / c0 - 1.0)).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    NonDecreasing,
    NonIncreasing,
}

fn monotone_verdict(
    name: &str,
    rows: &[TraceRow],
    fine: impl Fn(&TraceRow) -> f64,
    coarse: impl Fn(&TraceRow) -> Option<f64>,
    dir: Direction,
    floor: f64,
) -> Verdict {
    if rows.len() < 2 {
        return Verdict::not_applicable(name, floor, "trace has fewer than two rows");
    }
    let pairs = rows.windows(2).map(|w| {
        let (a, b) = (fine(&w[0]), fine(&w[1]));
        let scale = a.abs().max(f64::MIN_POSITIVE);
        let delta = (b - a) / scale;
        let violation = match dir {
            Direction::NonDecreasing => -delta,
            Direction::NonIncreasing => delta,
        };
        let est = match (coarse(&w[0]), coarse(&w[1])) {
            (Some(ca), Some(cb)) => ((b - a) - (cb - ca)).abs() / scale,
            _ => 0.0,
        };
        (violation, floor.max(ERROR_FACTOR * est), Some(Location::Time { t: w[1].t }))
    });
    let (worst, tol, loc) = worst_by(pairs).expect("at least one pair");
    Verdict::judge(name, worst, tol, loc)
}

/// Sign of `φ''` over `[lo, hi]`: `Some(1)`, `Some(-1)`, `Some(0)` for
/// identically zero, `None` when it changes.
fn phi_dd_sign(space: &WarpedSpace, lo: f64, hi: f64) -> Option<i32> {
    let samples = 200;
    let mut seen = [false; 3];
    for k in 0..=samples {
        let r = lo + (hi - lo) * k as f64 / samples as f64;
        let d2 = space.eval_phi(r).ok()?.d2;
        let scale = 1e-12 * (1.0 + space.eval_phi(r).ok()?.phi.abs());
        let idx = if d2 > scale {
            0
        } else if d2 < -scale {
            1
        } else {
            2
        };
        seen[idx] = true;
    }
    match seen {
        [true, false, false] => Some(1),
        [false, true, false] => Some(-1),
        [false, false, true] => Some(0),
        _ => None,
    }
}

fn traversed_slab(trace: &FlowTrace) -> (f64, f64) {
    let lo = trace.rows.iter().map(|r| r.r_min_node).fold(f64::INFINITY, f64::min);
    let hi = trace.rows.iter().map(|r| r.r_max_node).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Monotonicity of `V_φ^α` with the direction fixed by the sign of `φ''(α−1)`.
pub fn check_alpha_monotonicity(trace: &FlowTrace, space: &WarpedSpace, alpha: f64, floors: &Floors) -> Verdict {
    let name = format!("alpha_monotonicity_{alpha}");
    if alpha == 1.0 {
        let mut v = check_volume_conservation(trace, floors);
        v.name = name;
        return v;
    }
    let Some(idx) = trace.alphas.iter().position(|&a| a == alpha) else {
        return Verdict::not_applicable(name, floors.monotone, format!("alpha {alpha} was not monitored"));
    };
    if trace.rows.is_empty() {
        return Verdict::not_applicable(name, floors.monotone, "empty trace");
    }
    let (lo, hi) = traversed_slab(trace);
    let dir = match phi_dd_sign(space, lo, hi).map(|s| s as f64 * (alpha - 1.0)) {
        None => {
            return Verdict::not_applicable(name, floors.monotone, "phi'' changes sign on the traversed slab")
        }
        Some(s) if s < 0.0 => Direction::NonDecreasing,
        Some(s) if s > 0.0 => Direction::NonIncreasing,
        Some(_) => {
            let mut v = monotone_verdict(
                &name,
                &trace.rows,
                |r| r.v_alpha[idx],
                |r| r.coarse.as_ref().map(|c| c.v_alpha[idx]),
                Direction::NonDecreasing,
                floors.monotone,
            );
            let w = monotone_verdict(
                &name,
                &trace.rows,
                |r| r.v_alpha[idx],
                |r| r.coarse.as_ref().map(|c| c.v_alpha[idx]),
                Direction::NonIncreasing,
                floors.monotone,
            );
            if w.worst_violation > v.worst_violation {
                v = w;
            }
            return v.with_note("phi'' vanishes on the slab; V_phi^alpha is conserved");
        }
    };
    monotone_verdict(
        &name,
        &trace.rows,
        |r| r.v_alpha[idx],
        |r| r.coarse.as_ref().map(|c| c.v_alpha[idx]),
        dir,
        floors.monotone,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AreaFunctional {
    A0,
    A1,
}

/// Hypotheses on the ambient space shared by the area and convexity results.
fn space_hypotheses(space: &WarpedSpace) -> std::result::Result<(), String> {
    let rep = space.staticity_report();
    if !rep.is_static {
        return Err("space is not static".into());
    }
    if !rep.admissible {
        return Err("space violates phi'' > 0 or 0 <= phi'^2 - phi phi'' <= 1".into());
    }
    Ok(())
}

pub fn check_area_monotonicity(trace: &FlowTrace, space: &WarpedSpace, which: AreaFunctional, floors: &Floors) -> Verdict {
    let (name, n_min) = match which {
        AreaFunctional::A0 => ("area_monotonicity_A0", 2),
        AreaFunctional::A1 => ("area_monotonicity_A1", 3),
    };
    if space.n() < n_min {
        return Verdict::not_applicable(name, floors.monotone, format!("requires n >= {n_min}"));
    }
    if let Err(why) = space_hypotheses(space) {
        return Verdict::not_applicable(name, floors.monotone, why);
    }
    if let Some(r) = trace.rows.iter().find(|r| r.min_smin < -floors.convexity) {
        return Verdict::not_applicable(
            name,
            floors.monotone,
            format!("snapshot at t = {} is not static convex", r.t),
        );
    }
    match which {
        AreaFunctional::A0 => monotone_verdict(
            name,
            &trace.rows,
            |r| r.a0,
            |r| r.coarse.as_ref().map(|c| c.a0),
            Direction::NonIncreasing,
            floors.monotone,
        ),
        AreaFunctional::A1 => monotone_verdict(
            name,
            &trace.rows,
            |r| r.a1,
            |r| r.coarse.as_ref().map(|c| c.a1),
            Direction::NonIncreasing,
            floors.monotone,
        ),
    }
}

/// Roundoff in `|Dγ|²` from differencing `γ` of size `gamma_scale`.
fn grad_roundoff(grad_sq: f64, gamma_scale: f64, spacing: f64) -> f64 {
    let d = 8.0 * f64::EPSILON * gamma_scale / spacing;
    2.0 * grad_sq.sqrt() * d + d * d
}

/// Per-step non-increase of `max|Dγ|²`, the `e^{−β̂t}` envelope and the fitted rate.
pub fn check_gradient_decay(trace: &FlowTrace, grid: &SphereGrid, floors: &Floors) -> Vec<Verdict> {
    let steps = &trace.steps;
    let h = grid.spacing();
    let gscale = steps
        .iter()
        .map(|s| s.gamma_min.abs().max(s.gamma_max.abs()))
        .fold(0.0, f64::max);
    let mut out = Vec::new();
    if steps.len() < 2 {
        out.push(Verdict::not_applicable("gradient_non_increasing", floors.gradient, "fewer than two steps"));
    } else {
        let pairs = steps.windows(2).map(|w| {
            let g = w[0].max_grad_sq.max(f64::MIN_POSITIVE);
            let tol = floors.gradient.max(ERROR_FACTOR * grad_roundoff(g, gscale, h) / g);
            ((w[1].max_grad_sq - w[0].max_grad_sq) / g, tol, Some(Location::Time { t: w[1].t }))
        });
        let (worst, tol, loc) = worst_by(pairs).expect("pairs");
        out.push(Verdict::judge("gradient_non_increasing", worst, tol, loc));
    }

    let g0 = steps.first().map_or(0.0, |s| s.max_grad_sq);
    if g0 > 0.0 {
        let t0 = steps[0].t;
        let env = steps.iter().map(|s| {
            let bound = g0 * (-trace.beta_hat * (s.t - t0)).exp();
            let tol = floors.gradient.max(ERROR_FACTOR * grad_roundoff(s.max_grad_sq, gscale, h) / g0);
            ((s.max_grad_sq - bound) / g0, tol, Some(Location::Time { t: s.t }))
        });
        let (worst, tol, loc) = worst_by(env).expect("steps");
        out.push(Verdict::judge("gradient_envelope", worst, tol, loc));
    } else {
        out.push(Verdict::not_applicable("gradient_envelope", floors.gradient, "initial data is a slice"));
    }

    let target = -trace.beta_hat * (1.0 - floors.decay_slack);
    match trace.measured_decay_rate {
        Some(rate) if g0 > 0.0 => {
            let v = Verdict::judge("decay_rate", rate - target, 0.0, None);
            out.push(v.with_note(format!("fitted rate {rate}, beta_hat {}", trace.beta_hat)));
        }
        _ => out.push(Verdict::inconclusive("decay_rate", 0.0, "no decay to fit")),
    }
    out
}

/// Node values of `γ` stay inside the initial bracket.
pub fn check_c0_bounds(trace: &FlowTrace, floors: &Floors) -> Verdict {
    let name = "c0_bounds";
    let Some(first) = trace.steps.first() else {
        return Verdict::not_applicable(name, floors.c0, "no steps");
    };
    let (lo, hi) = (first.gamma_min, first.gamma_max);
    let (worst, t) = trace
        .steps
        .iter()
        .map(|s| ((s.gamma_max - hi).max(lo - s.gamma_min), s.t))
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    Verdict::judge(name, worst, floors.c0, Some(Location::Time { t }))
}

pub fn check_convergence(trace: &FlowTrace, floors: &Floors) -> Vec<Verdict> {
    let last = trace.steps.last().map_or(f64::NAN, |s| s.max_grad_sq);
    if !trace.converged {
        return vec![
            Verdict::inconclusive("convergence", trace.grad_tol, format!("max|Dgamma|^2 = {last} at t_max")),
            Verdict::inconclusive("limit_radius", floors.limit_radius, "run did not converge"),
        ];
    }
    let conv = Verdict::judge("convergence", last, trace.grad_tol, None);
    let radius = match (trace.r_infinity, trace.r_star) {
        (Some(a), Some(b)) => Verdict::judge("limit_radius", (a - b).abs(), floors.limit_radius, None),
        _ => Verdict::not_applicable("limit_radius", floors.limit_radius, "profile inversion unavailable"),
    };
    vec![conv, radius]
}

/// Largest admissible `ε₀` for graphs inside `B(R)`.
pub fn epsilon0_bound(space: &WarpedSpace, big_r: f64) -> Result<f64> {
    let rep = space.staticity_report();
    if !rep.is_static {
        return Err(Error::NotApplicable("epsilon0 requires a static space".into()));
    }
    if !(big_r > space.r_min() && big_r <= space.r_max()) {
        return Err(Error::Range {
            value: big_r,
            lo: space.r_min(),
            hi: space.r_max(),
        });
    }
    let c0 = rep.c0;
    let n = space.n() as f64;
    if c0.abs() <= 1e-10 * (1.0 + rep.c0_max_deviation) {
        return Ok(f64::INFINITY);
    }
    if c0 < 0.0 {
        return Err(Error::NotApplicable(format!("C0 = {c0} is negative")));
    }
    let j = space.eval_phi(big_r)?;
    let rhs = 2.0 * j.d1 * j.phi.powf((n - 1.0) / 2.0);
    let cap = 2.0 / (3.0 * n);
    let holds = |e: f64| 2.0 / (1.0 + e) * (c0 * (2.0 / e - 3.0 * n)).sqrt() >= rhs;
    let (mut lo, mut hi) = (0.0f64, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Static convexity is kept along the run and becomes strict for `t > 0`.
pub fn check_convexity_preservation(
    trace: &FlowTrace,
    space: &WarpedSpace,
    grid: &SphereGrid,
    floors: &Floors,
) -> Result<Vec<Verdict>> {
    let names = ["convexity_preserved", "convexity_strict"];
    let na = |why: String| -> Vec<Verdict> {
        names
            .iter()
            .map(|n| Verdict::not_applicable(*n, floors.convexity, why.clone()))
            .collect()
    };
    if let Err(why) = space_hypotheses(space) {
        return Ok(na(why));
    }
    let Some(first) = trace.rows.first() else {
        return Ok(na("empty trace".into()));
    };
    if first.min_smin < -floors.convexity {
        return Ok(na(format!("initial min s_min = {} is negative", first.min_smin)));
    }
    let eps = closeness(grid, &trace.initial)?;
    let eps0 = epsilon0_bound(space, first.r_max_node.min(space.r_max()))?;
    if eps > eps0 {
        return Ok(na(format!("initial closeness {eps} exceeds epsilon0 {eps0}")));
    }
    let (worst, t) = trace
        .rows
        .iter()
        .map(|r| (-r.min_smin, r.t))
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let kept = Verdict::judge(names[0], worst, floors.convexity, Some(Location::Time { t }));
    let strict = if first.max_grad_sq <= trace.grad_tol {
        Verdict::not_applicable(names[1], 0.0, "initial data is a slice")
    } else {
        match trace
            .rows
            .iter()
            .filter(|r| r.t > first.t)
            .map(|r| (-r.min_smin, r.t))
            .fold(None, |a: Option<(f64, f64)>, b| match a {
                Some(a) if a.0 >= b.0 => Some(a),
                _ => Some(b),
            }) {
            Some((w, t)) => {
                let mut v = Verdict::judge(names[1], w, 0.0, Some(Location::Time { t }));
                if w >= 0.0 {
                    v.passed = false;
                    v.status = Status::Failed;
                }
                v
            }
            None => Verdict::inconclusive(names[1], 0.0, "no rows after t = 0"),
        }
    };
    Ok(vec![kept, strict])
}

/// Weighted functionals of one snapshot, with a coarse-grid counterpart.
struct Snapshot {
    v_phi: f64,
    v_alpha: f64,
    a0: f64,
    a1: f64,
    grad_sq: f64,
    min_smin: f64,
    r_lo: f64,
    r_hi: f64,
}

fn snapshot(space: &WarpedSpace, grid: &SphereGrid, state: &GraphState, alpha: f64) -> Result<Snapshot> {
    let f = compute_fields(space, grid, state)?;
    Ok(Snapshot {
        v_phi: VolumeTable::new(space, 1.0).volume(grid, &f.radial)?,
        v_alpha: VolumeTable::new(space, alpha).volume(grid, &f.radial)?,
        a0: weighted_area(&f),
        a1: weighted_mean_curvature_integral(&f),
        grad_sq: f.grad_sq.iter().copied().fold(0.0, f64::max),
        min_smin: f.s_min.iter().copied().fold(f64::INFINITY, f64::min),
        r_lo: f.r.iter().copied().fold(f64::INFINITY, f64::min),
        r_hi: f.r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Inequality gaps for one graph against the slice profiles.
pub fn check_inequalities(
    space: &WarpedSpace,
    grid: &SphereGrid,
    state: &GraphState,
    profiles: &[SliceProfile],
    grad_tol: f64,
    floors: &Floors,
) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let coarse = grid.coarse();
    let hyp = space_hypotheses(space);
    for prof in profiles {
        let alpha = prof.alpha();
        let fine = snapshot(space, grid, state, alpha)?;
        let crs = match &coarse {
            Some((cg, idx)) => {
                let cs = GraphState {
                    gamma: idx.iter().map(|&i| state.gamma[i]).collect(),
                    t: state.t,
                };
                Some(snapshot(space, cg, &cs, alpha)?)
            }
            None => None,
        };
        let slice_like = fine.grad_sq < grad_tol;
        let gap_verdict = |name: String, gap: &dyn Fn(&Snapshot) -> Result<f64>| -> Result<Verdict> {
            let g = gap(&fine)?;
            let est = match &crs {
                Some(c) => (g - gap(c)?).abs(),
                None => 0.0,
            };
            let tol = floors.inequality.max(ERROR_FACTOR * est);
            let mut v = Verdict::judge(name, -g, tol, None);
            v.equality = Some(g.abs() <= tol && slice_like);
            Ok(v)
        };

        let vv_name = format!("inequality_VVphi_alpha_{alpha}");
        match phi_dd_sign(space, fine.r_lo, fine.r_hi).map(|s| s as f64 * (alpha - 1.0)) {
            None => out.push(Verdict::not_applicable(vv_name, floors.inequality, "phi'' changes sign")),
            Some(s) if s == 0.0 => out.push(Verdict::not_applicable(
                vv_name,
                floors.inequality,
                "phi''(alpha - 1) vanishes; both sides agree identically",
            )),
            Some(s) => {
                let sign = if s < 0.0 { 1.0 } else { -1.0 };
                out.push(gap_verdict(vv_name, &|x: &Snapshot| Ok(sign * (prof.xi(x.v_phi)? - x.v_alpha)))?);
            }
        }

        for (i, n_min) in [(0usize, 2usize), (1, 3)] {
            let name = format!("inequality_A{i}_alpha_{alpha}");
            let pre = if space.n() < n_min {
                Err(format!("requires n >= {n_min}"))
            } else if alpha > 1.0 {
                Err("requires alpha <= 1".to_string())
            } else if let Err(why) = &hyp {
                Err(why.clone())
            } else if fine.min_smin < -floors.convexity {
                Err(format!("graph is not static convex: min s_min = {}", fine.min_smin))
            } else {
                let eps0 = epsilon0_bound(space, fine.r_hi.min(space.r_max()))?;
                if fine.grad_sq > eps0 {
                    Err(format!("closeness {} exceeds epsilon0 {eps0}", fine.grad_sq))
                } else {
                    Ok(())
                }
            };
            match pre {
                Err(why) => out.push(Verdict::not_applicable(name, floors.inequality, why)),
                Ok(()) => out.push(gap_verdict(name, &|x: &Snapshot| {
                    let a = if i == 0 { x.a0 } else { x.a1 };
                    Ok(a - prof.chi(i, x.v_alpha)?)
                })?),
            }
        }
    }
    Ok(out)
}

/// Worst disagreement between a difference quotient and a surface integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub worst: f64,
    pub t: f64,
    /// Size of the rates, for relative comparisons.
    pub scale: f64,
}

/// The monitored functionals paired with their first-variation rates.
pub fn variational_quantities(trace: &FlowTrace) -> Vec<(String, Box<dyn Fn(&TraceRow) -> (f64, f64) + '_>)> {
    let mut out: Vec<(String, Box<dyn Fn(&TraceRow) -> (f64, f64)>)> = Vec::new();
    for (k, &a) in trace.alphas.iter().enumerate() {
        out.push((
            format!("V_phi_alpha_{a}"),
            Box::new(move |r: &TraceRow| (r.v_alpha[k], r.rates.volume_alpha[k])),
        ));
    }
    let last = trace.alphas.len();
    out.push(("V_phi".into(), Box::new(move |r: &TraceRow| (r.v_phi, r.rates.volume_alpha[last]))));
    out.push(("A0_phi".into(), Box::new(|r: &TraceRow| (r.a0, r.rates.a0))));
    out.push(("A1_phi".into(), Box::new(|r: &TraceRow| (r.a1, r.rates.a1))));
    out
}

/// Three-point difference over rows `k − stride, k, k + stride` against the
/// rate stored at row `k`; the final row is excluded.
pub fn variational_mismatch(rows: &[TraceRow], stride: usize, quantity: &dyn Fn(&TraceRow) -> (f64, f64)) -> Option<Mismatch> {
    if stride == 0 || rows.len() < 2 * stride + 2 {
        return None;
    }
    let usable = rows.len() - 1;
    let scale = rows.iter().map(|r| quantity(r).1.abs()).fold(0.0, f64::max);
    let mut best: Option<Mismatch> = None;
    let mut k = stride;
    while k + stride < usable {
        let (a, b, c) = (&rows[k - stride], &rows[k], &rows[k + stride]);
        let (h1, h2) = (b.t - a.t, c.t - b.t);
        let (fa, fb, fc) = (quantity(a).0, quantity(b).0, quantity(c).0);
        let slope = -h2 / (h1 * (h1 + h2)) * fa + (h2 - h1) / (h1 * h2) * fb + h1 / (h2 * (h1 + h2)) * fc;
        let m = (slope - quantity(b).1).abs();
        if best.map_or(true, |x| m > x.worst) {
            best = Some(Mismatch { worst: m, t: b.t, scale });
        }
        k += stride;
    }
    best
}

/// Finite-difference `d/dt` of each functional against its surface integral.
pub fn check_variational_formulas(trace: &FlowTrace, floors: &Floors) -> Vec<Verdict> {
    variational_quantities(trace)
        .into_iter()
        .map(|(label, q)| {
            let name = format!("variation_{label}");
            let (Some(m1), Some(m2)) = (
                variational_mismatch(&trace.rows, 1, &*q),
                variational_mismatch(&trace.rows, 2, &*q),
            ) else {
                return Verdict::not_applicable(name, floors.variational, "too few rows for paired differences");
            };
            let span = trace.rows.last().map_or(1.0, |r| r.t - trace.rows[0].t).max(f64::MIN_POSITIVE);
            let size = quantity_size(&trace.rows, &*q, span);
            let est = (m2.worst - m1.worst).abs() / 3.0;
            let tol = (floors.variational * size).max(ERROR_FACTOR * est);
            Verdict::judge(name, m1.worst, tol, Some(Location::Time { t: m1.t }))
        })
        .collect()
}

fn quantity_size(rows: &[TraceRow], q: &dyn Fn(&TraceRow) -> (f64, f64), span: f64) -> f64 {
    let rate = rows.iter().map(|r| q(r).1.abs()).fold(0.0, f64::max);
    rate + q(&rows[0]).0.abs() / span
}

/// The verdicts written after every simulation.
pub fn run_verdicts(trace: &FlowTrace, space: &WarpedSpace, grid: &SphereGrid, floors: &Floors) -> Result<Vec<Verdict>> {
    let mut out = vec![check_volume_conservation(trace, floors)];
    for &a in &trace.alphas {
        out.push(check_alpha_monotonicity(trace, space, a, floors));
    }
    out.push(check_area_monotonicity(trace, space, AreaFunctional::A0, floors));
    out.push(check_area_monotonicity(trace, space, AreaFunctional::A1, floors));
    out.extend(check_gradient_decay(trace, grid, floors));
    out.push(check_c0_bounds(trace, floors));
    out.extend(check_convergence(trace, floors));
    out.extend(check_convexity_preservation(trace, space, grid, floors)?);
    out.extend(check_variational_formulas(trace, floors));
    Ok(out)
}
