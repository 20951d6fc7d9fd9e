//! Time integration of the scalar flow
//! `∂ₜγ = (Δ₀γ − pᵀΓp/ω²)/(φφ'ω) + n|p|²/(φω)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{variation_rates, weighted_area, weighted_mean_curvature_integral, SliceProfile, VariationRates, VolumeTable};
use crate::graphgeom::{compute_fields, radial_fields, GeometryFields, GraphState};
use crate::grid::{compensated_sum, SphereGrid};
use crate::warp::WarpedSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4,
    Imex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DtPolicy {
    Fixed { dt: f64 },
    Adaptive { c_cfl: f64 },
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::Adaptive { c_cfl: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub dt_policy: DtPolicy,
    pub t_max: f64,
    pub grad_tol: f64,
    #[serde(default = "default_monitors_every")]
    pub monitors_every: usize,
    /// Steps between γ snapshots; none when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

fn default_monitors_every() -> usize {
    10
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        match self.dt_policy {
            DtPolicy::Fixed { dt } if !(dt > 0.0) => {
                return Err(Error::Config("fixed dt must be positive".into()))
            }
            DtPolicy::Adaptive { c_cfl } if !(c_cfl > 0.0 && c_cfl <= 1.0) => {
                return Err(Error::Config("c_cfl must lie in (0, 1]".into()))
            }
            _ => {}
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::Config("t_max must be positive".into()));
        }
        if self.monitors_every == 0 {
            return Err(Error::Config("monitors_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Normal speed and the two forms of the `γ` rate.
#[derive(Debug, Clone)]
pub struct Speed {
    /// `F = n − uH/φ'`
    pub normal: Vec<f64>,
    /// `F ω/φ`
    pub gamma_rate: Vec<f64>,
    /// The expanded quasilinear form.
    pub gamma_rate_expanded: Vec<f64>,
}

pub fn normal_speed(fields: &GeometryFields) -> Vec<f64> {
    let n = fields.n as f64;
    (0..fields.node_count())
        .map(|i| n - fields.u[i] * fields.mean_curvature[i] / fields.radial[i].jet.d1)
        .collect()
}

pub fn speed(space: &WarpedSpace, grid: &SphereGrid, state: &GraphState) -> Result<Speed> {
    let fields = compute_fields(space, grid, state)?;
    let normal = normal_speed(&fields);
    let gamma_rate = normal
        .iter()
        .enumerate()
        .map(|(i, f)| f * fields.omega[i] / fields.radial[i].jet.phi)
        .collect();
    let mut expanded = vec![0.0; state.gamma.len()];
    let mut lap_coef = vec![0.0; state.gamma.len()];
    gamma_rate_into(space, grid, &state.gamma, &mut expanded, &mut lap_coef)?;
    Ok(Speed {
        normal,
        gamma_rate,
        gamma_rate_expanded: expanded,
    })
}

/// Extremes gathered while evaluating a rate.
#[derive(Debug, Clone, Copy)]
pub struct RateInfo {
    /// `min φφ'ω`
    pub floor: f64,
    pub max_grad_sq: f64,
}

/// Writes the `γ` rate into `out` and the principal coefficient `1/(φφ'ω)`
/// into `coef`.
fn gamma_rate_into(
    space: &WarpedSpace,
    grid: &SphereGrid,
    gamma: &[f64],
    out: &mut [f64],
    coef: &mut [f64],
) -> Result<RateInfo> {
    let mut info = RateInfo {
        floor: f64::INFINITY,
        max_grad_sq: 0.0,
    };
    let (lo, hi) = space.gamma_range();
    let n = grid.n() as f64;
    let m = grid.multiplicity();
    for i in 0..gamma.len() {
        let g = gamma[i];
        if !(g >= lo && g <= hi) {
            return Err(Error::DomainEscape {
                node: i,
                gamma: g,
                lo,
                hi,
            });
        }
        let j = space.phi_at_s(space.s_of_gamma(g)?);
        let (p, hess) = grid.derivs_at(gamma, i);
        let gs = p[0] * p[0] + p[1] * p[1];
        let w2 = 1.0 + gs;
        let omega = w2.sqrt();
        let floor = j.phi * j.d1 * omega;
        info.floor = info.floor.min(floor);
        info.max_grad_sq = info.max_grad_sq.max(gs);
        let a = 1.0 / floor;
        coef[i] = a;
        out[i] = a * (hess.trace(m) - hess.quad(p) / w2) + n * gs / (j.phi * omega);
    }
    Ok(info)
}

/// Time-step restriction from the principal part, given `min φφ'ω`.
pub fn adaptive_dt(grid: &SphereGrid, floor: f64, scheme: Scheme, c_cfl: f64) -> f64 {
    let h = grid.spacing();
    match scheme {
        Scheme::Rk4 => c_cfl * h * h * floor,
        Scheme::Imex => c_cfl * h * floor,
    }
}

/// Functional values recorded at monitor times.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub max_grad_sq: f64,
    pub v_phi: f64,
    pub v_alpha: Vec<f64>,
    pub a0: f64,
    pub a1: f64,
    pub min_smin: f64,
    pub max_speed: f64,
    pub r_min_node: f64,
    pub r_max_node: f64,
    /// Surface-integral sides of the first-variation formulas; the volume
    /// entries follow `alphas` with `α = 1` appended.
    pub rates: VariationRates,
    /// The same functionals on the nested half-resolution grid.
    pub coarse: Option<CoarseRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseRow {
    pub v_phi: f64,
    pub v_alpha: Vec<f64>,
    pub a0: f64,
    pub a1: f64,
}

/// Per-step bookkeeping for the gradient and `C⁰` checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub max_grad_sq: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub alphas: Vec<f64>,
    pub rows: Vec<TraceRow>,
    pub steps: Vec<StepRecord>,
    pub initial: GraphState,
    pub final_state: GraphState,
    pub converged: bool,
    pub r_infinity: Option<f64>,
    pub r_star: Option<f64>,
    pub beta_hat: f64,
    pub measured_decay_rate: Option<f64>,
    pub grad_tol: f64,
}

/// Receives rows and snapshots while a run is in progress.
pub trait FlowObserver {
    fn on_row(&mut self, _row: &TraceRow) -> Result<()> {
        Ok(())
    }
    fn on_snapshot(&mut self, _step: usize, _state: &GraphState) -> Result<()> {
        Ok(())
    }
}

impl FlowObserver for () {}

/// Evaluates monitored functionals of a state.
pub struct Monitor<'a> {
    space: &'a WarpedSpace,
    grid: &'a SphereGrid,
    alphas: Vec<f64>,
    v1: VolumeTable,
    va: Vec<VolumeTable>,
    coarse: Option<(SphereGrid, Vec<usize>)>,
}

impl<'a> Monitor<'a> {
    pub fn new(space: &'a WarpedSpace, grid: &'a SphereGrid, alphas: &[f64]) -> Self {
        Monitor {
            space,
            grid,
            alphas: alphas.to_vec(),
            v1: VolumeTable::new(space, 1.0),
            va: alphas.iter().map(|&a| VolumeTable::new(space, a)).collect(),
            coarse: grid.coarse(),
        }
    }

    pub fn row(&self, state: &GraphState, step: usize, dt: f64) -> Result<TraceRow> {
        let fields = compute_fields(self.space, self.grid, state)?;
        let speed = normal_speed(&fields);
        let mut rate_alphas = self.alphas.clone();
        rate_alphas.push(1.0);
        let rates = variation_rates(&fields, &speed, &rate_alphas);
        let coarse = match &self.coarse {
            Some((cg, idx)) => {
                let cs = GraphState {
                    gamma: idx.iter().map(|&i| state.gamma[i]).collect(),
                    t: state.t,
                };
                let cf = compute_fields(self.space, cg, &cs)?;
                Some(CoarseRow {
                    v_phi: self.v1.volume(cg, &cf.radial)?,
                    v_alpha: self
                        .va
                        .iter()
                        .map(|t| t.volume(cg, &cf.radial))
                        .collect::<Result<_>>()?,
                    a0: weighted_area(&cf),
                    a1: weighted_mean_curvature_integral(&cf),
                })
            }
            None => None,
        };
        Ok(TraceRow {
            step,
            t: state.t,
            dt,
            max_grad_sq: fields.grad_sq.iter().copied().fold(0.0, f64::max),
            v_phi: self.v1.volume(self.grid, &fields.radial)?,
            v_alpha: self
                .va
                .iter()
                .map(|t| t.volume(self.grid, &fields.radial))
                .collect::<Result<_>>()?,
            a0: weighted_area(&fields),
            a1: weighted_mean_curvature_integral(&fields),
            min_smin: fields.s_min.iter().copied().fold(f64::INFINITY, f64::min),
            max_speed: speed.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            r_min_node: fields.r.iter().copied().fold(f64::INFINITY, f64::min),
            r_max_node: fields.r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            rates,
            coarse,
        })
    }
}

/// Integrator state reused across steps.
pub struct Stepper<'a> {
    space: &'a WarpedSpace,
    grid: &'a SphereGrid,
    cfg: FlowConfig,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    coef: Vec<f64>,
    /// Rate of the current state is already in `k[0]`.
    primed: Option<RateInfo>,
}

impl<'a> Stepper<'a> {
    pub fn new(space: &'a WarpedSpace, grid: &'a SphereGrid, cfg: &FlowConfig) -> Self {
        let n = grid.node_count();
        Stepper {
            space,
            grid,
            cfg: cfg.clone(),
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            coef: vec![0.0; n],
            primed: None,
        }
    }

    /// Evaluates the rate of `state`, which the next step reuses.
    pub fn prepare(&mut self, state: &GraphState) -> Result<RateInfo> {
        let info = gamma_rate_into(self.space, self.grid, &state.gamma, &mut self.k[0], &mut self.coef)?;
        self.primed = Some(info);
        Ok(info)
    }

    pub fn next_dt(&mut self, state: &GraphState) -> Result<f64> {
        let info = match self.primed {
            Some(i) => i,
            None => self.prepare(state)?,
        };
        Ok(match self.cfg.dt_policy {
            DtPolicy::Fixed { dt } => dt,
            DtPolicy::Adaptive { c_cfl } => adaptive_dt(self.grid, info.floor, self.cfg.scheme, c_cfl),
        })
    }

    /// Advances `state` by `dt`; `step` labels instability diagnostics.
    pub fn step(&mut self, state: &mut GraphState, dt: f64, step: usize) -> Result<()> {
        if state.gamma.len() != self.grid.node_count() {
            return Err(Error::Shape {
                expected: self.grid.node_count(),
                got: state.gamma.len(),
            });
        }
        if self.primed.is_none() {
            self.prepare(state)?;
        }
        self.primed = None;
        match self.cfg.scheme {
            Scheme::Rk4 => self.rk4(state, dt)?,
            Scheme::Imex => self.imex(state, dt)?,
        }
        if let Some(node) = state.gamma.iter().position(|v| !v.is_finite()) {
            return Err(Error::Instability { node, step });
        }
        state.t += dt;
        Ok(())
    }

    fn stage_rate(&mut self, which: usize) -> Result<()> {
        let (k, coef) = (&mut self.k[which], &mut self.coef);
        gamma_rate_into(self.space, self.grid, &self.tmp, k, coef).map(|_| ())
    }

    fn rk4(&mut self, state: &mut GraphState, dt: f64) -> Result<()> {
        let g = &state.gamma;
        for (stage, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..g.len() {
                self.tmp[i] = g[i] + frac * dt * self.k[stage - 1][i];
            }
            self.stage_rate(stage)?;
        }
        for i in 0..state.gamma.len() {
            state.gamma[i] +=
                dt / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        Ok(())
    }

    /// `(I − dt A L) γⁿ⁺¹ = γⁿ + dt (rate(γⁿ) − A L γⁿ)` with `A = 1/(φφ'ω)` lagged.
    fn imex(&mut self, state: &mut GraphState, dt: f64) -> Result<()> {
        let g = state.gamma.clone();
        let lap = self.grid.laplacian_stencil();
        let rhs: Vec<f64> = (0..g.len())
            .map(|i| g[i] + dt * (self.k[0][i] - self.coef[i] * lap.apply(&g, i)))
            .collect();
        let coef = self.coef.clone();
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = x[i] - dt * coef[i] * lap.apply(x, i);
            }
        };
        let diag: Vec<f64> = (0..g.len())
            .map(|i| 1.0 - dt * coef[i] * lap.diagonal(i))
            .collect();
        state.gamma = bicgstab(apply, &rhs, &diag, &g, 1e-14, 500)?;
        Ok(())
    }
}

/// Jacobi-preconditioned BiCGSTAB.
fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    diag: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| compensated_sum(a.iter().zip(c).map(|(x, y)| x * y));
    let mut x = x0.to_vec();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = (0..n).map(|i| b[i] - ax[i]).collect();
    let r_hat = r.clone();
    let b_norm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt();
    for it in 0..max_iter {
        if res <= tol * b_norm {
            return Ok(x);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            return Err(Error::Solver {
                residual: res / b_norm,
                iterations: it,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] / diag[i];
        }
        apply(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
            z[i] = s[i] / diag[i];
        }
        apply(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = dot(&r, &r).sqrt();
        if omega == 0.0 && res > tol * b_norm {
            return Err(Error::Solver {
                residual: res / b_norm,
                iterations: it + 1,
            });
        }
    }
    if res <= tol * b_norm {
        return Ok(x);
    }
    Err(Error::Solver {
        residual: res / b_norm,
        iterations: max_iter,
    })
}

/// `β̂ = 2(n−1) / max(φφ'ω)` over the radial slab and tilt of the initial data.
pub fn beta_hat(space: &WarpedSpace, grid: &SphereGrid, state: &GraphState) -> Result<f64> {
    let radial = radial_fields(space, &state.gamma)?;
    let gs = grid.gradient_sq(&state.gamma)?;
    let omega_max = gs.iter().fold(1.0f64, |m, g| m.max((1.0 + g).sqrt()));
    let s_lo = radial.iter().map(|x| x.s).fold(f64::INFINITY, f64::min);
    let s_hi = radial.iter().map(|x| x.s).fold(f64::NEG_INFINITY, f64::max);
    let samples = 200;
    let mut pp_max = 0.0f64;
    for k in 0..=samples {
        let s = s_lo + (s_hi - s_lo) * k as f64 / samples as f64;
        let j = space.phi_at_s(s);
        pp_max = pp_max.max(j.phi * j.d1);
    }
    Ok(2.0 * (grid.n() as f64 - 1.0) / (pp_max * omega_max))
}

/// Least-squares slope of `ln max|Dγ|²` against `t` over the final half in time.
pub fn decay_slope(steps: &[StepRecord]) -> Option<f64> {
    let t_end = steps.last()?.t;
    let t_start = steps.first()?.t;
    let mid = 0.5 * (t_start + t_end);
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .filter(|s| s.t >= mid && s.max_grad_sq > 0.0)
        .map(|s| (s.t, s.max_grad_sq.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `dμ`-weighted mean radius.
pub fn mean_radius(space: &WarpedSpace, grid: &SphereGrid, state: &GraphState) -> Result<f64> {
    let f = compute_fields(space, grid, state)?;
    Ok(f.integrate(|i| f.r[i]) / f.integrate(|_| 1.0))
}

pub fn run(
    space: &WarpedSpace,
    grid: &SphereGrid,
    state0: &GraphState,
    cfg: &FlowConfig,
    alphas: &[f64],
) -> Result<FlowTrace> {
    run_observed(space, grid, state0, cfg, alphas, &mut ())
}

pub fn run_observed(
    space: &WarpedSpace,
    grid: &SphereGrid,
    state0: &GraphState,
    cfg: &FlowConfig,
    alphas: &[f64],
    observer: &mut dyn FlowObserver,
) -> Result<FlowTrace> {
    cfg.validate()?;
    let monitor = Monitor::new(space, grid, alphas);
    let mut stepper = Stepper::new(space, grid, cfg);
    let mut state = state0.clone();
    let mut rows = Vec::new();
    let info = stepper.prepare(&state)?;
    let mut steps = vec![StepRecord {
        t: state.t,
        max_grad_sq: info.max_grad_sq,
        gamma_min: state.gamma.iter().copied().fold(f64::INFINITY, f64::min),
        gamma_max: state.gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }];
    let beta = beta_hat(space, grid, &state)?;

    let mut dt = stepper.next_dt(&state)?.min(cfg.t_max);
    let first = monitor.row(&state, 0, dt)?;
    observer.on_row(&first)?;
    let v0 = first.v_phi;
    rows.push(first);
    if cfg.snapshot_every.is_some() {
        observer.on_snapshot(0, &state)?;
    }

    let mut step = 0usize;
    let mut converged = steps[0].max_grad_sq < cfg.grad_tol;
    while !converged && state.t < cfg.t_max && cfg.max_steps.map_or(true, |m| step < m) {
        dt = stepper.next_dt(&state)?.min(cfg.t_max - state.t);
        stepper.step(&mut state, dt, step + 1)?;
        step += 1;
        let info = stepper.prepare(&state)?;
        let rec = StepRecord {
            t: state.t,
            max_grad_sq: info.max_grad_sq,
            gamma_min: state.gamma.iter().copied().fold(f64::INFINITY, f64::min),
            gamma_max: state.gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        converged = rec.max_grad_sq < cfg.grad_tol;
        steps.push(rec);
        let finished = converged || state.t >= cfg.t_max || cfg.max_steps.is_some_and(|m| step >= m);
        if step % cfg.monitors_every == 0 || finished {
            let row = monitor.row(&state, step, dt)?;
            observer.on_row(&row)?;
            rows.push(row);
        }
        if let Some(every) = cfg.snapshot_every {
            if every > 0 && (step % every == 0 || finished) {
                observer.on_snapshot(step, &state)?;
            }
        }
    }
    let r_infinity = if converged {
        Some(mean_radius(space, grid, &state)?)
    } else {
        None
    };
    let r_star = SliceProfile::new(space, 1.0)
        .ok()
        .and_then(|p| p.r_star(v0).ok());
    Ok(FlowTrace {
        alphas: alphas.to_vec(),
        rows,
        measured_decay_rate: decay_slope(&steps),
        steps,
        initial: state0.clone(),
        final_state: state,
        converged,
        r_infinity,
        r_star,
        beta_hat: beta,
        grad_tol: cfg.grad_tol,
    })
}
