//! Hypersurface geometry of radial graphs `r = r(θ)` written through `γ(θ)`.
//!
//! All tensors live in the σ-orthonormal frame of the grid, so with
//! `p = Dγ`, `Γ = D²γ` and `ω = √(1 + |p|²)`:
//! `g = φ²(σ + p pᵀ)`, `h = (φ/ω)(−Γ + φ' p pᵀ + φ' σ)`, `u = φ/ω`.

use crate::error::{Error, Result};
use crate::grid::SphereGrid;
use crate::tensor::{elementary, Sym2};
use crate::warp::{PhiJet, WarpedSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub gamma: Vec<f64>,
    pub t: f64,
}

impl GraphState {
    pub fn new(gamma: Vec<f64>) -> Self {
        GraphState { gamma, t: 0.0 }
    }

    /// Slice `r ≡ radius`.
    pub fn slice(space: &WarpedSpace, grid: &SphereGrid, radius: f64) -> Result<Self> {
        let g = space.gamma_of_r(radius)?;
        Ok(GraphState::new(vec![g; grid.node_count()]))
    }
}

/// Radial data at one node.
#[derive(Debug, Clone, Copy)]
pub struct Radial {
    pub s: f64,
    pub r: f64,
    pub jet: PhiJet,
}

/// Resolves `γ` node values to radii and warping jets, aborting on escape.
pub fn radial_fields(space: &WarpedSpace, gamma: &[f64]) -> Result<Vec<Radial>> {
    let (lo, hi) = space.gamma_range();
    gamma
        .iter()
        .enumerate()
        .map(|(node, &g)| {
            if !(g >= lo && g <= hi) {
                return Err(Error::DomainEscape {
                    node,
                    gamma: g,
                    lo,
                    hi,
                });
            }
            let s = space.s_of_gamma(g)?;
            Ok(Radial {
                s,
                r: space.r_of_s(s),
                jet: space.phi_at_s(s),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GeometryFields {
    pub n: usize,
    /// Multiplicity of the second frame direction.
    pub mult: usize,
    pub radial: Vec<Radial>,
    pub r: Vec<f64>,
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<Sym2>,
    pub grad_sq: Vec<f64>,
    pub omega: Vec<f64>,
    pub u: Vec<f64>,
    pub g: Vec<Sym2>,
    pub g_inv: Vec<Sym2>,
    pub h: Vec<Sym2>,
    /// `h^i_j = g^{ik} h_kj`, row-major.
    pub weingarten: Vec<[[f64; 2]; 2]>,
    pub mean_curvature: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub sigma3: Vec<f64>,
    /// Principal curvatures; the second entry carries multiplicity `mult`.
    pub kappa: Vec<[f64; 2]>,
    pub s_min: Vec<f64>,
    /// Quadrature weight times the area density `φⁿω`.
    pub dmu: Vec<f64>,
}

impl GeometryFields {
    pub fn node_count(&self) -> usize {
        self.r.len()
    }

    /// `∫_M f dμ`
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        crate::grid::compensated_sum((0..self.node_count()).map(|i| f(i) * self.dmu[i]))
    }

    /// Principal curvatures of node `i`, expanded and sorted.
    pub fn sorted_kappa(&self, i: usize) -> Vec<f64> {
        let k = self.kappa[i];
        let mut out = vec![k[0]];
        out.extend(std::iter::repeat(k[1]).take(self.mult));
        out.sort_by(f64::total_cmp);
        out
    }

    /// `uφ''/(φφ')` at node `i`.
    pub fn static_weight(&self, i: usize) -> f64 {
        let j = &self.radial[i].jet;
        self.u[i] * j.d2 / (j.phi * j.d1)
    }
}

pub fn compute_fields(space: &WarpedSpace, grid: &SphereGrid, state: &GraphState) -> Result<GeometryFields> {
    check_grid(space, grid, &state.gamma)?;
    let radial = radial_fields(space, &state.gamma)?;
    let d = grid.derivatives(&state.gamma)?;
    let n = grid.n();
    let mult = grid.multiplicity();
    let count = state.gamma.len();
    let mut f = GeometryFields {
        n,
        mult,
        r: radial.iter().map(|x| x.r).collect(),
        radial,
        grad: d.grad,
        hess: d.hess,
        grad_sq: Vec::with_capacity(count),
        omega: Vec::with_capacity(count),
        u: Vec::with_capacity(count),
        g: Vec::with_capacity(count),
        g_inv: Vec::with_capacity(count),
        h: Vec::with_capacity(count),
        weingarten: Vec::with_capacity(count),
        mean_curvature: Vec::with_capacity(count),
        sigma2: Vec::with_capacity(count),
        sigma3: Vec::with_capacity(count),
        kappa: Vec::with_capacity(count),
        s_min: Vec::with_capacity(count),
        dmu: Vec::with_capacity(count),
    };
    for i in 0..count {
        let j = f.radial[i].jet;
        let p = f.grad[i];
        let gs = p[0] * p[0] + p[1] * p[1];
        let omega = (1.0 + gs).sqrt();
        let u = j.phi / omega;
        let pp = Sym2::outer(p);
        let g = (j.phi * j.phi) * (Sym2::IDENTITY + pp);
        let g_inv = (1.0 / (j.phi * j.phi)) * (Sym2::IDENTITY - (1.0 / (omega * omega)) * pp);
        let h = (j.phi / omega) * (j.d1 * (Sym2::IDENTITY + pp) - f.hess[i]);
        let w = [
            [
                g_inv.a * h.a + g_inv.b * h.b,
                g_inv.a * h.b + g_inv.b * h.c,
            ],
            [
                g_inv.b * h.a + g_inv.c * h.b,
                g_inv.b * h.b + g_inv.c * h.c,
            ],
        ];
        let kappa = h.rel_eigen(&g);
        let [h1, s2, s3] = elementary(kappa, mult);
        let shift = u * j.d2 / (j.phi * j.d1);
        let s_min = if mult == 0 {
            kappa[0] - shift
        } else {
            kappa[0].min(kappa[1]) - shift
        };
        f.grad_sq.push(gs);
        f.omega.push(omega);
        f.u.push(u);
        f.g.push(g);
        f.g_inv.push(g_inv);
        f.h.push(h);
        f.weingarten.push(w);
        f.mean_curvature.push(h1);
        f.sigma2.push(s2);
        f.sigma3.push(s3);
        f.kappa.push(kappa);
        f.s_min.push(s_min);
        f.dmu.push(grid.weights()[i] * j.phi.powi(n as i32) * omega);
    }
    Ok(f)
}

fn check_grid(space: &WarpedSpace, grid: &SphereGrid, gamma: &[f64]) -> Result<()> {
    if grid.n() != space.n() {
        return Err(Error::Config(format!(
            "grid dimension {} differs from space dimension {}",
            grid.n(),
            space.n()
        )));
    }
    if gamma.len() != grid.node_count() {
        return Err(Error::Shape {
            expected: grid.node_count(),
            got: gamma.len(),
        });
    }
    Ok(())
}

/// `H = nφ'/(φω) − (Δ₀γ − pᵀΓp/ω²)/(φω)`
pub fn mean_curvature_graphform(space: &WarpedSpace, grid: &SphereGrid, state: &GraphState) -> Result<Vec<f64>> {
    check_grid(space, grid, &state.gamma)?;
    let radial = radial_fields(space, &state.gamma)?;
    let lap = grid.laplacian(&state.gamma)?;
    let n = grid.n() as f64;
    Ok((0..state.gamma.len())
        .map(|i| {
            let (p, hess) = grid.derivs_at(&state.gamma, i);
            let gs = p[0] * p[0] + p[1] * p[1];
            let omega = (1.0 + gs).sqrt();
            let j = radial[i].jet;
            (n * j.d1 - (lap[i] - hess.quad(p) / (omega * omega))) / (j.phi * omega)
        })
        .collect())
}

/// Largest `|Dγ|²` over the nodes.
pub fn closeness(grid: &SphereGrid, state: &GraphState) -> Result<f64> {
    Ok(grid
        .gradient_sq(&state.gamma)?
        .into_iter()
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalResidual {
    /// Largest `g`-norm of `∇²Φ − (φ'g − uh)` over the nodes.
    pub max_norm: f64,
    /// `∫_M (Δ_gΦ − (nφ' − uH)) dμ`
    pub trace_integral: f64,
}

/// Checks `∇²Φ = φ'g − uh` for `Φ' = φ`, differentiating `Φ` on the grid.
pub fn conformal_identity_residual(
    space: &WarpedSpace,
    grid: &SphereGrid,
    state: &GraphState,
) -> Result<ConformalResidual> {
    let f = compute_fields(space, grid, state)?;
    let table = space.radial_table(|j| j.phi);
    let potential: Vec<f64> = f
        .radial
        .iter()
        .map(|x| table.eval(x.s))
        .collect::<Result<_>>()?;
    let dp = grid.derivatives(&potential)?;
    let m = f.mult;
    let mut max_norm = 0.0f64;
    let mut trace_res = Vec::with_capacity(f.node_count());
    for i in 0..f.node_count() {
        let p = f.grad[i];
        let q = dp.grad[i];
        let j = f.radial[i].jet;
        let w2 = f.omega[i] * f.omega[i];
        let pq = p[0] * q[0] + p[1] * q[1];
        let sym = Sym2::new(2.0 * p[0] * q[0], p[0] * q[1] + p[1] * q[0], 2.0 * p[1] * q[1]);
        let christoffel = (pq / w2) * f.hess[i] + j.d1 * sym
            - (j.d1 * pq / w2) * (Sym2::IDENTITY + Sym2::outer(p));
        let hess_g = dp.hess[i] - christoffel;
        let err = hess_g - (j.d1 * f.g[i] - f.u[i] * f.h[i]);
        let mixed = f.g_inv[i].sandwich(&err);
        max_norm = max_norm.max(mixed.contract(&err, m).max(0.0).sqrt());
        let lap_g = f.g_inv[i].contract(&hess_g, m);
        trace_res.push(lap_g - (f.n as f64 * j.d1 - f.u[i] * f.mean_curvature[i]));
    }
    Ok(ConformalResidual {
        max_norm,
        trace_integral: f.integrate(|i| trace_res[i]),
    })
}
