//! Weighted volumes, areas and the slice comparison profiles.

use crate::cheb::CumulativeTable;
use crate::error::{Error, Result};
use crate::graphgeom::{GeometryFields, Radial};
use crate::grid::{compensated_sum, SphereGrid};
use crate::warp::{ricci_from_jet, sphere_area, WarpedSpace};

/// `s ↦ ∫_{r_min}^{r(s)} (φ')^α φⁿ dρ`, shared by graph and slice evaluations.
#[derive(Debug, Clone)]
pub struct VolumeTable {
    alpha: f64,
    table: CumulativeTable,
}

impl VolumeTable {
    pub fn new(space: &WarpedSpace, alpha: f64) -> Self {
        let n = space.n() as i32;
        VolumeTable {
            alpha,
            table: space.radial_table(move |j| pow_alpha(j.d1, alpha) * j.phi.powi(n)),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Inner radial integral at chart parameter `s`.
    pub fn column(&self, s: f64) -> Result<f64> {
        self.table.eval(s)
    }

    /// `V_φ^α(Ω) = ∫_{𝕊ⁿ} ∫_{r_min}^{r(θ)} (φ')^α φⁿ dρ dσ`
    pub fn volume(&self, grid: &SphereGrid, radial: &[Radial]) -> Result<f64> {
        if radial.len() != grid.node_count() {
            return Err(Error::Shape {
                expected: grid.node_count(),
                got: radial.len(),
            });
        }
        let cols: Vec<f64> = radial.iter().map(|x| self.table.eval(x.s)).collect::<Result<_>>()?;
        Ok(compensated_sum(cols.iter().zip(grid.weights()).map(|(c, w)| c * w)))
    }

    fn invert(&self, column: f64) -> Result<f64> {
        self.table.invert(column)
    }

    fn total(&self) -> f64 {
        self.table.total()
    }
}

/// `x^α` with `0^α = 0` for `α > 0` and `x^0 = 1`.
fn pow_alpha(x: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else if alpha == 1.0 {
        x
    } else {
        x.powf(alpha)
    }
}

pub fn weighted_volume_alpha(
    space: &WarpedSpace,
    grid: &SphereGrid,
    state: &crate::graphgeom::GraphState,
    alpha: f64,
) -> Result<f64> {
    let radial = crate::graphgeom::radial_fields(space, &state.gamma)?;
    VolumeTable::new(space, alpha).volume(grid, &radial)
}

/// `A₀,φ = ∫_M φ' dμ`
pub fn weighted_area(fields: &GeometryFields) -> f64 {
    fields.integrate(|i| fields.radial[i].jet.d1)
}

/// `A₁,φ = ∫_M φ' H dμ`
pub fn weighted_mean_curvature_integral(fields: &GeometryFields) -> f64 {
    fields.integrate(|i| fields.radial[i].jet.d1 * fields.mean_curvature[i])
}

/// Slice tables for one weight exponent `α`.
#[derive(Debug, Clone)]
pub struct SliceProfile {
    space: WarpedSpace,
    alpha: f64,
    v1: VolumeTable,
    va: VolumeTable,
    omega_n: f64,
    areas_increasing: bool,
}

impl SliceProfile {
    pub fn new(space: &WarpedSpace, alpha: f64) -> Result<Self> {
        let v1 = VolumeTable::new(space, 1.0);
        let va = VolumeTable::new(space, alpha);
        let (s_lo, s_hi) = space.s_range();
        let samples = 2000;
        let mut prev: Option<[f64; 4]> = None;
        let mut areas_increasing = true;
        let omega_n = sphere_area(space.n());
        let profile = SliceProfile {
            space: space.clone(),
            alpha,
            v1,
            va,
            omega_n,
            areas_increasing: true,
        };
        for k in 0..=samples {
            let s = s_lo + (s_hi - s_lo) * k as f64 / samples as f64;
            let cur = [
                profile.v1.column(s)?,
                profile.va.column(s)?,
                profile.a0_at_s(s),
                profile.a1_at_s(s),
            ];
            if let Some(p) = prev {
                if !(cur[0] > p[0] && cur[1] > p[1]) {
                    return Err(Error::State(format!(
                        "volume profile not strictly increasing near r = {}",
                        space.r_of_s(s)
                    )));
                }
                if !(cur[2] > p[2] && cur[3] > p[3]) {
                    areas_increasing = false;
                }
            }
            prev = Some(cur);
        }
        Ok(SliceProfile {
            areas_increasing,
            ..profile
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn areas_increasing(&self) -> bool {
        self.areas_increasing
    }

    fn a0_at_s(&self, s: f64) -> f64 {
        let j = self.space.phi_at_s(s);
        self.omega_n * j.phi.powi(self.space.n() as i32) * j.d1
    }

    fn a1_at_s(&self, s: f64) -> f64 {
        let j = self.space.phi_at_s(s);
        let n = self.space.n();
        n as f64 * self.omega_n * j.phi.powi(n as i32 - 1) * j.d1 * j.d1
    }

    pub fn volume_at(&self, r: f64) -> Result<f64> {
        Ok(self.omega_n * self.v1.column(self.space.s_of_r(r)?)?)
    }

    pub fn volume_alpha_at(&self, r: f64) -> Result<f64> {
        Ok(self.omega_n * self.va.column(self.space.s_of_r(r)?)?)
    }

    /// `A₀,φ(S(r)) = ω_n φⁿ φ'`
    pub fn a0_at(&self, r: f64) -> Result<f64> {
        Ok(self.a0_at_s(self.space.s_of_r(r)?))
    }

    /// `A₁,φ(S(r)) = n ω_n φⁿ⁻¹ (φ')²`
    pub fn a1_at(&self, r: f64) -> Result<f64> {
        Ok(self.a1_at_s(self.space.s_of_r(r)?))
    }

    fn range_err(x: f64, hi: f64) -> Error {
        Error::Range { value: x, lo: 0.0, hi }
    }

    /// Chart parameter of the slice with `V_φ = x`.
    fn s_star(&self, x: f64) -> Result<f64> {
        let hi = self.omega_n * self.v1.total();
        self.v1
            .invert(x / self.omega_n)
            .map_err(|_| Self::range_err(x, hi))
    }

    /// Radius of the slice enclosing weighted volume `x`.
    pub fn r_star(&self, x: f64) -> Result<f64> {
        Ok(self.space.r_of_s(self.s_star(x)?))
    }

    /// `ξ_α(x) = V_φ^α(r*)` with `V_φ(r*) = x`.
    pub fn xi(&self, x: f64) -> Result<f64> {
        Ok(self.omega_n * self.va.column(self.s_star(x)?)?)
    }

    /// `χ_{i,α}(x) = A_{i,φ}(r*)` with `V_φ^α(r*) = x`.
    pub fn chi(&self, i: usize, x: f64) -> Result<f64> {
        let hi = self.omega_n * self.va.total();
        let s = self
            .va
            .invert(x / self.omega_n)
            .map_err(|_| Self::range_err(x, hi))?;
        match i {
            0 => Ok(self.a0_at_s(s)),
            1 => Ok(self.a1_at_s(s)),
            _ => Err(Error::Config(format!("chi index {i} must be 0 or 1"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinkowskiResiduals {
    pub first: f64,
    /// Requires `n ≥ 2`.
    pub second: Option<f64>,
    /// The `k = 2` identity, requires `n ≥ 3`.
    pub third: Option<f64>,
}

/// `((φ')² − φφ'' − 1)/φ²`
fn mixed_curvature(fields: &GeometryFields, i: usize) -> f64 {
    let j = &fields.radial[i].jet;
    (j.convexity_gap() - 1.0) / (j.phi * j.phi)
}

pub fn minkowski_residuals(fields: &GeometryFields) -> MinkowskiResiduals {
    let n = fields.n as f64;
    let jet = |i: usize| fields.radial[i].jet;
    let first = fields.integrate(|i| n * jet(i).d1 - fields.u[i] * fields.mean_curvature[i]);
    let second = (fields.n >= 2).then(|| {
        fields.integrate(|i| {
            let j = jet(i);
            let u = fields.u[i];
            (n - 1.0) * j.d1 * fields.mean_curvature[i]
                - 2.0 * fields.sigma2[i] * u
                - u * (n - 1.0) * mixed_curvature(fields, i) * (1.0 - u * u / (j.phi * j.phi))
        })
    });
    let third = (fields.n >= 3).then(|| {
        fields.integrate(|i| {
            let j = jet(i);
            let u = fields.u[i];
            let p = fields.grad[i];
            let gi = fields.g_inv[i];
            let raised_h = gi.sandwich(&fields.h[i]);
            let newton = fields.mean_curvature[i] * gi.quad(p) - raised_h.quad(p);
            (n - 2.0) * j.d1 * fields.sigma2[i]
                - 3.0 * u * fields.sigma3[i]
                - (n - 2.0) * mixed_curvature(fields, i) * u * j.phi * j.phi * newton
        })
    });
    MinkowskiResiduals {
        first,
        second,
        third,
    }
}

/// Surface-integral side of the first-variation formulas for a normal speed `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationRates {
    pub volume_alpha: Vec<f64>,
    pub a0: f64,
    pub a1: f64,
}

/// `Δ_g φ'` on a graph.
pub fn laplacian_phi_prime(fields: &GeometryFields, i: usize) -> f64 {
    let j = &fields.radial[i].jet;
    let u = fields.u[i];
    let n = fields.n as f64;
    (j.phi * j.d3 - j.d1 * j.d2) * (j.phi * j.phi - u * u) / j.phi.powi(3)
        + j.d2 / j.phi * (n * j.d1 - u * fields.mean_curvature[i])
}

/// `Ric(ν, ν)` of the ambient space along a graph.
pub fn ricci_normal(fields: &GeometryFields, i: usize) -> f64 {
    let j = &fields.radial[i].jet;
    let ric = ricci_from_jet(fields.n, j);
    let u = fields.u[i];
    ric.tangential + (fields.n as f64 - 1.0) * mixed_curvature(fields, i) * u * u / (j.phi * j.phi)
}

pub fn variation_rates(fields: &GeometryFields, speed: &[f64], alphas: &[f64]) -> VariationRates {
    let volume_alpha = alphas
        .iter()
        .map(|&a| fields.integrate(|i| pow_alpha(fields.radial[i].jet.d1, a) * speed[i]))
        .collect();
    let a0 = fields.integrate(|i| {
        let j = &fields.radial[i].jet;
        (fields.u[i] * j.d2 / j.phi + j.d1 * fields.mean_curvature[i]) * speed[i]
    });
    let a1 = fields.integrate(|i| {
        let j = &fields.radial[i].jet;
        let h = fields.mean_curvature[i];
        (fields.u[i] * j.d2 / j.phi * h - laplacian_phi_prime(fields, i) + 2.0 * j.d1 * fields.sigma2[i]
            - j.d1 * ricci_normal(fields, i))
            * speed[i]
    });
    VariationRates {
        volume_alpha,
        a0,
        a1,
    }
}
