//! Discretisations of the round sphere with covariant difference operators
//! and quadrature.
//!
//! Three layouts are supported:
//! - `circle`: `n = 1`, `N` periodic nodes, fourth-order differences;
//! - `axisym`: any `n`, fields depending on the polar angle only, nodes
//!   `ϑ_j = jπ/N` including both poles, fourth-order differences with even
//!   reflection across the poles;
//! - `latlong`: `n = 2`, cell-centred colatitudes `ϑ_j = (j + ½)π/N` and `2N`
//!   longitudes, second-order differences closed across the poles by
//!   `(−ϑ, ψ) ≡ (ϑ, ψ + π)`.
//!
//! Derivatives are returned in the orthonormal frame `(e₀, e₁)` described in
//! [`crate::tensor`]. All stencils are applied in difference form
//! `Σ c_k (f_k − f_i)`, so constant fields produce exact zeros.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Sym2;
use crate::warp::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Circle,
    Axisym,
    Latlong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub mode: GridMode,
    pub resolution: usize,
}

/// Sparse rows `Σ c_k (f[idx_k] − f[i])`, one per node.
#[derive(Debug, Clone, Default)]
pub struct Stencil {
    start: Vec<usize>,
    idx: Vec<usize>,
    coef: Vec<f64>,
}

impl Stencil {
    fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut s = Stencil {
            start: vec![0],
            idx: Vec::new(),
            coef: Vec::new(),
        };
        for (i, row) in rows.into_iter().enumerate() {
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, c) in row {
                if j == i {
                    continue;
                }
                match merged.iter_mut().find(|(k, _)| *k == j) {
                    Some(e) => e.1 += c,
                    None => merged.push((j, c)),
                }
            }
            for (j, c) in merged {
                if c != 0.0 {
                    s.idx.push(j);
                    s.coef.push(c);
                }
            }
            s.start.push(s.idx.len());
        }
        s
    }

    #[inline]
    pub fn apply(&self, f: &[f64], i: usize) -> f64 {
        let fi = f[i];
        let mut acc = 0.0;
        for k in self.start[i]..self.start[i + 1] {
            acc += self.coef[k] * (f[self.idx[k]] - fi);
        }
        acc
    }

    /// Off-diagonal entries of row `i`; the diagonal is minus their sum.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.start[i]..self.start[i + 1]).map(move |k| (self.idx[k], self.coef[k]))
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        -self.coef[self.start[i]..self.start[i + 1]].iter().sum::<f64>()
    }
}

/// Gradient and covariant Hessian of a node field in the orthonormal frame.
#[derive(Debug, Clone)]
pub struct Derivs {
    pub grad: Vec<[f64; 2]>,
    pub hess: Vec<Sym2>,
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    mode: GridMode,
    n: usize,
    resolution: usize,
    coords: Vec<[f64; 2]>,
    weights: Vec<f64>,
    cot: Vec<f64>,
    inv_sin: Vec<f64>,
    pole: Vec<bool>,
    d1: Stencil,
    d2: Stencil,
    dp: Stencil,
    dpp: Stencil,
    dmix: Stencil,
    lap: Stencil,
    spacing: f64,
}

impl SphereGrid {
    pub fn from_spec(spec: &GridSpec, n: usize) -> Result<Self> {
        Self::build(spec.mode, n, spec.resolution)
    }

    pub fn build(mode: GridMode, n: usize, resolution: usize) -> Result<Self> {
        if resolution < 8 {
            return Err(Error::Config(format!("resolution {resolution} below minimum 8")));
        }
        match mode {
            GridMode::Circle if n != 1 => {
                return Err(Error::Config("circle grids require n = 1".into()))
            }
            GridMode::Latlong if n != 2 => {
                return Err(Error::Config("latlong grids require n = 2".into()))
            }
            GridMode::Axisym if n == 0 => {
                return Err(Error::Config("axisym grids require n >= 1".into()))
            }
            _ => {}
        }
        Ok(match mode {
            GridMode::Circle => Self::circle(resolution),
            GridMode::Axisym => Self::axisym(n, resolution),
            GridMode::Latlong => Self::latlong(resolution),
        })
    }

    fn empty(mode: GridMode, n: usize, resolution: usize) -> Self {
        SphereGrid {
            mode,
            n,
            resolution,
            coords: Vec::new(),
            weights: Vec::new(),
            cot: Vec::new(),
            inv_sin: Vec::new(),
            pole: Vec::new(),
            d1: Stencil::default(),
            d2: Stencil::default(),
            dp: Stencil::default(),
            dpp: Stencil::default(),
            dmix: Stencil::default(),
            lap: Stencil::default(),
            spacing: 0.0,
        }
    }

    fn circle(nodes: usize) -> Self {
        let h = 2.0 * PI / nodes as f64;
        let mut g = Self::empty(GridMode::Circle, 1, nodes);
        let wrap = |j: isize| j.rem_euclid(nodes as isize) as usize;
        let mut d1 = Vec::new();
        let mut d2 = Vec::new();
        for j in 0..nodes {
            let ji = j as isize;
            g.coords.push([j as f64 * h, 0.0]);
            g.weights.push(h);
            d1.push(fourth_order_d1(|o| wrap(ji + o), h));
            d2.push(fourth_order_d2(|o| wrap(ji + o), h));
        }
        g.cot = vec![0.0; nodes];
        g.inv_sin = vec![1.0; nodes];
        g.pole = vec![false; nodes];
        g.d1 = Stencil::from_rows(d1);
        g.d2 = Stencil::from_rows(d2.clone());
        g.lap = Stencil::from_rows(d2);
        g.spacing = h;
        g
    }

    fn axisym(n: usize, intervals: usize) -> Self {
        let big_n = intervals;
        let h = PI / big_n as f64;
        let mut g = Self::empty(GridMode::Axisym, n, intervals);
        let reflect = |k: isize| -> usize {
            let nn = big_n as isize;
            let k = if k < 0 { -k } else { k };
            (if k > nn { 2 * nn - k } else { k }) as usize
        };
        let moments: Vec<f64> = (0..=big_n).map(|k| sin_power_moment(n - 1, k)).collect();
        let scale = sphere_area(n - 1);
        let mut d1 = Vec::new();
        let mut d2 = Vec::new();
        let mut lap = Vec::new();
        for j in 0..=big_n {
            let th = j as f64 * h;
            let ji = j as isize;
            let pole = j == 0 || j == big_n;
            g.coords.push([th, 0.0]);
            g.pole.push(pole);
            let cot = if pole { 0.0 } else { 1.0 / th.tan() };
            g.cot.push(cot);
            g.inv_sin.push(if pole { 0.0 } else { 1.0 / th.sin() });
            let r1 = fourth_order_d1(|o| reflect(ji + o), h);
            let r2 = fourth_order_d2(|o| reflect(ji + o), h);
            let mut l: Vec<(usize, f64)> = Vec::new();
            if pole {
                l.extend(r2.iter().map(|&(k, c)| (k, n as f64 * c)));
            } else {
                l.extend(r2.iter().copied());
                l.extend(r1.iter().map(|&(k, c)| (k, (n - 1) as f64 * cot * c)));
            }
            d1.push(r1);
            d2.push(r2);
            lap.push(l);

            let cj = if pole { 0.5 } else { 1.0 };
            let mut acc = 0.0;
            for (k, m) in moments.iter().enumerate() {
                let ck = if k == 0 || k == big_n { 0.5 } else { 1.0 };
                acc += ck * (PI * (k * j) as f64 / big_n as f64).cos() * m;
            }
            g.weights.push(scale * 2.0 / big_n as f64 * cj * acc);
        }
        g.d1 = Stencil::from_rows(d1);
        g.d2 = Stencil::from_rows(d2);
        g.lap = Stencil::from_rows(lap);
        g.spacing = h;
        g
    }

    fn latlong(n_theta: usize) -> Self {
        let n_psi = 2 * n_theta;
        let ht = PI / n_theta as f64;
        let hp = 2.0 * PI / n_psi as f64;
        let mut g = Self::empty(GridMode::Latlong, 2, n_theta);
        let node = |j: isize, k: isize| -> usize {
            let nt = n_theta as isize;
            let np = n_psi as isize;
            let (jj, kk) = if j < 0 {
                (-j - 1, k + np / 2)
            } else if j >= nt {
                (2 * nt - 1 - j, k + np / 2)
            } else {
                (j, k)
            };
            jj as usize * n_psi + kk.rem_euclid(np) as usize
        };
        let mut rows: [Vec<Vec<(usize, f64)>>; 6] = Default::default();
        for j in 0..n_theta {
            let th = (j as f64 + 0.5) * ht;
            let x = th.cos();
            let mut fejer = 0.0;
            for k in 1..=n_theta / 2 {
                let kk = k as f64;
                fejer += (2.0 * kk * th).cos() / (4.0 * kk * kk - 1.0);
            }
            let w_theta = 2.0 / n_theta as f64 * (1.0 - 2.0 * fejer);
            let (s, c) = (th.sin(), x);
            for k in 0..n_psi {
                let (ji, ki) = (j as isize, k as isize);
                g.coords.push([th, k as f64 * hp]);
                g.weights.push(w_theta * hp);
                g.cot.push(c / s);
                g.inv_sin.push(1.0 / s);
                g.pole.push(false);
                let d1 = vec![(node(ji + 1, ki), 0.5 / ht), (node(ji - 1, ki), -0.5 / ht)];
                let d2 = vec![(node(ji + 1, ki), 1.0 / (ht * ht)), (node(ji - 1, ki), 1.0 / (ht * ht))];
                let dp = vec![(node(ji, ki + 1), 0.5 / hp), (node(ji, ki - 1), -0.5 / hp)];
                let dpp = vec![(node(ji, ki + 1), 1.0 / (hp * hp)), (node(ji, ki - 1), 1.0 / (hp * hp))];
                let q = 0.25 / (ht * hp);
                let dm = vec![
                    (node(ji + 1, ki + 1), q),
                    (node(ji + 1, ki - 1), -q),
                    (node(ji - 1, ki + 1), -q),
                    (node(ji - 1, ki - 1), q),
                ];
                let mut lap = d2.clone();
                lap.extend(d1.iter().map(|&(i, v)| (i, v * c / s)));
                lap.extend(dpp.iter().map(|&(i, v)| (i, v / (s * s))));
                for (slot, row) in rows.iter_mut().zip([d1, d2, dp, dpp, dm, lap]) {
                    slot.push(row);
                }
            }
        }
        let [d1, d2, dp, dpp, dm, lap] = rows;
        g.d1 = Stencil::from_rows(d1);
        g.d2 = Stencil::from_rows(d2);
        g.dp = Stencil::from_rows(dp);
        g.dpp = Stencil::from_rows(dpp);
        g.dmix = Stencil::from_rows(dm);
        g.lap = Stencil::from_rows(lap);
        g.spacing = ht.min((0.5 * ht).sin() * hp);
        g
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    /// `(ϑ, ψ)` per node; `ψ = 0` on one-dimensional layouts, `ϑ` is the
    /// arc-length angle on the circle.
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn coordinate_names(&self) -> &'static [&'static str] {
        match self.mode {
            GridMode::Circle => &["theta"],
            GridMode::Axisym => &["vartheta"],
            GridMode::Latlong => &["vartheta", "psi"],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Multiplicity of the second frame direction.
    pub fn multiplicity(&self) -> usize {
        match self.mode {
            GridMode::Circle => 0,
            GridMode::Axisym => self.n - 1,
            GridMode::Latlong => 1,
        }
    }

    /// Smallest effective node spacing, used by time-step restrictions.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn laplacian_stencil(&self) -> &Stencil {
        &self.lap
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.node_count() {
            return Err(Error::Shape {
                expected: self.node_count(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Gradient and Hessian at node `i`.
    #[inline]
    pub fn derivs_at(&self, f: &[f64], i: usize) -> ([f64; 2], Sym2) {
        match self.mode {
            GridMode::Circle => {
                let f1 = self.d1.apply(f, i);
                let f2 = self.d2.apply(f, i);
                ([f1, 0.0], Sym2::diag(f2, 0.0))
            }
            GridMode::Axisym => {
                let f2 = self.d2.apply(f, i);
                if self.pole[i] {
                    ([0.0, 0.0], Sym2::diag(f2, f2))
                } else {
                    let f1 = self.d1.apply(f, i);
                    ([f1, 0.0], Sym2::diag(f2, self.cot[i] * f1))
                }
            }
            GridMode::Latlong => {
                let ft = self.d1.apply(f, i);
                let ftt = self.d2.apply(f, i);
                let fp = self.dp.apply(f, i);
                let fpp = self.dpp.apply(f, i);
                let ftp = self.dmix.apply(f, i);
                let (cot, is) = (self.cot[i], self.inv_sin[i]);
                (
                    [ft, fp * is],
                    Sym2::new(ftt, (ftp - cot * fp) * is, fpp * is * is + cot * ft),
                )
            }
        }
    }

    pub fn derivatives(&self, f: &[f64]) -> Result<Derivs> {
        self.check(f)?;
        let (grad, hess) = (0..f.len()).map(|i| self.derivs_at(f, i)).unzip();
        Ok(Derivs { grad, hess })
    }

    pub fn gradient_sq(&self, f: &[f64]) -> Result<Vec<f64>> {
        let d = self.derivatives(f)?;
        Ok(d.grad.iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect())
    }

    pub fn hessian(&self, f: &[f64]) -> Result<Vec<Sym2>> {
        Ok(self.derivatives(f)?.hess)
    }

    pub fn laplacian(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check(f)?;
        Ok((0..f.len()).map(|i| self.lap.apply(f, i)).collect())
    }

    /// `Σ f · w` with compensated summation in node order.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        self.check(f)?;
        Ok(compensated_sum(f.iter().zip(&self.weights).map(|(a, w)| a * w)))
    }

    /// Half-resolution grid whose nodes are a subset of this grid's nodes,
    /// with the fine-grid indices of those nodes. Not available on lat-long
    /// grids (cell-centred colatitudes do not nest).
    pub fn coarse(&self) -> Option<(SphereGrid, Vec<usize>)> {
        if self.resolution % 2 != 0 || self.resolution / 2 < 8 {
            return None;
        }
        let coarse = SphereGrid::build(self.mode, self.n, self.resolution / 2).ok()?;
        let idx = match self.mode {
            GridMode::Circle | GridMode::Axisym => (0..coarse.node_count()).map(|j| 2 * j).collect(),
            GridMode::Latlong => return None,
        };
        Some((coarse, idx))
    }

    /// `Δ₀|Df|² − 2|D²f|² − 2⟨Df, D(Δ₀f)⟩ − 2(n−1)|Df|²` per node.
    pub fn ricci_identity_residual(&self, f: &[f64]) -> Result<Vec<f64>> {
        let d = self.derivatives(f)?;
        let m = self.multiplicity();
        let grad_sq: Vec<f64> = d.grad.iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect();
        let lap_grad_sq = self.laplacian(&grad_sq)?;
        let lap = self.laplacian(f)?;
        let dl = self.derivatives(&lap)?;
        Ok((0..f.len())
            .map(|i| {
                let g = d.grad[i];
                let gl = dl.grad[i];
                lap_grad_sq[i]
                    - 2.0 * d.hess[i].norm_sq(m)
                    - 2.0 * (g[0] * gl[0] + g[1] * gl[1])
                    - 2.0 * (self.n as f64 - 1.0) * grad_sq[i]
            })
            .collect())
    }
}

fn fourth_order_d1(at: impl Fn(isize) -> usize, h: f64) -> Vec<(usize, f64)> {
    let c = 1.0 / (12.0 * h);
    vec![(at(-2), c), (at(-1), -8.0 * c), (at(1), 8.0 * c), (at(2), -c)]
}

fn fourth_order_d2(at: impl Fn(isize) -> usize, h: f64) -> Vec<(usize, f64)> {
    let c = 1.0 / (12.0 * h * h);
    vec![(at(-2), -c), (at(-1), 16.0 * c), (at(1), 16.0 * c), (at(2), -c)]
}

pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `∫₀^π cos(kϑ) sin^p(ϑ) dϑ`, via the Fourier expansion of `sin^p`.
pub fn sin_power_moment(p: usize, k: usize) -> f64 {
    let scale = 0.5f64.powi(2 * (p / 2) as i32);
    if p % 2 == 0 {
        let q = p / 2;
        if k == 0 {
            return scale * binomial(2 * q, q) * PI;
        }
        if k % 2 == 1 || k / 2 > q {
            return 0.0;
        }
        let l = k / 2;
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        scale * sign * binomial(2 * q, q - l) * PI
    } else {
        let q = p / 2;
        let mut acc = 0.0;
        for l in 0..=q {
            let j = 2 * l + 1;
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binomial(2 * q + 1, q - l) * sin_cos_integral(j, k);
        }
        scale * acc
    }
}

/// `∫₀^π sin(jϑ) cos(kϑ) dϑ`
fn sin_cos_integral(j: usize, k: usize) -> f64 {
    if j == k {
        return 0.0;
    }
    let term = |m: i64| -> f64 {
        if m % 2 == 0 {
            0.0
        } else {
            2.0 / m as f64
        }
    };
    0.5 * (term(j as i64 + k as i64) + term(j as i64 - k as i64))
}
