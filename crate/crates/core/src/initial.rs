//! Initial graphs: perturbed slices, stored snapshots and seeded random ensembles.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgeom::{closeness, compute_fields, GraphState};
use crate::grid::{GridMode, SphereGrid};
use crate::monitors::epsilon0_bound;
use crate::warp::WarpedSpace;

/// One perturbation mode added to `γ`. Negative `m` selects `sin(|m|ψ)`; on
/// the circle `m < 0` selects `sin(lθ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub l: usize,
    #[serde(default)]
    pub m: i64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    /// Highest degree drawn.
    pub l_max: usize,
    /// Upper bound on `max|γ − γ_base|`.
    pub amplitude: f64,
    /// Draw `r_base` uniformly from this interval instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_base_range: Option<[f64; 2]>,
    #[serde(default)]
    pub static_convex: bool,
    /// Require `max|Dγ|² ≤ ε₀(R)` with `R` the largest radius of the graph.
    #[serde(default)]
    pub within_epsilon0: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_closeness: Option<f64>,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_base: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbation: Vec<Mode>,
    /// A `gamma_<step>.csv` file whose last column is `γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSpec>,
}

/// `P_l^m(x)` without the Condon–Shortley phase.
pub fn assoc_legendre(l: usize, m: usize, x: f64) -> f64 {
    if m > l {
        return 0.0;
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 0..m {
        pmm *= (2 * k + 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut p1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return p1;
    }
    let mut p0 = pmm;
    for ll in (m + 2)..=l {
        let p2 = ((2 * ll - 1) as f64 * x * p1 - (ll + m - 1) as f64 * p0) / (ll - m) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Node values of a single basis function.
pub fn mode_field(grid: &SphereGrid, l: usize, m: i64) -> Result<Vec<f64>> {
    let ma = m.unsigned_abs() as usize;
    match grid.mode() {
        GridMode::Circle => Ok(grid
            .coords()
            .iter()
            .map(|c| {
                let a = l as f64 * c[0];
                if m < 0 {
                    a.sin()
                } else {
                    a.cos()
                }
            })
            .collect()),
        GridMode::Axisym => {
            if m != 0 {
                return Err(Error::Config(format!("axisymmetric grids take m = 0 only, got m = {m}")));
            }
            Ok(grid.coords().iter().map(|c| assoc_legendre(l, 0, c[0].cos())).collect())
        }
        GridMode::Latlong => {
            if ma > l {
                return Err(Error::Config(format!("mode (l, m) = ({l}, {m}) needs |m| <= l")));
            }
            Ok(grid
                .coords()
                .iter()
                .map(|c| {
                    let ang = ma as f64 * c[1];
                    assoc_legendre(l, ma, c[0].cos()) * if m < 0 { ang.sin() } else { ang.cos() }
                })
                .collect())
        }
    }
}

fn base_gamma(space: &WarpedSpace, r_base: f64) -> Result<f64> {
    let lo = space.gamma_chart_r_lo();
    if !(r_base >= lo && r_base <= space.r_max()) {
        return Err(Error::Config(format!(
            "r_base = {r_base} outside the working interval [{lo}, {}]",
            space.r_max()
        )));
    }
    space.gamma_of_r(r_base)
}

fn check_in_range(space: &WarpedSpace, gamma: &[f64]) -> Result<()> {
    let (lo, hi) = space.gamma_range();
    if let Some((node, g)) = gamma.iter().enumerate().find(|(_, g)| !(**g >= lo && **g <= hi)) {
        let r = space.r_of_gamma(g.clamp(lo, hi)).unwrap_or(f64::NAN);
        return Err(Error::Config(format!(
            "initial graph leaves the working interval at node {node} (gamma = {g}, near r = {r})"
        )));
    }
    Ok(())
}

/// Reads the last column of a snapshot CSV with a header row.
pub fn read_snapshot(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().last() != Some("gamma") {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "last column must be gamma".into(),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = rec.iter().last().unwrap_or("");
        let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            line: k + 2,
            message: format!("cannot parse {field:?} as a number"),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Deterministic initial state; `seed` is used only for random specs.
pub fn build_initial(space: &WarpedSpace, grid: &SphereGrid, spec: &InitialSpec, seed: u64) -> Result<GraphState> {
    let given = [spec.snapshot.is_some(), spec.random.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given > 1 {
        return Err(Error::Config("choose at most one of snapshot and random".into()));
    }
    if let Some(path) = &spec.snapshot {
        let gamma = read_snapshot(path)?;
        if gamma.len() != grid.node_count() {
            return Err(Error::Config(format!(
                "snapshot has {} nodes, grid has {}",
                gamma.len(),
                grid.node_count()
            )));
        }
        check_in_range(space, &gamma)?;
        return Ok(GraphState::new(gamma));
    }
    if let Some(rs) = &spec.random {
        return Ok(random_graph(space, grid, spec.r_base, rs, seed, 0)?.0);
    }
    let r_base = spec
        .r_base
        .ok_or_else(|| Error::Config("initial data needs r_base, snapshot or random".into()))?;
    let g0 = base_gamma(space, r_base)?;
    let mut gamma = vec![g0; grid.node_count()];
    for m in &spec.perturbation {
        if !m.amplitude.is_finite() {
            return Err(Error::Config("perturbation amplitude must be finite".into()));
        }
        let f = mode_field(grid, m.l, m.m)?;
        for (g, v) in gamma.iter_mut().zip(f) {
            *g += m.amplitude * v;
        }
    }
    check_in_range(space, &gamma)?;
    Ok(GraphState::new(gamma))
}

fn admissible_modes(grid: &SphereGrid, l_max: usize) -> Vec<(usize, i64)> {
    let mut out = Vec::new();
    for l in 1..=l_max {
        match grid.mode() {
            GridMode::Circle => {
                out.push((l, 0));
                out.push((l, -1));
            }
            GridMode::Axisym => out.push((l, 0)),
            GridMode::Latlong => {
                for m in -(l as i64)..=(l as i64) {
                    out.push((l, m));
                }
            }
        }
    }
    out
}

/// Member `index` of the seeded ensemble, with the number of draws it took.
pub fn random_graph(
    space: &WarpedSpace,
    grid: &SphereGrid,
    r_base: Option<f64>,
    spec: &RandomSpec,
    seed: u64,
    index: u64,
) -> Result<(GraphState, usize)> {
    if spec.l_max == 0 || !(spec.amplitude > 0.0) {
        return Err(Error::Config("random graphs need l_max >= 1 and a positive amplitude".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let modes = admissible_modes(grid, spec.l_max);
    let fields: Vec<Vec<f64>> = modes
        .iter()
        .map(|&(l, m)| mode_field(grid, l, m))
        .collect::<Result<_>>()?;
    for attempt in 1..=spec.max_attempts {
        let r = match (spec.r_base_range, r_base) {
            (Some([a, b]), _) => rng.random_range(a..=b),
            (None, Some(r)) => r,
            (None, None) => return Err(Error::Config("random graphs need r_base or r_base_range".into())),
        };
        let g0 = base_gamma(space, r)?;
        let mut pert = vec![0.0; grid.node_count()];
        for ((l, _), f) in modes.iter().zip(&fields) {
            let c = rng.random_range(-1.0..=1.0) / ((1 + l) * (1 + l)) as f64;
            for (p, v) in pert.iter_mut().zip(f) {
                *p += c * v;
            }
        }
        let peak = pert.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let target = spec.amplitude * rng.random_range(0.05..=1.0);
        if peak == 0.0 {
            continue;
        }
        let gamma: Vec<f64> = pert.iter().map(|p| g0 + p * target / peak).collect();
        if check_in_range(space, &gamma).is_err() {
            continue;
        }
        let state = GraphState::new(gamma);
        if accepts(space, grid, &state, spec)? {
            return Ok((state, attempt));
        }
    }
    Err(Error::Config(format!(
        "no admissible random graph after {} attempts",
        spec.max_attempts
    )))
}

fn accepts(space: &WarpedSpace, grid: &SphereGrid, state: &GraphState, spec: &RandomSpec) -> Result<bool> {
    let eps = closeness(grid, state)?;
    if spec.max_closeness.is_some_and(|m| eps > m) {
        return Ok(false);
    }
    if !(spec.static_convex || spec.within_epsilon0) {
        return Ok(true);
    }
    let f = compute_fields(space, grid, state)?;
    if spec.static_convex && f.s_min.iter().any(|s| *s < 0.0) {
        return Ok(false);
    }
    if spec.within_epsilon0 {
        let r_hi = f.r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if eps > epsilon0_bound(space, r_hi.min(space.r_max()))? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_closed_forms() {
        for &x in &[-0.9, -0.3, 0.0, 0.4, 0.77] {
            let s = (1.0f64 - x * x).sqrt();
            let cases = [
                (0, 0, 1.0),
                (1, 0, x),
                (2, 0, 0.5 * (3.0 * x * x - 1.0)),
                (3, 0, 0.5 * (5.0 * x * x * x - 3.0 * x)),
                (1, 1, s),
                (2, 1, 3.0 * x * s),
                (2, 2, 3.0 * s * s),
                (3, 2, 15.0 * x * s * s),
                (3, 3, 15.0 * s * s * s),
            ];
            for (l, m, want) in cases {
                assert!((assoc_legendre(l, m, x) - want).abs() < 1e-14, "P_{l}^{m}({x})");
            }
        }
    }

    #[test]
    fn perturbed_slice() {
        let space = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
        let grid = SphereGrid::build(GridMode::Axisym, 2, 16).unwrap();
        let spec = InitialSpec {
            r_base: Some(1.0),
            perturbation: vec![Mode { l: 1, m: 0, amplitude: 0.05 }],
            ..Default::default()
        };
        let st = build_initial(&space, &grid, &spec, 0).unwrap();
        let g0 = space.gamma_of_r(1.0).unwrap();
        for (g, c) in st.gamma.iter().zip(grid.coords()) {
            assert!((g - g0 - 0.05 * c[0].cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_out_of_range() {
        let space = WarpedSpace::hyperbolic(2, 1.0, 0.5, 3.0).unwrap();
        let grid = SphereGrid::build(GridMode::Axisym, 2, 16).unwrap();
        let spec = InitialSpec {
            r_base: Some(0.2),
            ..Default::default()
        };
        assert!(matches!(build_initial(&space, &grid, &spec, 0), Err(Error::Config(_))));
        let spec = InitialSpec {
            r_base: Some(0.6),
            perturbation: vec![Mode { l: 2, m: 0, amplitude: 1.0 }],
            ..Default::default()
        };
        assert!(matches!(build_initial(&space, &grid, &spec, 0), Err(Error::Config(_))));
        let grid = SphereGrid::build(GridMode::Axisym, 2, 16).unwrap();
        let spec = InitialSpec {
            r_base: Some(1.0),
            perturbation: vec![Mode { l: 2, m: 1, amplitude: 0.01 }],
            ..Default::default()
        };
        assert!(matches!(build_initial(&space, &grid, &spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn latlong_modes_are_harmonic_shaped() {
        let grid = SphereGrid::build(GridMode::Latlong, 2, 32).unwrap();
        let f = mode_field(&grid, 2, -1).unwrap();
        for (v, c) in f.iter().zip(grid.coords()) {
            let want = 3.0 * c[0].cos() * c[0].sin() * c[1].sin();
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn random_graphs_are_seeded_and_filtered() {
        let space = WarpedSpace::schwarzschild(2, 1.0, None, 8.0).unwrap();
        let grid = SphereGrid::build(GridMode::Axisym, 2, 64).unwrap();
        let r0 = space.r_min();
        let spec = RandomSpec {
            l_max: 4,
            amplitude: 0.02,
            r_base_range: Some([r0 + 0.3, r0 + 0.6]),
            static_convex: true,
            within_epsilon0: true,
            max_closeness: None,
            max_attempts: 500,
        };
        let (a, _) = random_graph(&space, &grid, None, &spec, 7, 3).unwrap();
        let (b, _) = random_graph(&space, &grid, None, &spec, 7, 3).unwrap();
        let (c, _) = random_graph(&space, &grid, None, &spec, 7, 4).unwrap();
        assert_eq!(a.gamma, b.gamma);
        assert_ne!(a.gamma, c.gamma);
        let f = compute_fields(&space, &grid, &a).unwrap();
        assert!(f.s_min.iter().all(|s| *s >= 0.0));
        let r_hi = f.r.iter().copied().fold(0.0, f64::max);
        assert!(closeness(&grid, &a).unwrap() <= epsilon0_bound(&space, r_hi).unwrap());
    }
}
