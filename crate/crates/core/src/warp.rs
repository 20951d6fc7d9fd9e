//! Rotationally symmetric ambient spaces `dr² + φ(r)² σ` over the round sphere.
//!
//! A [`WarpedSpace`] owns the warping function (closed form, a Schwarzschild-type
//! throat resolved through a tabulated `r ↔ λ` map, or a user tabulation), the
//! working slab `[r_min, r_max]`, and the `γ` chart with `dγ/dr = 1/φ`.
//!
//! Throat families are parametrised by `τ` with `λ = s₀ + τ²`; in that variable
//! `dr/dτ = 2/√q(τ²)` is smooth up to the horizon, so every radial table of a
//! throat space is built in `τ` and all derivatives of `λ` come from closed forms.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cheb::CumulativeTable;
use crate::error::{Error, Result};

/// Warping function and its first three radial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiJet {
    pub phi: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl PhiJet {
    pub fn as_array(&self) -> [f64; 4] {
        [self.phi, self.d1, self.d2, self.d3]
    }

    /// `(φ')² − φφ''`
    pub fn convexity_gap(&self) -> f64 {
        self.d1 * self.d1 - self.phi * self.d2
    }
}

/// Ambient family as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Euclidean,
    Sphere { c: f64 },
    Hyperbolic { c: f64 },
    Schwarzschild { m: f64 },
    AdsSchwarzschild { m: f64, kappa: f64 },
    /// Whitespace-separated records `r φ φ' φ'' φ'''` with increasing `r`.
    Custom { path: String },
}

/// Serializable description of a working space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub n: usize,
    pub family: Family,
    /// Defaults to `r₀` for throat families and `0` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    /// Alternative to `r_max`: width of the slab above `r_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_width: Option<f64>,
    /// Radius where `γ = 0`; defaults to the lower end of the `γ` chart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ref: Option<f64>,
}

type ProfileFn = dyn Fn(f64) -> PhiJet + Send + Sync;

#[derive(Clone)]
enum Profile {
    Euclidean,
    Sphere { k: f64 },
    Hyperbolic { k: f64 },
    Throat(Throat),
    Custom(Arc<ProfileFn>),
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile::Euclidean => write!(f, "Euclidean"),
            Profile::Sphere { k } => write!(f, "Sphere(k={k})"),
            Profile::Hyperbolic { k } => write!(f, "Hyperbolic(k={k})"),
            Profile::Throat(t) => write!(f, "Throat(m={}, kappa={}, s0={})", t.m, t.kappa, t.s0),
            Profile::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// `λ' = √(1 + κ²λ² − 2mλ^{1−n})`, parametrised by `λ = s₀ + τ²`.
#[derive(Clone, Debug)]
struct Throat {
    n: usize,
    m: f64,
    kappa: f64,
    s0: f64,
    /// `τ ↦ r`; absent only while the throat is being assembled.
    r_of_tau: Option<CumulativeTable>,
}

impl Throat {
    fn new(n: usize, m: f64, kappa: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("Schwarzschild-type families need n >= 2".into()));
        }
        if !(m > 0.0) || !(kappa >= 0.0) {
            return Err(Error::Config("mass must be positive and kappa non-negative".into()));
        }
        let nm1 = (n - 1) as f64;
        let f = |s: f64| 1.0 + kappa * kappa * s * s - 2.0 * m * s.powf(-nm1);
        let s0 = if kappa == 0.0 {
            (2.0 * m).powf(1.0 / nm1)
        } else {
            let (mut lo, mut hi) = (1e-12f64, (2.0 * m).powf(1.0 / nm1));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        Ok(Throat {
            n,
            m,
            kappa,
            s0,
            r_of_tau: None,
        })
    }

    /// `f(s₀ + x) / x`, evaluated without cancellation.
    fn q(&self, x: f64) -> f64 {
        let nm1 = (self.n - 1) as f64;
        let k2 = self.kappa * self.kappa;
        let a = 1.0 + k2 * self.s0 * self.s0;
        if x <= 0.0 {
            return 2.0 * k2 * self.s0 + a * nm1 / self.s0;
        }
        let tail = -(-nm1 * (x / self.s0).ln_1p()).exp_m1();
        (k2 * (2.0 * self.s0 * x + x * x) + a * tail) / x
    }

    fn dr_dtau(&self, tau: f64) -> f64 {
        2.0 / self.q(tau * tau).sqrt()
    }

    fn jet(&self, tau: f64) -> PhiJet {
        let lam = self.s0 + tau * tau;
        let n = self.n as f64;
        let k2 = self.kappa * self.kappa;
        let d1 = tau.abs() * self.q(tau * tau).sqrt();
        let d2 = k2 * lam + (n - 1.0) * self.m * lam.powf(-n);
        let d3 = (k2 - n * (n - 1.0) * self.m * lam.powf(-n - 1.0)) * d1;
        PhiJet {
            phi: lam,
            d1,
            d2,
            d3,
        }
    }

    /// `λ(r₀)` where `(λ')² − λλ'' = 1 − m(n+1)λ^{1−n}` vanishes.
    fn lambda_r0(&self) -> f64 {
        (self.m * (self.n as f64 + 1.0)).powf(1.0 / (self.n as f64 - 1.0))
    }
}

/// Cubic Hermite interpolation of a tabulated warping function.
struct HermiteProfile {
    r: Vec<f64>,
    v: Vec<[f64; 4]>,
}

impl HermiteProfile {
    fn eval(&self, r: f64) -> PhiJet {
        let k = self
            .r
            .partition_point(|&x| x <= r)
            .saturating_sub(1)
            .min(self.r.len() - 2);
        let (x0, x1) = (self.r[k], self.r[k + 1]);
        let h = x1 - x0;
        let t = ((r - x0) / h).clamp(0.0, 1.0);
        let (a, b) = (&self.v[k], &self.v[k + 1]);
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        let herm = |i: usize| h00 * a[i] + h10 * h * a[i + 1] + h01 * b[i] + h11 * h * b[i + 1];
        PhiJet {
            phi: herm(0),
            d1: herm(1),
            d2: herm(2),
            d3: (1.0 - t) * a[3] + t * b[3],
        }
    }

    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message,
            };
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| parse_err(e.to_string())))
                .collect::<Result<_>>()?;
            if vals.len() != 5 {
                return Err(parse_err(format!("expected 5 columns, found {}", vals.len())));
            }
            if let Some(&last) = r.last() {
                if vals[0] <= last {
                    return Err(parse_err("r must be strictly increasing".into()));
                }
            }
            r.push(vals[0]);
            v.push([vals[1], vals[2], vals[3], vals[4]]);
        }
        if r.len() < 2 {
            return Err(Error::Config(format!("{} holds fewer than two records", path.display())));
        }
        Ok(HermiteProfile { r, v })
    }
}

#[derive(Debug, Clone)]
struct GammaChart {
    table: CumulativeTable,
    offset: f64,
    r_lo: f64,
    r_ref: f64,
}

/// Radial and tangential Ricci eigenvalues and the scalar curvature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RicciScalar {
    pub radial: f64,
    pub tangential: f64,
    pub scalar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticityReport {
    pub is_substatic: bool,
    pub is_static: bool,
    pub c0: f64,
    pub c0_max_deviation: f64,
    pub max_residual: f64,
    pub tolerance: f64,
    pub admissible: bool,
    pub min_convexity_gap: f64,
    pub max_convexity_gap: f64,
    pub phi_dd_positive: bool,
}

/// An admissible ambient space restricted to a working slab.
#[derive(Debug, Clone)]
pub struct WarpedSpace {
    n: usize,
    family: Family,
    profile: Profile,
    r_min: f64,
    r_max: f64,
    s_lo: f64,
    s_hi: f64,
    c0: f64,
    gamma: Option<GammaChart>,
}

const STATIC_TOL: f64 = 1e-8;
const SAMPLES: usize = 2001;

impl WarpedSpace {
    pub fn from_spec(spec: &SpaceSpec) -> Result<Self> {
        if spec.n == 0 {
            return Err(Error::Config("sphere dimension n must be >= 1".into()));
        }
        let n = spec.n;
        let (profile, c0) = match &spec.family {
            Family::Euclidean => (Profile::Euclidean, 0.0),
            Family::Sphere { c } => {
                if !(*c > 0.0) {
                    return Err(Error::Config("sphere curvature c must be positive".into()));
                }
                (Profile::Sphere { k: c.sqrt() }, 0.0)
            }
            Family::Hyperbolic { c } => {
                if !(*c > 0.0) {
                    return Err(Error::Config("hyperbolic parameter c must be positive".into()));
                }
                (Profile::Hyperbolic { k: c.sqrt() }, 0.0)
            }
            Family::Schwarzschild { m } => {
                (Profile::Throat(Throat::new(n, *m, 0.0)?), m * (n as f64 + 1.0))
            }
            Family::AdsSchwarzschild { m, kappa } => {
                (Profile::Throat(Throat::new(n, *m, *kappa)?), m * (n as f64 + 1.0))
            }
            Family::Custom { path } => {
                let h = HermiteProfile::load(Path::new(path))?;
                let (lo, hi) = (h.r[0], *h.r.last().unwrap());
                let r_min = spec.r_min.unwrap_or(lo);
                let r_max = match (spec.r_max, spec.r_width) {
                    (None, None) => hi,
                    _ => resolve_r_max(spec, r_min)?,
                };
                if r_min < lo || r_max > hi {
                    return Err(Error::Config(format!(
                        "slab [{r_min}, {r_max}] exceeds tabulated range [{lo}, {hi}]"
                    )));
                }
                let f = move |r: f64| h.eval(r);
                return Self::assemble(
                    n,
                    spec.family.clone(),
                    Profile::Custom(Arc::new(f)),
                    r_min,
                    r_max,
                    spec.r_ref,
                    None,
                );
            }
        };
        let (r_min, r_max) = match &profile {
            Profile::Throat(t) => {
                let r_min = match spec.r_min {
                    Some(r) => r,
                    None => throat_r0(t),
                };
                (r_min, resolve_r_max(spec, r_min)?)
            }
            _ => {
                let r_min = spec.r_min.unwrap_or(0.0);
                (r_min, resolve_r_max(spec, r_min)?)
            }
        };
        Self::assemble(n, spec.family.clone(), profile, r_min, r_max, spec.r_ref, Some(c0))
    }

    /// A space with a user-supplied warping function (used for sub-static and
    /// non-static examples).
    pub fn custom<F>(n: usize, f: F, r_min: f64, r_max: f64) -> Result<Self>
    where
        F: Fn(f64) -> PhiJet + Send + Sync + 'static,
    {
        Self::assemble(
            n,
            Family::Custom {
                path: "<inline>".into(),
            },
            Profile::Custom(Arc::new(f)),
            r_min,
            r_max,
            None,
            None,
        )
    }

    pub fn euclidean(n: usize, r_min: f64, r_max: f64) -> Result<Self> {
        Self::simple(n, Family::Euclidean, r_min, r_max)
    }

    pub fn hyperbolic(n: usize, c: f64, r_min: f64, r_max: f64) -> Result<Self> {
        Self::simple(n, Family::Hyperbolic { c }, r_min, r_max)
    }

    pub fn sphere(n: usize, c: f64, r_min: f64, r_max: f64) -> Result<Self> {
        Self::simple(n, Family::Sphere { c }, r_min, r_max)
    }

    /// Schwarzschild space on `[r_min, r_max]`; `None` for `r_min` selects `r₀`.
    pub fn schwarzschild(n: usize, m: f64, r_min: Option<f64>, r_max: f64) -> Result<Self> {
        Self::from_spec(&SpaceSpec {
            n,
            family: Family::Schwarzschild { m },
            r_min,
            r_max: Some(r_max),
            r_width: None,
            r_ref: None,
        })
    }

    fn simple(n: usize, family: Family, r_min: f64, r_max: f64) -> Result<Self> {
        Self::from_spec(&SpaceSpec {
            n,
            family,
            r_min: Some(r_min),
            r_max: Some(r_max),
            r_width: None,
            r_ref: None,
        })
    }

    /// Same space with `γ = 0` at `r_ref`.
    pub fn with_gamma_reference(&self, r_ref: f64) -> Result<Self> {
        Self::assemble(
            self.n,
            self.family.clone(),
            self.profile.clone(),
            self.r_min,
            self.r_max,
            Some(r_ref),
            Some(self.c0),
        )
    }

    fn assemble(
        n: usize,
        family: Family,
        mut profile: Profile,
        r_min: f64,
        r_max: f64,
        r_ref: Option<f64>,
        c0: Option<f64>,
    ) -> Result<Self> {
        if !(r_min >= 0.0 && r_max > r_min) || !r_max.is_finite() {
            return Err(Error::Config(format!("invalid slab [{r_min}, {r_max}]")));
        }
        if let Profile::Throat(t) = &mut profile {
            let mut tau_max = (r_max + 1.0).sqrt();
            loop {
                let th = t.clone();
                let table = CumulativeTable::build(move |tau| th.dr_dtau(tau), 0.0, tau_max, 64);
                if table.total() >= r_max {
                    t.r_of_tau = Some(table);
                    break;
                }
                tau_max *= 2.0;
            }
        }
        let mut space = WarpedSpace {
            n,
            family,
            profile,
            r_min,
            r_max,
            s_lo: 0.0,
            s_hi: 0.0,
            c0: 0.0,
            gamma: None,
        };
        space.s_lo = space.s_of_r_unchecked(r_min)?;
        space.s_hi = space.s_of_r_unchecked(r_max)?;
        space.validate()?;
        space.c0 = match c0 {
            Some(c) => c,
            None => space.sampled_c0().0,
        };
        space.gamma = Some(space.build_gamma_chart(r_ref)?);
        Ok(space)
    }

    fn validate(&self) -> Result<()> {
        let lo = self.phi_at_s(self.s_lo);
        if !(lo.phi >= 0.0 && lo.d1 >= 0.0) {
            return Err(Error::Config(format!(
                "phi or phi' negative at r_min = {}",
                self.r_min
            )));
        }
        for i in 1..SAMPLES {
            let s = self.s_lo + (self.s_hi - self.s_lo) * i as f64 / (SAMPLES - 1) as f64;
            let j = self.phi_at_s(s);
            if !(j.phi > 0.0 && j.d1 > 0.0) {
                return Err(Error::Config(format!(
                    "phi and phi' must be positive on the slab; violated at r = {}",
                    self.r_of_s(s)
                )));
            }
        }
        Ok(())
    }

    fn build_gamma_chart(&self, r_ref: Option<f64>) -> Result<GammaChart> {
        let s_lo = if self.phi_at_s(self.s_lo).phi > 0.0 {
            self.s_lo
        } else {
            self.s_of_r_unchecked(self.r_min + 1e-3 * (self.r_max - self.r_min))?
        };
        let r_lo = self.r_of_s(s_lo);
        let this = self.clone();
        let table = CumulativeTable::build(
            move |s| this.dr_ds(s) / this.phi_at_s(s).phi,
            s_lo,
            self.s_hi,
            64,
        );
        let r_ref = r_ref.unwrap_or(r_lo);
        if !(r_ref >= r_lo && r_ref <= self.r_max) {
            return Err(Error::Domain {
                what: "r_ref",
                value: r_ref,
                lo: r_lo,
                hi: self.r_max,
            });
        }
        let offset = table.eval(self.s_of_r_unchecked(r_ref)?)?;
        Ok(GammaChart {
            table,
            offset,
            r_lo,
            r_ref,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// Static constant `C₀` (closed form for known families, sampled otherwise).
    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn is_throat(&self) -> bool {
        matches!(self.profile, Profile::Throat(_))
    }

    /// Chart parameter range `[s(r_min), s(r_max)]`.
    pub fn s_range(&self) -> (f64, f64) {
        (self.s_lo, self.s_hi)
    }

    /// Warping jet at chart parameter `s` (equal to `r` except for throats).
    pub fn phi_at_s(&self, s: f64) -> PhiJet {
        match &self.profile {
            Profile::Euclidean => PhiJet {
                phi: s,
                d1: 1.0,
                d2: 0.0,
                d3: 0.0,
            },
            Profile::Sphere { k } => {
                let (sn, cs) = (k * s).sin_cos();
                PhiJet {
                    phi: sn / k,
                    d1: cs,
                    d2: -k * sn,
                    d3: -k * k * cs,
                }
            }
            Profile::Hyperbolic { k } => {
                let (sh, ch) = ((k * s).sinh(), (k * s).cosh());
                PhiJet {
                    phi: sh / k,
                    d1: ch,
                    d2: k * sh,
                    d3: k * k * ch,
                }
            }
            Profile::Throat(t) => t.jet(s),
            Profile::Custom(f) => f(s),
        }
    }

    /// `dr/ds` of the chart.
    pub fn dr_ds(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::Throat(t) => t.dr_dtau(s),
            _ => 1.0,
        }
    }

    pub fn r_of_s(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::Throat(t) => t
                .r_of_tau
                .as_ref()
                .and_then(|tab| tab.eval(s).ok())
                .unwrap_or(f64::NAN),
            _ => s,
        }
    }

    fn s_of_r_unchecked(&self, r: f64) -> Result<f64> {
        match &self.profile {
            Profile::Throat(t) => match &t.r_of_tau {
                Some(tab) => tab.invert(r),
                None => Err(Error::State("throat table not built".into())),
            },
            _ => Ok(r),
        }
    }

    fn check_r(&self, r: f64) -> Result<()> {
        if !(r >= self.r_min && r <= self.r_max) {
            return Err(Error::Domain {
                what: "r",
                value: r,
                lo: self.r_min,
                hi: self.r_max,
            });
        }
        Ok(())
    }

    pub fn s_of_r(&self, r: f64) -> Result<f64> {
        self.check_r(r)?;
        self.s_of_r_unchecked(r)
    }

    /// `(φ, φ', φ'', φ''')` at radius `r`.
    pub fn eval_phi(&self, r: f64) -> Result<PhiJet> {
        Ok(self.phi_at_s(self.s_of_r(r)?))
    }

    fn chart(&self) -> Result<&GammaChart> {
        self.gamma
            .as_ref()
            .ok_or_else(|| Error::State("gamma chart not built".into()))
    }

    /// Lower end of the radial range covered by the `γ` chart.
    pub fn gamma_chart_r_lo(&self) -> f64 {
        self.gamma.as_ref().map(|g| g.r_lo).unwrap_or(self.r_min)
    }

    pub fn r_ref(&self) -> f64 {
        self.gamma.as_ref().map(|g| g.r_ref).unwrap_or(self.r_min)
    }

    /// Admissible `γ` interval, matching `[gamma_chart_r_lo, r_max]`.
    pub fn gamma_range(&self) -> (f64, f64) {
        match &self.gamma {
            Some(g) => (-g.offset, g.table.total() - g.offset),
            None => (f64::NAN, f64::NAN),
        }
    }

    /// Antiderivative of `1/φ` for the space forms, where it is elementary.
    fn closed_gamma(&self, r: f64) -> Option<f64> {
        match self.profile {
            Profile::Euclidean => Some(r.ln()),
            Profile::Hyperbolic { k } => Some((0.5 * k * r).tanh().ln()),
            Profile::Sphere { k } => Some((0.5 * k * r).tan().ln()),
            _ => None,
        }
    }

    fn closed_gamma_inverse(&self, g: f64) -> Option<f64> {
        match self.profile {
            Profile::Euclidean => Some(g.exp()),
            Profile::Hyperbolic { k } => Some(2.0 / k * g.exp().atanh()),
            Profile::Sphere { k } => Some(2.0 / k * g.exp().atan()),
            _ => None,
        }
    }

    pub fn gamma_of_s(&self, s: f64) -> Result<f64> {
        let g = self.chart()?;
        if let (Some(v), Some(v0)) = (self.closed_gamma(s), self.closed_gamma(g.r_ref)) {
            let (lo, hi) = (g.table.lo(), g.table.hi());
            if !(s >= lo && s <= hi) {
                return Err(Error::Range { value: s, lo, hi });
            }
            return Ok(v - v0);
        }
        Ok(g.table.eval(s)? - g.offset)
    }

    /// `γ` by quadrature, regardless of family.
    pub fn gamma_of_s_tabulated(&self, s: f64) -> Result<f64> {
        let g = self.chart()?;
        Ok(g.table.eval(s)? - g.offset)
    }

    pub fn s_of_gamma(&self, gamma: f64) -> Result<f64> {
        let g = self.chart()?;
        let (lo, hi) = self.gamma_range();
        let err = || Error::Domain {
            what: "gamma",
            value: gamma,
            lo,
            hi,
        };
        if let Some(v0) = self.closed_gamma(g.r_ref) {
            if !(gamma >= lo && gamma <= hi) {
                return Err(err());
            }
            let s = self.closed_gamma_inverse(gamma + v0).ok_or_else(err)?;
            return Ok(s.clamp(g.table.lo(), g.table.hi()));
        }
        g.table.invert(gamma + g.offset).map_err(|_| err())
    }

    /// `γ(r) = ∫_{r_ref}^{r} dρ/φ(ρ)`.
    pub fn gamma_of_r(&self, r: f64) -> Result<f64> {
        let g = self.chart()?;
        if !(r >= g.r_lo && r <= self.r_max) {
            return Err(Error::Domain {
                what: "r",
                value: r,
                lo: g.r_lo,
                hi: self.r_max,
            });
        }
        self.gamma_of_s(self.s_of_r_unchecked(r)?)
    }

    pub fn r_of_gamma(&self, gamma: f64) -> Result<f64> {
        Ok(self.r_of_s(self.s_of_gamma(gamma)?))
    }

    /// Cumulative table `r ↦ ∫_{r_min}^{r} f(φ-jet) dρ`, in the chart variable.
    pub fn radial_table<F>(&self, f: F) -> CumulativeTable
    where
        F: Fn(&PhiJet) -> f64 + Send + Sync + 'static,
    {
        let this = self.clone();
        CumulativeTable::build(
            move |s| f(&this.phi_at_s(s)) * this.dr_ds(s),
            self.s_lo,
            self.s_hi,
            64,
        )
    }

    /// Full curvature tensor `R̄(X,Y,Z,W)` for vectors given in the orthonormal
    /// frame `{∂_r, ē₁, …, ē_n}` at radius `r`.
    pub fn ambient_riemann(&self, r: f64, x: &[f64], y: &[f64], z: &[f64], w: &[f64]) -> Result<f64> {
        let dim = self.n + 1;
        for v in [x, y, z, w] {
            if v.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        let j = self.eval_phi(r)?;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let mixed = (j.d1 * j.d1 - j.phi * j.d2 - 1.0) / (j.phi * j.phi);
        let tangential = (j.d1 * j.d1 - 1.0) / (j.phi * j.phi);
        let (ax, ay, az, aw) = (x[0], y[0], z[0], w[0]);
        Ok(mixed
            * (ax * az * dot(y, w) + ay * aw * dot(x, z) - ax * aw * dot(y, z) - ay * az * dot(x, w))
            - tangential * (dot(x, z) * dot(y, w) - dot(x, w) * dot(y, z)))
    }

    pub fn ambient_ricci_scalar(&self, r: f64) -> Result<RicciScalar> {
        let j = self.eval_phi(r)?;
        Ok(ricci_from_jet(self.n, &j))
    }

    /// `φ²φ''' + (n−2)φφ'φ'' − (n−1)φ'((φ')² − 1)`.
    pub fn static_residual(&self, j: &PhiJet) -> f64 {
        let n = self.n as f64;
        j.phi * j.phi * j.d3 + (n - 2.0) * j.phi * j.d1 * j.d2 - (n - 1.0) * j.d1 * (j.d1 * j.d1 - 1.0)
    }

    /// `−φ^{n−1}((φ')² − φφ'' − 1)`
    pub fn c0_sample(&self, j: &PhiJet) -> f64 {
        -j.phi.powi(self.n as i32 - 1) * (j.convexity_gap() - 1.0)
    }

    fn samples(&self) -> impl Iterator<Item = PhiJet> + '_ {
        (0..SAMPLES).map(move |i| {
            let s = self.s_lo + (self.s_hi - self.s_lo) * i as f64 / (SAMPLES - 1) as f64;
            self.phi_at_s(s)
        })
    }

    fn sampled_c0(&self) -> (f64, f64) {
        let vals: Vec<f64> = self.samples().map(|j| self.c0_sample(&j)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let dev = vals.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
        (mean, dev)
    }

    pub fn staticity_report(&self) -> StaticityReport {
        let mut scale = 1.0f64;
        let mut max_res = 0.0f64;
        let mut min_res = f64::INFINITY;
        let mut gap_lo = f64::INFINITY;
        let mut gap_hi = f64::NEG_INFINITY;
        let mut dd_pos = true;
        for (i, j) in self.samples().enumerate() {
            scale = scale.max(j.phi.powi(3));
            let res = self.static_residual(&j);
            max_res = max_res.max(res.abs());
            min_res = min_res.min(res);
            let gap = j.convexity_gap();
            gap_lo = gap_lo.min(gap);
            gap_hi = gap_hi.max(gap);
            // the centre of a space form (φ = φ'' = 0) is excluded from the strict sign test
            if !(j.d2 > 0.0) && !(i == 0 && j.phi == 0.0) {
                dd_pos = false;
            }
        }
        let tol = STATIC_TOL * scale;
        let (c0, dev) = self.sampled_c0();
        let gap_tol = 1e-12 * (1.0 + gap_hi.abs());
        StaticityReport {
            is_substatic: min_res >= -tol,
            is_static: max_res < tol,
            c0,
            c0_max_deviation: dev,
            max_residual: max_res,
            tolerance: tol,
            admissible: dd_pos && gap_lo >= -gap_tol && gap_hi <= 1.0 + gap_tol,
            min_convexity_gap: gap_lo,
            max_convexity_gap: gap_hi,
            phi_dd_positive: dd_pos,
        }
    }

    /// Radius where `(λ')² − λλ'' = 0` for Schwarzschild-type families.
    pub fn schwarzschild_r0(&self) -> Result<f64> {
        match &self.profile {
            Profile::Throat(t) => {
                let tau = (t.lambda_r0() - t.s0).max(0.0).sqrt();
                let tab = t
                    .r_of_tau
                    .as_ref()
                    .ok_or_else(|| Error::State("throat table not built".into()))?;
                tab.eval(tau)
            }
            _ => Err(Error::NotApplicable(
                "r0 is defined for Schwarzschild-type families only".into(),
            )),
        }
    }

    /// `λ(r₀)` for Schwarzschild-type families.
    pub fn schwarzschild_lambda_r0(&self) -> Result<f64> {
        match &self.profile {
            Profile::Throat(t) => Ok(t.lambda_r0()),
            _ => Err(Error::NotApplicable(
                "r0 is defined for Schwarzschild-type families only".into(),
            )),
        }
    }

    /// Horizon value `s₀` of a throat family.
    pub fn throat_s0(&self) -> Option<f64> {
        match &self.profile {
            Profile::Throat(t) => Some(t.s0),
            _ => None,
        }
    }
}

pub fn ricci_from_jet(n: usize, j: &PhiJet) -> RicciScalar {
    let n = n as f64;
    let p2 = j.phi * j.phi;
    RicciScalar {
        radial: -n * j.d2 / j.phi,
        tangential: -((n - 1.0) * (j.d1 * j.d1 - 1.0) + j.phi * j.d2) / p2,
        scalar: -n * (2.0 * j.d2 / j.phi + (n - 1.0) * (j.d1 * j.d1 - 1.0) / p2),
    }
}

fn resolve_r_max(spec: &SpaceSpec, r_min: f64) -> Result<f64> {
    match (spec.r_max, spec.r_width) {
        (Some(r), None) => Ok(r),
        (None, Some(w)) => Ok(r_min + w),
        _ => Err(Error::Config("exactly one of r_max and r_width must be given".into())),
    }
}

fn throat_r0(t: &Throat) -> f64 {
    let tau = (t.lambda_r0() - t.s0).max(0.0).sqrt();
    if tau == 0.0 {
        return 0.0;
    }
    let th = t.clone();
    CumulativeTable::build(move |x| th.dr_dtau(x), 0.0, tau, 16).total()
}

/// Area of the unit `n`-sphere via `ω_n = 2π ω_{n−2}/(n−1)`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI * sphere_area(n - 2) / (n as f64 - 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_phi_closed_forms() {
        let h = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
        assert_eq!(h.eval_phi(0.0).unwrap().as_array(), [0.0, 1.0, 0.0, 1.0]);
        let e = WarpedSpace::euclidean(2, 0.5, 3.0).unwrap();
        assert_eq!(e.eval_phi(2.0).unwrap().as_array(), [2.0, 1.0, 0.0, 0.0]);
        assert!(matches!(e.eval_phi(3.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn schwarzschild_at_horizon() {
        let s = WarpedSpace::schwarzschild(2, 1.0, Some(0.0), 5.0).unwrap();
        let j = s.eval_phi(0.0).unwrap();
        assert!((j.phi - 2.0).abs() < 1e-14);
        assert!(j.d1.abs() < 1e-14);
        assert!((j.d2 - 0.25).abs() < 1e-14);
        assert!(j.d3.abs() < 1e-14);
    }

    #[test]
    fn schwarzschild_lambda_r0_values() {
        let s2 = WarpedSpace::schwarzschild(2, 1.0, None, 6.0).unwrap();
        assert!((s2.schwarzschild_lambda_r0().unwrap() - 3.0).abs() < 1e-14);
        let s3 = WarpedSpace::schwarzschild(3, 1.0, None, 6.0).unwrap();
        assert!((s3.schwarzschild_lambda_r0().unwrap() - 2.0).abs() < 1e-14);
        let r0 = s3.schwarzschild_r0().unwrap();
        assert!((s3.eval_phi(r0).unwrap().phi - 2.0).abs() < 1e-12);
        assert!((s3.r_min() - r0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_gamma_is_log() {
        let e = WarpedSpace::euclidean(2, 0.5, 4.0)
            .unwrap()
            .with_gamma_reference(1.0)
            .unwrap();
        let g = e.gamma_of_r(std::f64::consts::E).unwrap();
        assert!((g - 1.0).abs() < 1e-13);
        assert!(e.r_of_gamma(10.0).is_err());
    }

    #[test]
    fn hyperbolic_gamma_table_matches_antiderivative() {
        let h = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0)
            .unwrap()
            .with_gamma_reference(1.0)
            .unwrap();
        let exact = 1.0f64.tanh().ln() - 0.5f64.tanh().ln();
        assert!((h.gamma_of_r(2.0).unwrap() - exact).abs() < 1e-13);
        assert!((h.gamma_of_s_tabulated(2.0).unwrap() - exact).abs() < 1e-12);
        for i in 1..=50 {
            let r = 0.06 * i as f64;
            let a = h.gamma_of_s_tabulated(r).unwrap();
            let b = h.gamma_of_r(r).unwrap();
            assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()), "r={r}");
        }
    }

    proptest::proptest! {
        #[test]
        fn gamma_round_trip(r in 0.01..5.99f64, family in 0usize..3) {
            let space = match family {
                0 => WarpedSpace::hyperbolic(2, 1.0, 0.0, 6.0).unwrap(),
                1 => WarpedSpace::schwarzschild(2, 1.0, None, 6.0).unwrap(),
                _ => WarpedSpace::euclidean(3, 0.0, 6.0).unwrap(),
            };
            let r = r.max(space.gamma_chart_r_lo());
            let g = space.gamma_of_r(r).unwrap();
            proptest::prop_assert!((space.r_of_gamma(g).unwrap() - r).abs() < 1e-12 * (1.0 + r));
            let g2 = space.gamma_of_r((r + 1e-3).min(6.0)).unwrap();
            proptest::prop_assert!(g2 > g);
        }
    }

    #[test]
    fn ricci_examples() {
        let h = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
        assert!((h.ambient_ricci_scalar(1.3).unwrap().scalar + 6.0).abs() < 1e-12);
        let e = WarpedSpace::euclidean(3, 0.1, 3.0).unwrap();
        let r = e.ambient_ricci_scalar(1.0).unwrap();
        assert_eq!((r.radial, r.tangential, r.scalar), (0.0, 0.0, 0.0));
    }

    #[test]
    fn riemann_radial_block() {
        let s = WarpedSpace::schwarzschild(2, 1.0, None, 6.0).unwrap();
        let r = 4.0;
        let j = s.eval_phi(r).unwrap();
        let dr = [1.0, 0.0, 0.0];
        let e1 = [0.0, 1.0, 0.0];
        let e2 = [0.0, 0.0, 1.0];
        let v = s.ambient_riemann(r, &e1, &dr, &e1, &dr).unwrap();
        assert!((v + j.d2 / j.phi).abs() < 1e-14);
        assert!(s.ambient_riemann(r, &e1, &dr, &e2, &dr).unwrap().abs() < 1e-15);
        let h = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
        let k = h.ambient_riemann(1.7, &e1, &e2, &e1, &e2).unwrap();
        assert!((k + 1.0).abs() < 1e-12);
    }

    #[test]
    fn staticity_flags() {
        let h = WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap();
        let rep = h.staticity_report();
        assert!(rep.is_static && rep.admissible);
        assert!(rep.c0.abs() < 1e-9);

        let s = WarpedSpace::schwarzschild(2, 1.0, None, 6.0).unwrap();
        let rep = s.staticity_report();
        assert!(rep.is_static && rep.admissible, "{rep:?}");
        assert!((rep.c0 - 3.0).abs() < 1e-10);

        let exp = WarpedSpace::custom(
            2,
            |r| {
                let e = r.exp();
                PhiJet { phi: e, d1: e, d2: e, d3: e }
            },
            0.0,
            2.0,
        )
        .unwrap();
        let rep = exp.staticity_report();
        assert!(rep.is_substatic && !rep.is_static);
        let j = exp.eval_phi(1.0).unwrap();
        assert!((exp.static_residual(&j) - 1.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn sphere_family_not_admissible() {
        let s = WarpedSpace::sphere(2, 1.0, 0.0, 1.2).unwrap();
        let rep = s.staticity_report();
        assert!(rep.is_static);
        assert!(!rep.admissible);
        assert!(WarpedSpace::sphere(2, 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn throat_needs_dimension_two() {
        assert!(WarpedSpace::schwarzschild(1, 1.0, None, 3.0).is_err());
    }

    #[test]
    fn ads_schwarzschild_static_with_c0() {
        let spec = SpaceSpec {
            n: 2,
            family: Family::AdsSchwarzschild { m: 1.0, kappa: 0.5 },
            r_min: None,
            r_max: None,
            r_width: Some(1.0),
            r_ref: None,
        };
        let s = WarpedSpace::from_spec(&spec).unwrap();
        let rep = s.staticity_report();
        assert!(rep.is_static, "{rep:?}");
        assert!((rep.c0 - 3.0).abs() < 1e-9);
        let rs = s.ambient_ricci_scalar(s.r_min() + 0.3).unwrap().scalar;
        assert!((rs + 6.0 * 0.25).abs() < 1e-10);
    }
}
