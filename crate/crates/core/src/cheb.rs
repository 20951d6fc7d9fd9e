//! Piecewise Chebyshev representation of a cumulative integral
//! `s ↦ ∫_{a}^{s} f`, built by adaptive Clenshaw–Curtis panels.
//!
//! Each panel samples the integrand at Chebyshev–Lobatto points, keeps the
//! Chebyshev series of the integrand and its exact antiderivative, and is
//! bisected until the trailing coefficients drop below a relative threshold.
//! Evaluation is a binary search plus one Clenshaw recurrence; inversion of a
//! monotone table is a safeguarded Newton iteration inside one panel.

use crate::error::{Error, Result};

const ORDER: usize = 24;
const TAIL_TOL: f64 = 1e-13;
const MAX_DEPTH: u32 = 40;
const SLACK: f64 = 1e-13;

#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    integrand: [f64; ORDER + 1],
    antideriv: [f64; ORDER + 2],
}

impl Panel {
    fn half_width(&self) -> f64 {
        0.5 * (self.b - self.a)
    }

    fn local(&self, s: f64) -> f64 {
        ((2.0 * s - self.a - self.b) / (self.b - self.a)).clamp(-1.0, 1.0)
    }

    fn total(&self) -> f64 {
        self.antideriv.iter().sum()
    }
}

/// Cumulative integral table over `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct CumulativeTable {
    panels: Vec<Panel>,
    breaks: Vec<f64>,
    cum: Vec<f64>,
}

fn clenshaw(coeffs: &[f64], x: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = c + 2.0 * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + x * b1 - b2
}

fn lobatto_coeffs(values: &[f64; ORDER + 1]) -> [f64; ORDER + 1] {
    let n = ORDER as f64;
    let mut c = [0.0; ORDER + 1];
    for (k, ck) in c.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &fj) in values.iter().enumerate() {
            let w = if j == 0 || j == ORDER { 0.5 } else { 1.0 };
            acc += w * fj * (std::f64::consts::PI * (j * k) as f64 / n).cos();
        }
        *ck = 2.0 * acc / n;
    }
    c[0] *= 0.5;
    c[ORDER] *= 0.5;
    c
}

fn antiderivative(c: &[f64; ORDER + 1], half_width: f64) -> [f64; ORDER + 2] {
    let coef = |k: usize| if k <= ORDER { c[k] } else { 0.0 };
    let mut big = [0.0; ORDER + 2];
    big[1] = coef(0) - 0.5 * coef(2);
    for k in 2..ORDER + 2 {
        big[k] = (coef(k - 1) - coef(k + 1)) / (2.0 * k as f64);
    }
    let mut at_minus_one = 0.0;
    for (k, v) in big.iter().enumerate().skip(1) {
        at_minus_one += if k % 2 == 0 { *v } else { -*v };
    }
    big[0] = -at_minus_one;
    for v in big.iter_mut() {
        *v *= half_width;
    }
    big
}

impl CumulativeTable {
    /// Builds the table of `∫_{lo}^{s} f` starting from `initial_panels`
    /// uniform panels, refining adaptively.
    pub fn build<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, initial_panels: usize) -> Self {
        assert!(hi > lo, "empty integration interval");
        let mut panels = Vec::new();
        let width = (hi - lo) / initial_panels.max(1) as f64;
        for p in 0..initial_panels.max(1) {
            let a = lo + p as f64 * width;
            let b = if p + 1 == initial_panels.max(1) { hi } else { a + width };
            Self::refine(&f, a, b, 0, &mut panels);
        }
        let mut breaks = Vec::with_capacity(panels.len() + 1);
        let mut cum = Vec::with_capacity(panels.len() + 1);
        breaks.push(lo);
        cum.push(0.0);
        let mut acc = 0.0;
        for p in &panels {
            acc += p.total();
            breaks.push(p.b);
            cum.push(acc);
        }
        CumulativeTable {
            panels,
            breaks,
            cum,
        }
    }

    fn refine<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, depth: u32, out: &mut Vec<Panel>) {
        let mid = 0.5 * (a + b);
        let hw = 0.5 * (b - a);
        let mut values = [0.0; ORDER + 1];
        for (j, v) in values.iter_mut().enumerate() {
            let x = (std::f64::consts::PI * j as f64 / ORDER as f64).cos();
            *v = f(mid + hw * x);
        }
        let integrand = lobatto_coeffs(&values);
        let scale = integrand.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let tail = integrand[ORDER - 1].abs() + integrand[ORDER].abs();
        if tail > TAIL_TOL * scale && depth < MAX_DEPTH {
            Self::refine(f, a, mid, depth + 1, out);
            Self::refine(f, mid, b, depth + 1, out);
            return;
        }
        out.push(Panel {
            a,
            b,
            integrand,
            antideriv: antiderivative(&integrand, hw),
        });
    }

    pub fn lo(&self) -> f64 {
        self.breaks[0]
    }

    pub fn hi(&self) -> f64 {
        *self.breaks.last().unwrap()
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    fn panel_index(&self, s: f64) -> usize {
        let k = self.breaks.partition_point(|&b| b <= s);
        k.saturating_sub(1).min(self.panels.len() - 1)
    }

    /// Accepts arguments within a roundoff margin of the table and clamps them.
    fn check(&self, s: f64) -> Result<f64> {
        let (lo, hi) = (self.lo(), self.hi());
        let slack = SLACK * (lo.abs() + hi.abs());
        if !(s >= lo - slack && s <= hi + slack) {
            return Err(Error::Range { value: s, lo, hi });
        }
        Ok(s.clamp(lo, hi))
    }

    /// `∫_{lo}^{s} f`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        let s = self.check(s)?;
        let k = self.panel_index(s);
        let p = &self.panels[k];
        Ok(self.cum[k] + clenshaw(&p.antideriv, p.local(s)))
    }

    /// The interpolated integrand at `s`.
    pub fn integrand(&self, s: f64) -> Result<f64> {
        let s = self.check(s)?;
        let p = &self.panels[self.panel_index(s)];
        Ok(clenshaw(&p.integrand, p.local(s)))
    }

    /// Solves `eval(s) = y` for a table with non-negative integrand.
    pub fn invert(&self, y: f64) -> Result<f64> {
        let (lo_v, hi_v) = (self.cum[0], self.total());
        let slack = SLACK * (lo_v.abs() + hi_v.abs());
        if !(y >= lo_v - slack && y <= hi_v + slack) {
            return Err(Error::Range {
                value: y,
                lo: lo_v,
                hi: hi_v,
            });
        }
        let y = y.clamp(lo_v, hi_v);
        let k = self
            .cum
            .partition_point(|&c| c <= y)
            .saturating_sub(1)
            .min(self.panels.len() - 1);
        let p = &self.panels[k];
        let target = y - self.cum[k];
        let span = self.cum[k + 1] - self.cum[k];
        let hw = p.half_width();
        let g = |x: f64| clenshaw(&p.antideriv, x) - target;
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut x = if span > 0.0 {
            (-1.0 + 2.0 * target / span).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        for _ in 0..100 {
            let gx = g(x);
            if gx == 0.0 {
                break;
            }
            if gx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = clenshaw(&p.integrand, x) * hw;
            let mut next = if slope > 0.0 { x - gx / slope } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let done = (next - x).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs());
            x = next;
            if done || hi - lo <= 4.0 * f64::EPSILON {
                break;
            }
        }
        Ok(0.5 * (p.a + p.b) + hw * x)
    }

    /// Panel break points (useful for sampling at the table resolution).
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }
}
