//! Symmetric 2-tensors in a per-node orthonormal frame.
//!
//! Every grid mode needs at most two distinct frame directions: `e₀` (the polar
//! direction) with multiplicity one, and `e₁` with multiplicity `m` (`0` on the
//! circle, `1` on the lat-long grid, `n − 1` on axisymmetric grids, where all
//! tensors of interest are diagonal). A tensor is stored as `[[a, b], [b, c]]`
//! and the `c` block is understood to repeat `m` times.

use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { a: 0.0, b: 0.0, c: 0.0 };
    pub const IDENTITY: Sym2 = Sym2 { a: 1.0, b: 0.0, c: 1.0 };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Sym2 { a, b, c }
    }

    pub fn diag(a: f64, c: f64) -> Self {
        Sym2 { a, b: 0.0, c }
    }

    /// `v vᵀ`
    pub fn outer(v: [f64; 2]) -> Self {
        Sym2 {
            a: v[0] * v[0],
            b: v[0] * v[1],
            c: v[1] * v[1],
        }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.b * v[0] + self.c * v[1]]
    }

    /// `vᵀ A v`
    pub fn quad(&self, v: [f64; 2]) -> f64 {
        let w = self.apply(v);
        v[0] * w[0] + v[1] * w[1]
    }

    pub fn trace(&self, m: usize) -> f64 {
        self.a + m as f64 * self.c
    }

    /// Frobenius norm squared with the `c` block repeated `m` times.
    pub fn norm_sq(&self, m: usize) -> f64 {
        self.a * self.a + 2.0 * self.b * self.b + m as f64 * self.c * self.c
    }

    /// `tr(A B)` with multiplicities.
    pub fn contract(&self, other: &Sym2, m: usize) -> f64 {
        self.a * other.a + 2.0 * self.b * other.b + m as f64 * self.c * other.c
    }

    pub fn det2(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    /// Inverse of the 2×2 block (the repeated block inverts to `1/c`).
    pub fn inverse(&self) -> Sym2 {
        if self.b == 0.0 {
            return Sym2::diag(1.0 / self.a, 1.0 / self.c);
        }
        let d = self.det2();
        Sym2 {
            a: self.c / d,
            b: -self.b / d,
            c: self.a / d,
        }
    }

    /// `A B A` for symmetric `A`, `B` (raising both indices with `A = g⁻¹`).
    pub fn sandwich(&self, mid: &Sym2) -> Sym2 {
        let (p, q, r) = (self.a, self.b, self.c);
        let (x, y, z) = (mid.a, mid.b, mid.c);
        // first row/column of A·B
        let ab00 = p * x + q * y;
        let ab01 = p * y + q * z;
        let ab10 = q * x + r * y;
        let ab11 = q * y + r * z;
        Sym2 {
            a: ab00 * p + ab01 * q,
            b: ab00 * q + ab01 * r,
            c: ab10 * q + ab11 * r,
        }
    }

    /// Eigenvalues of `g⁻¹ A` (`A` relative to the metric `g`).
    ///
    /// For diagonal pairs the result is frame-aligned: the second entry belongs
    /// to the repeated block. Otherwise the pair is sorted ascending.
    pub fn rel_eigen(&self, g: &Sym2) -> [f64; 2] {
        if self.b == 0.0 && g.b == 0.0 {
            return [self.a / g.a, self.c / g.c];
        }
        // det(A − λ g) = 0
        let qa = g.det2();
        let qb = -(self.a * g.c + self.c * g.a - 2.0 * self.b * g.b);
        let qc = self.det2();
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        let sq = disc.sqrt();
        let (l1, l2) = if qb <= 0.0 {
            let t = -qb + sq;
            (2.0 * qc / t, t / (2.0 * qa))
        } else {
            let t = -qb - sq;
            (t / (2.0 * qa), 2.0 * qc / t)
        };
        if l1 <= l2 {
            [l1, l2]
        } else {
            [l2, l1]
        }
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }
}

impl Mul<Sym2> for f64 {
    type Output = Sym2;
    fn mul(self, t: Sym2) -> Sym2 {
        Sym2::new(self * t.a, self * t.b, self * t.c)
    }
}

/// Elementary symmetric polynomials `(σ₁, σ₂, σ₃)` of `k₀` (once) and `k₁`
/// (repeated `m` times).
pub fn elementary(k: [f64; 2], m: usize) -> [f64; 3] {
    let m = m as f64;
    let c2 = m * (m - 1.0) / 2.0;
    let c3 = m * (m - 1.0) * (m - 2.0) / 6.0;
    [
        k[0] + m * k[1],
        k[0] * m * k[1] + c2 * k[1] * k[1],
        k[0] * c2 * k[1] * k[1] + c3 * k[1] * k[1] * k[1],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn elementary_of_unit_sphere() {
        assert_eq!(elementary([1.0, 1.0], 1), [2.0, 1.0, 0.0]);
        assert_eq!(elementary([1.0, 1.0], 2), [3.0, 3.0, 1.0]);
        assert_eq!(elementary([2.0, 0.0], 0), [2.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn rel_eigen_matches_trace_and_det(
            a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
            ga in 0.5..3.0f64, gb in -0.4..0.4f64, gc in 0.5..3.0f64,
        ) {
            let h = Sym2::new(a, b, c);
            let g = Sym2::new(ga, gb, gc);
            let [l1, l2] = h.rel_eigen(&g);
            let gi = g.inverse();
            let tr = gi.contract(&h, 1);
            let det = h.det2() / g.det2();
            prop_assert!(l1 <= l2);
            prop_assert!((l1 + l2 - tr).abs() < 1e-9 * (1.0 + tr.abs()));
            prop_assert!((l1 * l2 - det).abs() < 1e-9 * (1.0 + det.abs() + tr * tr));
        }

        #[test]
        fn sandwich_matches_matrix_product(
            p in -2.0..2.0f64, q in -2.0..2.0f64, r in -2.0..2.0f64,
            x in -2.0..2.0f64, y in -2.0..2.0f64, z in -2.0..2.0f64,
        ) {
            let a = [[p, q], [q, r]];
            let m = [[x, y], [y, z]];
            let mut out = [[0.0; 2]; 2];
            for i in 0..2 { for j in 0..2 { for k in 0..2 { for l in 0..2 {
                out[i][j] += a[i][k] * m[k][l] * a[l][j];
            }}}}
            let s = Sym2::new(p, q, r).sandwich(&Sym2::new(x, y, z));
            prop_assert!((s.a - out[0][0]).abs() < 1e-12);
            prop_assert!((s.b - out[0][1]).abs() < 1e-12);
            prop_assert!((s.c - out[1][1]).abs() < 1e-12);
        }
    }
}
