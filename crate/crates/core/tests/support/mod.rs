//! Oracles shared by the integration tests.
#![allow(dead_code)]

use warpflow::warp::WarpedSpace;

/// Coordinate metric of `dr² + φ²(dϑ² + sin²ϑ dψ²)` at `x = (r, ϑ, ψ)`.
fn metric(phi: &dyn Fn(f64) -> f64, x: [f64; 3]) -> [[f64; 3]; 3] {
    let p = phi(x[0]);
    let s = x[1].sin();
    [[1.0, 0.0, 0.0], [0.0, p * p, 0.0], [0.0, 0.0, p * p * s * s]]
}

fn shifted(x: [f64; 3], k: usize, d: f64) -> [f64; 3] {
    let mut y = x;
    y[k] += d;
    y
}

/// Fourth-order central difference of a vector-valued map along axis `k`.
fn diff<const N: usize>(f: &dyn Fn([f64; 3]) -> [f64; N], x: [f64; 3], k: usize, h: f64) -> [f64; N] {
    let (a, b, c, d) = (
        f(shifted(x, k, -2.0 * h)),
        f(shifted(x, k, -h)),
        f(shifted(x, k, h)),
        f(shifted(x, k, 2.0 * h)),
    );
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = (a[i] - 8.0 * b[i] + 8.0 * c[i] - d[i]) / (12.0 * h);
    }
    out
}

fn flat(m: [[f64; 3]; 3]) -> [f64; 9] {
    let mut o = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            o[3 * i + j] = m[i][j];
        }
    }
    o
}

/// `Γ^a_{bc}` flattened as `9a + 3b + c`, from differenced metric components.
fn christoffel(phi: &dyn Fn(f64) -> f64, x: [f64; 3], h: f64) -> [f64; 27] {
    let g = metric(phi, x);
    let dg: Vec<[f64; 9]> = (0..3).map(|k| diff(&|y| flat(metric(phi, y)), x, k, h)).collect();
    let mut out = [0.0; 27];
    for a in 0..3 {
        let ginv = 1.0 / g[a][a];
        for b in 0..3 {
            for c in 0..3 {
                let v = dg[b][3 * a + c] + dg[c][3 * a + b] - dg[a][3 * b + c];
                out[9 * a + 3 * b + c] = 0.5 * ginv * v;
            }
        }
    }
    out
}

/// `R_{abcd} = g_{ae}(∂_c Γ^e_{db} − ∂_d Γ^e_{cb} + Γ^e_{cf}Γ^f_{db} − Γ^e_{df}Γ^f_{cb})`
/// by nested finite differences; sectional curvature is `R(X,Y,X,Y)`.
pub fn riemann_fd(phi: &dyn Fn(f64) -> f64, x: [f64; 3]) -> [f64; 81] {
    let (h_in, h_out) = (1e-4, 2e-3);
    let gam = christoffel(phi, x, h_in);
    let dgam: Vec<[f64; 27]> = (0..3).map(|k| diff(&|y| christoffel(phi, y, h_in), x, k, h_out)).collect();
    let g = metric(phi, x);
    let mut out = [0.0; 81];
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    let mut up = dgam[c][9 * a + 3 * d + b] - dgam[d][9 * a + 3 * c + b];
                    for f in 0..3 {
                        up += gam[9 * a + 3 * c + f] * gam[9 * f + 3 * d + b] - gam[9 * a + 3 * d + f] * gam[9 * f + 3 * c + b];
                    }
                    out[27 * a + 9 * b + 3 * c + d] = g[a][a] * up;
                }
            }
        }
    }
    out
}

/// Frame components `(∂_r, ∂_ϑ/φ, ∂_ψ/(φ sinϑ))` to coordinate components.
pub fn frame_to_coords(phi: f64, theta: f64, v: &[f64]) -> [f64; 3] {
    [v[0], v[1] / phi, v[2] / (phi * theta.sin())]
}

/// Largest relative disagreement between `ambient_riemann` and the oracle
/// over `samples` seeded draws.
pub fn riemann_disagreement(space: &WarpedSpace, r_lo: f64, r_hi: f64, samples: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let phi = |r: f64| space.eval_phi(r).unwrap().phi;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let r = rng.random_range(r_lo..r_hi);
        let theta = rng.random_range(0.4..2.7);
        let psi = rng.random_range(0.0..6.0);
        let vecs: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let rt = riemann_fd(&phi, [r, theta, psi]);
        let p = phi(r);
        let c: Vec<[f64; 3]> = vecs.iter().map(|v| frame_to_coords(p, theta, v)).collect();
        let mut fd = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                for cc in 0..3 {
                    for d in 0..3 {
                        fd += rt[27 * a + 9 * b + 3 * cc + d] * c[0][a] * c[1][b] * c[2][cc] * c[3][d];
                    }
                }
            }
        }
        let got = space.ambient_riemann(r, &vecs[0], &vecs[1], &vecs[2], &vecs[3]).unwrap();
        let j = space.eval_phi(r).unwrap();
        let k_scale = ((j.d1 * j.d1 - j.phi * j.d2 - 1.0).abs() + (j.d1 * j.d1 - 1.0).abs()) / (j.phi * j.phi);
        let norms: f64 = vecs.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).product();
        let scale = k_scale.max(1.0) * norms;
        worst = worst.max((fd - got).abs() / scale);
    }
    worst
}
