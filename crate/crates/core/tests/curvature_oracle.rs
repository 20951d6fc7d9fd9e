mod support;

use warpflow::warp::WarpedSpace;

#[test]
fn riemann_matches_finite_differences() {
    let cases = [
        (WarpedSpace::euclidean(2, 0.0, 3.0).unwrap(), 0.3, 2.5),
        (WarpedSpace::hyperbolic(2, 1.0, 0.0, 3.0).unwrap(), 0.3, 2.5),
        (WarpedSpace::sphere(2, 1.0, 0.0, 1.5).unwrap(), 0.3, 1.4),
        (WarpedSpace::hyperbolic(2, 2.0, 0.0, 2.0).unwrap(), 0.3, 1.5),
    ];
    for (k, (space, lo, hi)) in cases.iter().enumerate() {
        let d = support::riemann_disagreement(space, *lo, *hi, 20, k as u64);
        assert!(d < 1e-6, "case {k}: {d}");
    }
    let s = WarpedSpace::schwarzschild(2, 1.0, None, 8.0).unwrap();
    let d = support::riemann_disagreement(&s, s.r_min() + 0.1, 7.5, 20, 9);
    assert!(d < 1e-6, "schwarzschild: {d}");
}

#[test]
fn sphere_sectional_curvature_sign() {
    let phi = |r: f64| r.sin();
    let rt = support::riemann_fd(&phi, [0.7, 1.1, 0.3]);
    // R(∂_r, ∂_ϑ, ∂_r, ∂_ϑ) = K |∂_r ∧ ∂_ϑ|² = sin²r for K = 1
    let k = rt[27 * 0 + 9 * 1 + 3 * 0 + 1] / (0.7f64.sin().powi(2));
    assert!((k - 1.0).abs() < 1e-6, "{k}");
}
