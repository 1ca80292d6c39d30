//! Oracle tests: every closed form and quadrature in this module is pinned
//! against (a) a seeded Monte-Carlo estimate with a wide sigma band and
//! (b) where feasible, an independent deterministic integrator implemented
//! here with different nodes (Simpson panels), so the two code paths share
//! nothing but the integrand definition.

use ndarray::{arr2, Array2};
use proptest::prelude::*;

use super::*;
use crate::activations::Act;
use crate::special::phi;

/// Independent 1-d oracle: ∫ φ(u) f(u) du by Simpson on [−12, 12].
fn simpson_gauss(f: impl Fn(f64) -> f64) -> f64 {
    let n = 24_000usize;
    let (a, b) = (-12.0f64, 12.0f64);
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let x = a + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * phi(x) * f(x);
    }
    s * h / 3.0
}

/// Kink-split composite Simpson oracle: ∫ φ(u) f(u) du with panel boundaries
/// at `kinks`, so no derivative discontinuity ever sits inside a panel (plain
/// composite Simpson across an activation kink stalls at ~1e-8).
fn simpson_gauss_split(f: impl Fn(f64) -> f64, kinks: &[f64]) -> f64 {
    let mut cuts = vec![-8.5f64, 8.5];
    cuts.extend(kinks.iter().copied().filter(|k| k.is_finite() && k.abs() < 8.5));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = 2 * (((b - a) * 250.0).ceil() as usize).max(32);
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = a + i as f64 * h;
            let wt = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += wt * phi(x) * f(x);
        }
        acc += s * h / 3.0;
    }
    acc
}

fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, want {want} (|Δ| = {:e} > {tol:e})",
        (got - want).abs()
    );
}

/// MC band check: |closed − mc| ≤ 5·SE + slack.
fn assert_mc(closed: f64, mc: (f64, f64), what: &str) {
    let (est, se) = mc;
    let tol = 5.0 * se + 1e-9;
    assert!(
        (closed - est).abs() <= tol,
        "{what}: closed {closed}, mc {est} ± {se} (|Δ| = {:e} > {tol:e})",
        (closed - est).abs()
    );
}

// ---------------------------------------------------------------- stats ---

#[test]
fn stats_relu_and_identity_are_exact() {
    let s = nonlinearity_stats(Act::Relu, 64).unwrap();
    assert_close(s.a, (2.0 * std::f64::consts::PI).sqrt().recip(), 1e-15, "relu a");
    assert_close(s.b, 0.5, 1e-15, "relu b");
    assert_close(s.c, 0.5, 1e-15, "relu c");
    let s = nonlinearity_stats(Act::Identity, 64).unwrap();
    assert_eq!((s.a, s.b, s.c), (0.0, 1.0, 1.0));
}

#[test]
fn stats_tanh_match_simpson_oracle_and_stein_identity() {
    let s = nonlinearity_stats(Act::Tanh, 64).unwrap();
    let b_oracle = simpson_gauss(|u| u * u.tanh());
    let c_oracle = simpson_gauss(|u| u.tanh().powi(2));
    assert_close(s.a, 0.0, 1e-15, "tanh a (odd)");
    assert_close(s.b, b_oracle, 1e-12, "tanh b vs Simpson");
    assert_close(s.c, c_oracle, 1e-12, "tanh c vs Simpson");
    // Gaussian integration by parts: E[u tanh u] = E[1 − tanh²u] ⇒ b + c = 1.
    assert_close(s.b + s.c, 1.0, 1e-12, "tanh b + c");
}

#[test]
fn stats_hardtanh_match_simpson_oracle() {
    let s = nonlinearity_stats(Act::HardTanh, 64).unwrap();
    let b_oracle = simpson_gauss(|u| u * u.clamp(-1.0, 1.0));
    let c_oracle = simpson_gauss(|u| u.clamp(-1.0, 1.0).powi(2));
    assert_close(s.b, b_oracle, 1e-12, "hardtanh b vs Simpson");
    assert_close(s.c, c_oracle, 1e-12, "hardtanh c vs Simpson");
}

#[test]
fn stats_reject_tiny_order() {
    assert!(nonlinearity_stats(Act::Tanh, 8).is_err());
}

// ------------------------------------------------------------------ psd ---

#[test]
fn floor_psd_repairs_and_counts() {
    let before = psd_floor_events();
    // Rank-one 2×2 with a −1e-10 eigenvalue perturbation.
    let cov = arr2(&[[1.0, 1.0], [1.0, 1.0 - 1e-10]]);
    let fixed = floor_psd(&cov).unwrap();
    assert!(psd_floor_events() > before, "floor event not counted");
    let eig = nalgebra::SymmetricEigen::new(nalgebra::DMatrix::from_fn(2, 2, |i, j| fixed[(i, j)]));
    assert!(eig.eigenvalues.iter().all(|&v| v >= 0.5e-12));
}

#[test]
fn floor_psd_rejects_indefinite_and_asymmetric() {
    let cov = arr2(&[[1.0, 2.0], [2.0, 1.0]]); // eigenvalues 3, −1
    assert!(matches!(floor_psd(&cov), Err(crate::Error::NonPsd(_))));
    let cov = arr2(&[[1.0, 0.3], [0.2, 1.0]]);
    assert!(matches!(floor_psd(&cov), Err(crate::Error::NonPsd(_))));
}

// ------------------------------------------------------------------- i2 ---

#[test]
fn i2_relu_closed_form_special_points() {
    // ρ = 0: E[relu]² = 1/(2π); ρ = 1: E[relu²] = 1/2; ρ = −1: disjoint supports.
    let c0 = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
    assert_close(
        i2(Act::Relu, Act::Relu, &c0).unwrap(),
        1.0 / (2.0 * std::f64::consts::PI),
        1e-14,
        "i2 relu ρ=0",
    );
    let c1 = arr2(&[[1.0, 1.0], [1.0, 1.0]]);
    assert_close(i2(Act::Relu, Act::Relu, &c1).unwrap(), 0.5, 1e-9, "i2 relu ρ=1");
    let cm = arr2(&[[1.0, -1.0], [-1.0, 1.0]]);
    assert_close(i2(Act::Relu, Act::Relu, &cm).unwrap(), 0.0, 1e-9, "i2 relu ρ=−1");
}

#[test]
fn i2_matches_simpson_oracle_across_tags() {
    // Oracle: iterated integral over the outer variable with an inner Simpson
    // conditional mean — totally independent panels from the implementation.
    let cov: Array2<f64> = arr2(&[[1.3, 0.55], [0.55, 0.8]]);
    let (s1, s2) = (cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt());
    let rho = cov[(0, 1)] / (s1 * s2);
    let t = (1.0 - rho * rho).sqrt();
    for (g1, g2) in [
        (Act::Relu, Act::Relu),
        (Act::Relu, Act::Tanh),
        (Act::Tanh, Act::Tanh),
        (Act::HardTanh, Act::Relu),
        (Act::HardTanh, Act::HardTanh),
        (Act::Identity, Act::Tanh),
        (Act::Identity, Act::Relu),
    ] {
        let outer_kinks: Vec<f64> = g1.kinks().iter().map(|k| k / s1).collect();
        let oracle = simpson_gauss_split(
            |u| {
                let inner_kinks: Vec<f64> =
                    g2.kinks().iter().map(|k| (k / s2 - rho * u) / t).collect();
                let inner =
                    simpson_gauss_split(|v| g2.apply(s2 * (rho * u + t * v)), &inner_kinks);
                g1.apply(s1 * u) * inner
            },
            &outer_kinks,
        );
        let got = i2(g1, g2, &cov).unwrap();
        assert_close(got, oracle, 1e-10, &format!("i2 {g1:?}/{g2:?} vs Simpson"));
    }
}

#[test]
fn i2_matches_mc() {
    let cov = arr2(&[[0.9, -0.35], [-0.35, 1.4]]);
    for (g1, g2) in [(Act::Relu, Act::Relu), (Act::Tanh, Act::Relu), (Act::HardTanh, Act::Tanh)] {
        let mc = mc_oracle(&cov, &[Factor::Val(g1), Factor::Val(g2)], 2_000_000, 11).unwrap();
        assert_mc(i2(g1, g2, &cov).unwrap(), mc, &format!("i2 {g1:?}/{g2:?}"));
    }
}

#[test]
fn i2_degenerate_variance_is_finite() {
    let cov = arr2(&[[0.0, 0.0], [0.0, 2.0]]);
    assert_close(i2(Act::Relu, Act::Relu, &cov).unwrap(), 0.0, 1e-15, "i2 σ₁=0");
    assert_close(i2(Act::Tanh, Act::Relu, &cov).unwrap(), 0.0, 1e-15, "i2 σ₁=0 tanh");
}

// ------------------------------------------------------------------- i3 ---

#[test]
fn i3_relu_independent_factorization() {
    // z₁ ⟂ z₃: E[1{z₁>0} z₂ relu(z₃)] = ρ₁₂/(2π) + ρ₂₃/4 for unit variances.
    let (r12, r23) = (0.6, -0.3);
    let cov = arr2(&[[1.0, r12, 0.0], [r12, 1.0, r23], [0.0, r23, 1.0]]);
    let want = r12 / (2.0 * std::f64::consts::PI) + r23 / 4.0;
    assert_close(i3(Act::Relu, Act::Relu, &cov).unwrap(), want, 1e-12, "i3 relu ρ₁₃=0");
}

#[test]
fn i3_relu_coincident_variables() {
    // z₃ = z₁: E[1{z>0} z₂ z] = ρ₁₂ E[z²; z>0] = ρ₁₂/2.
    let r12 = 0.45;
    let cov = arr2(&[[1.0, r12, 1.0], [r12, 1.0, r12], [1.0, r12, 1.0]]);
    assert_close(i3(Act::Relu, Act::Relu, &cov).unwrap(), r12 / 2.0, 1e-10, "i3 ρ₁₃=1");
    // z₃ = −z₁: indicator supports disjoint.
    let cov = arr2(&[[1.0, r12, -1.0], [r12, 1.0, -r12], [-1.0, -r12, 1.0]]);
    assert_close(i3(Act::Relu, Act::Relu, &cov).unwrap(), 0.0, 1e-12, "i3 ρ₁₃=−1");
}

#[test]
fn i3_matches_mc_across_tags() {
    let cov = arr2(&[[1.2, 0.4, 0.5], [0.4, 0.9, -0.2], [0.5, -0.2, 1.1]]);
    for (gd, gv) in [
        (Act::Relu, Act::Relu),
        (Act::Relu, Act::Tanh),
        (Act::HardTanh, Act::Relu),
        (Act::HardTanh, Act::HardTanh),
        (Act::Identity, Act::Relu),
    ] {
        let mc = mc_oracle(
            &cov,
            &[Factor::Deriv(gd), Factor::Raw, Factor::Val(gv)],
            2_000_000,
            23,
        )
        .unwrap();
        assert_mc(i3(gd, gv, &cov).unwrap(), mc, &format!("i3 {gd:?}/{gv:?}"));
    }
}

#[test]
fn i3_relu_closed_matches_generic_quadrature_shape() {
    // The hardtanh generic path with saturation pushed far out acts like
    // identity-derivative; compare against the Stein reduction directly.
    let cov = arr2(&[[0.01, 0.005, 0.01], [0.005, 0.9, -0.1], [0.01, -0.1, 0.05]]);
    // With σ₁ = 0.1 the kinks at ±1 sit at ±10σ, so the saturated-tail mass
    // (~1e-23) is invisible and E[g′(z₁) z₂ g(z₃)] = Cov(z₂,z₃)·E[g′(z₃)].
    let got = i3(Act::HardTanh, Act::Tanh, &cov).unwrap();
    let sub = arr2(&[[cov[(1, 1)], cov[(1, 2)]], [cov[(1, 2)], cov[(2, 2)]]]);
    let want = i2(Act::Identity, Act::Tanh, &sub).unwrap();
    assert_close(got, want, 1e-10, "i3 saturated hardtanh = Stein pair");
}

#[test]
fn i3_zero_variances() {
    let mut cov = arr2(&[[0.0, 0.0, 0.0], [0.0, 1.0, 0.3], [0.0, 0.3, 1.0]]);
    // σ₁ = 0, relu′(0) = 0.
    assert_close(i3(Act::Relu, Act::Relu, &cov).unwrap(), 0.0, 1e-15, "i3 σ₁=0 relu");
    // σ₁ = 0, hardtanh′(0) = 1 ⇒ Stein pair on (z₂, z₃).
    let want = i2(Act::Identity, Act::Relu, &arr2(&[[1.0, 0.3], [0.3, 1.0]])).unwrap();
    assert_close(i3(Act::HardTanh, Act::Relu, &cov).unwrap(), want, 1e-12, "i3 σ₁=0 hardtanh");
    cov = arr2(&[[1.0, 0.3, 0.0], [0.3, 1.0, 0.0], [0.0, 0.0, 0.0]]);
    assert_close(i3(Act::Relu, Act::Relu, &cov).unwrap(), 0.0, 1e-15, "i3 σ₃=0");
}

// ------------------------------------------------------------------- i4 ---

fn i4_brute_force_relu(cov: &Array2<f64>, g3: Act, g4: Act) -> f64 {
    // Independent outer integrator: 2-d Simpson over the positive quadrant in
    // physical w coordinates against the explicit normal density, with the
    // same conditional inner closed form (itself MC-pinned elsewhere).
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(0, 1)];
    let b = [[cov[(2, 0)], cov[(2, 1)]], [cov[(3, 0)], cov[(3, 1)]]];
    let inv = [
        [cov[(1, 1)] / det, -cov[(0, 1)] / det],
        [-cov[(0, 1)] / det, cov[(0, 0)] / det],
    ];
    let mut a = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] = b[i][0] * inv[0][j] + b[i][1] * inv[1][j];
        }
    }
    let c33 = (cov[(2, 2)] - a[0][0] * b[0][0] - a[0][1] * b[0][1]).max(0.0);
    let c44 = (cov[(3, 3)] - a[1][0] * b[1][0] - a[1][1] * b[1][1]).max(0.0);
    let c34 = cov[(2, 3)] - a[0][0] * b[1][0] - a[0][1] * b[1][1];
    let (s3, s4) = (c33.sqrt(), c44.sqrt());
    let r = (c34 / (s3 * s4)).clamp(-1.0, 1.0);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let (hi1, hi2) = (8.5 * cov[(0, 0)].sqrt(), 8.5 * cov[(1, 1)].sqrt());
    let n = 480usize;
    let (h1, h2) = (hi1 / n as f64, hi2 / n as f64);
    let sw = |i: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let mut acc = 0.0;
    for i in 0..=n {
        let w1 = i as f64 * h1;
        for j in 0..=n {
            let w2 = j as f64 * h2;
            let q = (cov[(1, 1)] * w1 * w1 - 2.0 * cov[(0, 1)] * w1 * w2
                + cov[(0, 0)] * w2 * w2)
                / det;
            let pdf = norm * (-0.5 * q).exp();
            let mu3 = a[0][0] * w1 + a[0][1] * w2;
            let mu4 = a[1][0] * w1 + a[1][1] * w2;
            acc += sw(i) * sw(j) * pdf * super::cond::pair_mean(g3, g4, mu3, mu4, s3, s4, r);
        }
    }
    acc * h1 * h2 / 9.0
}

#[test]
fn i4_relu_matches_independent_quadrature() {
    let cov = arr2(&[
        [1.0, 0.35, 0.3, -0.2],
        [0.35, 0.8, 0.1, 0.4],
        [0.3, 0.1, 1.2, 0.5],
        [-0.2, 0.4, 0.5, 0.9],
    ]);
    let got = i4(Act::Relu, Act::Relu, Act::Relu, &cov).unwrap();
    let want = i4_brute_force_relu(&cov, Act::Relu, Act::Relu);
    assert_close(got, want, 5e-8, "i4 relu vs Simpson outer");
}

#[test]
fn i4_matches_mc_across_tags() {
    let cov = arr2(&[
        [1.1, 0.3, 0.25, -0.15],
        [0.3, 0.9, 0.05, 0.35],
        [0.25, 0.05, 1.0, 0.45],
        [-0.15, 0.35, 0.45, 0.8],
    ]);
    for (gd, g3, g4) in [
        (Act::Relu, Act::Relu, Act::Relu),
        (Act::Relu, Act::Relu, Act::Tanh),
        (Act::Relu, Act::Identity, Act::Identity),
        (Act::HardTanh, Act::Relu, Act::Relu),
        (Act::HardTanh, Act::HardTanh, Act::HardTanh),
        (Act::Tanh, Act::Tanh, Act::Tanh),
        (Act::Identity, Act::Relu, Act::Tanh),
    ] {
        let mc = mc_oracle(
            &cov,
            &[Factor::Deriv(gd), Factor::Deriv(gd), Factor::Val(g3), Factor::Val(g4)],
            2_000_000,
            37,
        )
        .unwrap();
        assert_mc(i4(gd, g3, g4, &cov).unwrap(), mc, &format!("i4 {gd:?}/{g3:?}/{g4:?}"));
    }
}

#[test]
fn i4_value_argument_symmetry() {
    // Swapping z₃ and z₄ (rows/cols 2 and 3) must not change the value.
    let cov = arr2(&[
        [1.0, 0.2, 0.3, -0.1],
        [0.2, 1.3, 0.15, 0.5],
        [0.3, 0.15, 0.7, 0.2],
        [-0.1, 0.5, 0.2, 1.1],
    ]);
    let mut swapped = cov.clone();
    swapped.swap((2, 2), (3, 3));
    for i in 0..4 {
        if i != 2 && i != 3 {
            swapped.swap((i, 2), (i, 3));
            swapped.swap((2, i), (3, i));
        }
    }
    let a = i4(Act::Relu, Act::Relu, Act::Tanh, &cov).unwrap();
    let b = i4(Act::Relu, Act::Tanh, Act::Relu, &swapped).unwrap();
    assert_close(a, b, 1e-9, "i4 swap symmetry");
}

#[test]
fn i4_degenerate_outer_blocks() {
    // z₂ = z₁ exactly (rank-one outer): compare to MC.
    let cov = arr2(&[
        [1.0, 1.0, 0.3, 0.2],
        [1.0, 1.0, 0.3, 0.2],
        [0.3, 0.3, 1.0, 0.4],
        [0.2, 0.2, 0.4, 1.0],
    ]);
    let got = i4(Act::Relu, Act::Relu, Act::Relu, &cov).unwrap();
    let mc = mc_oracle(
        &cov,
        &[
            Factor::Deriv(Act::Relu),
            Factor::Deriv(Act::Relu),
            Factor::Val(Act::Relu),
            Factor::Val(Act::Relu),
        ],
        2_000_000,
        53,
    )
    .unwrap();
    assert_mc(got, mc, "i4 rank-one outer");
    // σ₁ = 0 with relu: derivative frozen at relu′(0) = 0.
    let cov0 = arr2(&[
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.3, 0.2],
        [0.0, 0.3, 1.0, 0.4],
        [0.0, 0.2, 0.4, 1.0],
    ]);
    assert_close(
        i4(Act::Relu, Act::Relu, Act::Relu, &cov0).unwrap(),
        0.0,
        1e-15,
        "i4 σ₁=0 relu",
    );
}

// --------------------------------------------------------- price/stein ---

#[test]
fn price_stein_cross_is_second_order_accurate() {
    let (sxx, syy, sxy) = (1.4, 0.7, 0.9);
    let mut errs = Vec::new();
    for rho in [0.1, 0.05] {
        let cov = arr2(&[[sxx, rho * sxy], [rho * sxy, syy]]);
        let exact = i2(Act::Tanh, Act::Tanh, &cov).unwrap();
        let approx = price_stein_cross(Act::Tanh, Act::Tanh, sxx, syy, sxy, rho).unwrap();
        errs.push((approx - exact).abs());
    }
    // Halving ρ must shrink the error ~4×: allow ≥ 3×.
    assert!(
        errs[1] * 3.0 <= errs[0] + 1e-14,
        "expansion not second order: errors {errs:?}"
    );
    // And at ρ = 0 it is exactly the product of means.
    let cov0 = arr2(&[[sxx, 0.0], [0.0, syy]]);
    let exact0 = i2(Act::Tanh, Act::Tanh, &cov0).unwrap();
    let approx0 = price_stein_cross(Act::Tanh, Act::Tanh, sxx, syy, sxy, 0.0).unwrap();
    assert_close(approx0, exact0, 1e-12, "price/stein at ρ=0");
}

#[test]
fn price_stein_rejects_bad_arguments() {
    assert!(price_stein_cross(Act::Tanh, Act::Tanh, 0.0, 1.0, 0.5, 0.1).is_err());
    assert!(price_stein_cross(Act::Tanh, Act::Tanh, 1.0, 1.0, 0.5, 1.5).is_err());
}

// ------------------------------------------------------------ mc oracle ---

#[test]
fn mc_oracle_is_deterministic_and_calibrated() {
    let cov = arr2(&[[1.0, 0.5], [0.5, 1.0]]);
    let f = [Factor::Val(Act::Relu), Factor::Val(Act::Relu)];
    let (a1, se1) = mc_oracle(&cov, &f, 200_000, 7).unwrap();
    let (a2, se2) = mc_oracle(&cov, &f, 200_000, 7).unwrap();
    assert_eq!(a1, a2);
    assert_eq!(se1, se2);
    let (b1, _) = mc_oracle(&cov, &f, 200_000, 8).unwrap();
    assert_ne!(a1, b1);
    // E[z₁²] estimator on N(0,1): SE ≈ √(2/n).
    let cov1 = arr2(&[[1.0]]);
    let (m, se) = mc_oracle(&cov1, &[Factor::Val(Act::Identity)], 400_000, 9).unwrap();
    assert!(m.abs() < 5.0 * se, "mean of z should be ~0 within 5 SE");
    assert!((se - (1.0f64 / 400_000.0).sqrt()).abs() < 0.1 * se, "SE calibration");
}

#[test]
fn mc_oracle_shape_errors() {
    let cov = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
    assert!(mc_oracle(&cov, &[Factor::Raw], 100, 1).is_err());
    assert!(mc_oracle(&cov, &[Factor::Raw, Factor::Raw], 0, 1).is_err());
}

// ------------------------------------------------------------ properties ---

fn small_correlation() -> impl Strategy<Value = f64> {
    -0.999f64..0.999f64
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn i2_relu_increasing_in_correlation(r1 in small_correlation(), r2 in small_correlation()) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let c_lo = arr2(&[[1.0, lo], [lo, 1.0]]);
        let c_hi = arr2(&[[1.0, hi], [hi, 1.0]]);
        let v_lo = i2(Act::Relu, Act::Relu, &c_lo).unwrap();
        let v_hi = i2(Act::Relu, Act::Relu, &c_hi).unwrap();
        prop_assert!(v_hi >= v_lo - 1e-12);
    }

    #[test]
    fn i2_is_symmetric(r in small_correlation(), s1 in 0.1f64..2.0, s2 in 0.1f64..2.0) {
        let cov = arr2(&[[s1 * s1, r * s1 * s2], [r * s1 * s2, s2 * s2]]);
        let swapped = arr2(&[[s2 * s2, r * s1 * s2], [r * s1 * s2, s1 * s1]]);
        for (g1, g2) in [(Act::Relu, Act::Tanh), (Act::HardTanh, Act::Relu)] {
            let a = i2(g1, g2, &cov).unwrap();
            let b = i2(g2, g1, &swapped).unwrap();
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn conditional_mean_derivative_consistency(
        mu in -3.0f64..3.0,
        s in 0.05f64..2.0,
        tag_idx in 0usize..4,
    ) {
        let tag = [Act::Relu, Act::HardTanh, Act::Tanh, Act::Identity][tag_idx];
        // d/dμ E[g(μ + sZ)] = E[g′(μ + sZ)]
        let h = 1e-5;
        let fd = (cm1(tag, mu + h, s) - cm1(tag, mu - h, s)) / (2.0 * h);
        let an = cd1(tag, mu, s);
        prop_assert!((fd - an).abs() < 1e-6, "tag {tag:?}: fd {fd} vs analytic {an}");
    }

    #[test]
    fn i4_relu_bounded_by_cauchy_schwarz(
        r12 in -0.95f64..0.95,
        r34 in -0.95f64..0.95,
    ) {
        // All-ReLU integrand is a product of nonnegative factors; bound by
        // E[g(z₃)²]^½ E[g(z₄)²]^½ = s₃s₄/2 at unit variances.
        let cov = arr2(&[
            [1.0, r12, 0.0, 0.0],
            [r12, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, r34],
            [0.0, 0.0, r34, 1.0],
        ]);
        let v = i4(Act::Relu, Act::Relu, Act::Relu, &cov).unwrap();
        prop_assert!(v >= -1e-10);
        prop_assert!(v <= 0.5 + 1e-7);
    }

    #[test]
    fn i4_factorizes_on_independent_blocks(r34 in -0.9f64..0.9, r12 in -0.9f64..0.9) {
        let cov = arr2(&[
            [1.0, r12, 0.0, 0.0],
            [r12, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, r34],
            [0.0, 0.0, r34, 1.0],
        ]);
        let got = i4(Act::Relu, Act::Relu, Act::Relu, &cov).unwrap();
        // E[1{z₁>0}1{z₂>0}] = orthant probability; independent of (z₃,z₄).
        let orthant = 0.25 + r12.asin() / (2.0 * std::f64::consts::PI);
        let pair = i2(Act::Relu, Act::Relu, &arr2(&[[1.0, r34], [r34, 1.0]])).unwrap();
        prop_assert!((got - orthant * pair).abs() < 2e-7, "{got} vs {}", orthant * pair);
    }
}
