//! Scalar special functions and Gaussian quadrature rules.
//!
//! Everything downstream (activation statistics, function correlations, the
//! ODE right-hand sides, CDF distances) reduces to one-dimensional normal
//! integrals, the bivariate normal orthant probability, and fixed Gaussian
//! quadrature rules. This module owns those primitives:
//!
//! - `phi`, `norm_cdf`, `norm_sf`, `norm_quantile` — univariate normal.
//! - `bvn_upper` — bivariate normal upper-orthant probability P(X>h, Y>k),
//!   a port of Genz's rewrite of the Drezner–Wesolowsky algorithm (absolute
//!   accuracy ~1e-15, all |r| ≤ 1).
//! - `GaussRule` — Gauss–Legendre / probabilists' Gauss–Hermite /
//!   Gauss–Laguerre rules computed by Golub–Welsch on the Jacobi matrix and
//!   cached by order.
//! - `integrate_gauss_segments` — ∫ h(u) φ(u) du for piecewise-smooth `h`,
//!   split at supplied kink locations so each panel is smooth and the
//!   composite rule converges spectrally.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

/// Standard normal density.
#[inline]
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF Φ(x), via erfc for tail accuracy.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function Φ̄(x) = 1 − Φ(x).
#[inline]
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile Φ⁻¹(p) for p in (0, 1).
pub fn norm_quantile(p: f64) -> f64 {
    static STD_NORMAL: OnceLock<Normal> = OnceLock::new();
    STD_NORMAL
        .get_or_init(|| Normal::new(0.0, 1.0).unwrap())
        .inverse_cdf(p)
}

/// Bivariate standard normal density with correlation `r`.
#[inline]
pub fn bvn_pdf(x: f64, y: f64, r: f64) -> f64 {
    let s = 1.0 - r * r;
    (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * s)).exp() / (2.0 * PI * s.sqrt())
}

/// Upper-orthant probability P(X > h, Y > k) for standard bivariate normal
/// (X, Y) with correlation `r`.
///
/// Port of Genz's `BVND` (the Drezner–Wesolowsky integral for |r| < 0.925 and
/// the complementary expansion near |r| = 1), using a fixed 20-point
/// Gauss–Legendre rule throughout; absolute error is below 1e-14.
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    debug_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
    let r = r.clamp(-1.0, 1.0);
    if r == 1.0 {
        return norm_sf(h.max(k));
    }
    if r == -1.0 {
        // Y = -X: need P(X > h, X < -k).
        return (norm_cdf(-k) - norm_cdf(h)).max(0.0);
    }
    let rule = gauss_legendre(20);
    let two_pi = 2.0 * PI;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let sn = (asr * (x + 1.0) / 2.0).sin();
            bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
        }
        // Σw = 2, so bvn/2 ≈ ∫₀¹; the substitution θ = asr·u gives asr/(2π).
        bvn * asr / (2.0 * two_pi) + norm_cdf(-h) * norm_cdf(-k)
    } else {
        let mut k2 = k;
        if r < 0.0 {
            k2 = -k2;
            hk = -hk;
        }
        let a_s = (1.0 - r) * (1.0 + r);
        let a = a_s.sqrt();
        let bs = (h - k2) * (h - k2);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        let asr = -(bs / a_s + hk) / 2.0;
        if asr > -100.0 {
            bvn = a * asr.exp() * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0
                + c * d * a_s * a_s / 5.0);
        }
        if -hk < 100.0 {
            let b = bs.sqrt();
            let sp = two_pi.sqrt() * norm_cdf(-b / a);
            bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        let a2 = a / 2.0;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let xs = (a2 * (x + 1.0)) * (a2 * (x + 1.0));
            let rs = (1.0 - xs).sqrt();
            let asr = -(bs / xs + hk) / 2.0;
            if asr > -100.0 {
                let sp = 1.0 + c * xs * (1.0 + d * xs);
                let ep = (-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs;
                bvn += a2 * w * asr.exp() * (ep - sp);
            }
        }
        bvn = -bvn / two_pi;
        if r > 0.0 {
            bvn += norm_cdf(-h.max(k2));
        } else {
            bvn = -bvn + (norm_cdf(-h) - norm_cdf(-k2)).max(0.0);
        }
        bvn.clamp(0.0, 1.0)
    }
}

/// Lower-orthant probability P(X ≤ a, Y ≤ b) with correlation `r`.
#[inline]
pub fn bvn_cdf(a: f64, b: f64, r: f64) -> f64 {
    bvn_upper(-a, -b, r)
}

/// A one-dimensional Gaussian quadrature rule: ∫ w(x) f(x) dx ≈ Σ wᵢ f(xᵢ).
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum RuleKind {
    /// Weight 1 on [-1, 1].
    Legendre,
    /// Weight e^{-x²/2}/√(2π) on ℝ (probabilists' Hermite).
    HermiteProb,
    /// Weight e^{-x} on [0, ∞).
    Laguerre,
}

/// Golub–Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
/// matrix, weights are μ₀ · (first eigenvector component)².
fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> GaussRule {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for (i, &d) in diag.iter().enumerate() {
        j[(i, i)] = d;
    }
    for (i, &e) in offdiag.iter().enumerate() {
        j[(i, i + 1)] = e;
        j[(i + 1, i)] = e;
    }
    let eig = nalgebra::SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    GaussRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

fn rule_cache() -> &'static Mutex<HashMap<(RuleKind, usize), Arc<GaussRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<(RuleKind, usize), Arc<GaussRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached_rule(kind: RuleKind, n: usize) -> Arc<GaussRule> {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut cache = rule_cache().lock().unwrap();
    cache
        .entry((kind, n))
        .or_insert_with(|| {
            let rule = match kind {
                RuleKind::Legendre => {
                    let diag = vec![0.0; n];
                    let off: Vec<f64> = (1..n)
                        .map(|k| {
                            let k = k as f64;
                            (k * k / (4.0 * k * k - 1.0)).sqrt()
                        })
                        .collect();
                    golub_welsch(&diag, &off, 2.0)
                }
                RuleKind::HermiteProb => {
                    let diag = vec![0.0; n];
                    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
                    golub_welsch(&diag, &off, 1.0)
                }
                RuleKind::Laguerre => {
                    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
                    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
                    golub_welsch(&diag, &off, 1.0)
                }
            };
            Arc::new(rule)
        })
        .clone()
}

/// Gauss–Legendre rule on [-1, 1] (weight 1).
pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    cached_rule(RuleKind::Legendre, n)
}

/// Probabilists' Gauss–Hermite rule: ∫ f(u) φ(u) du ≈ Σ wᵢ f(xᵢ).
pub fn gauss_hermite_prob(n: usize) -> Arc<GaussRule> {
    cached_rule(RuleKind::HermiteProb, n)
}

/// Gauss–Laguerre rule: ∫₀^∞ f(s) e^{-s} ds ≈ Σ wᵢ f(xᵢ).
pub fn gauss_laguerre(n: usize) -> Arc<GaussRule> {
    cached_rule(RuleKind::Laguerre, n)
}

/// Integrate f over [lo, hi] with an `order`-point Gauss–Legendre rule.
pub fn integrate_legendre<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    let c = 0.5 * (hi + lo);
    let h = 0.5 * (hi - lo);
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(c + h * x);
    }
    acc * h
}

/// How far into the normal tail the segment integrator reaches; φ(12) ≈ 2e-32,
/// far below every tolerance used in this crate.
pub const GAUSS_TAIL: f64 = 12.0;

/// ∫ h(u) φ(u) du for piecewise-smooth `h` with kinks at `kinks`.
///
/// The real line is truncated to [-GAUSS_TAIL, GAUSS_TAIL], split at the kink
/// locations, and each panel gets an `order`-point Gauss–Legendre rule with
/// the normal density folded into the integrand. Panels are additionally split
/// at ±2 so the quadrature tracks the density's own curvature.
pub fn integrate_gauss_segments<F: FnMut(f64) -> f64>(mut h: F, kinks: &[f64], order: usize) -> f64 {
    let mut cuts: Vec<f64> = vec![-GAUSS_TAIL, -2.0, 0.0, 2.0, GAUSS_TAIL];
    cuts.extend(
        kinks
            .iter()
            .copied()
            .filter(|k| k.is_finite() && k.abs() < GAUSS_TAIL),
    );
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut acc = 0.0;
    for pair in cuts.windows(2) {
        acc += integrate_legendre(|u| h(u) * phi(u), pair[0], pair[1], order);
    }
    acc
}
