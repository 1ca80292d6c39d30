//! Four-point expectation E[g′(z₁) g′(z₂) g₃(z₃) g₄(z₄)].
//!
//! Strategy: integrate deterministically over the conditioning pair
//! w = (z₁, z₂) — only where the derivative weight is nonzero — and evaluate
//! the conditional expectation of g₃(z₃) g₄(z₄) | w in closed form (the
//! conditional covariance does not depend on w, so its factorization is
//! hoisted out of the quadrature loop).
//!
//! Outer rules by derivative tag:
//! - ReLU: the weight is the indicator of a wedge in whitened coordinates;
//!   polar coordinates with Gauss–Legendre in the angle and composite
//!   Gauss–Legendre panels in the radius against r·e^{−r²/2}. Panels are
//!   additionally split wherever a conditionally deterministic value factor
//!   drags an activation kink across the ray, so every panel is analytic and
//!   the composite rule converges spectrally. (A Laguerre rule in s = r²/2
//!   does not work here: value factors contribute odd powers of r = √(2s),
//!   and half-integer powers of s defeat polynomial quadrature.)
//! - hardtanh: the weight is the indicator of the box (−1,1)²; tensor
//!   Gauss–Legendre on the box (clipped to ±8σ per axis) against the explicit
//!   bivariate normal density.
//! - tanh: smooth weight, tensor Gauss–Hermite in whitened coordinates.
//! - identity: weight ≡ 1; the integral collapses to the (z₃, z₄) marginal.
//!
//! Degenerate covariances are classified on the *raw* (pre-floor) entries:
//! eigenvalue flooring lifts exact zeros to ~1e-12, which would misroute an
//! exactly rank-one outer block onto the catastrophically ill-conditioned
//! generic path (the wedge collapses and the conditional slopes diverge).
//!
//! Each path is evaluated at escalating orders; if the refinement moves the
//! estimate by more than the documented tolerance a further order is tried,
//! and a persistent gap raises [`Error::Accuracy`].

use ndarray::Array2;

use crate::activations::Act;
use crate::error::{Error, Result};
use crate::special::{gauss_hermite_prob, gauss_legendre};

use super::cond::pair_mean;
use super::floor_psd;

/// Documented absolute tolerance of [`i4`].
pub(crate) const I4_TOL: f64 = 1e-7;

/// Radial cutoff for the polar rule: e^{−R²/2} ≈ 5e-32 beyond this.
const R_MAX: f64 = 12.0;

/// A conditional mean is treated as deterministic (its activation kink becomes
/// a hard panel boundary) when σ_cond ≤ KINK_SHARP · |mean slope|: the erf
/// transition is then far narrower than the closest quadrature node gets to
/// the panel edge.
const KINK_SHARP: f64 = 1e-6;

/// Conditional law of (z₃, z₄) given w = (z₁, z₂): mean A·w, constant
/// standard deviations and correlation.
struct InnerPair {
    g3: Act,
    g4: Act,
    a: [[f64; 2]; 2],
    s3: f64,
    s4: f64,
    r: f64,
}

impl InnerPair {
    fn eval(&self, w1: f64, w2: f64) -> f64 {
        let mu3 = self.a[0][0] * w1 + self.a[0][1] * w2;
        let mu4 = self.a[1][0] * w1 + self.a[1][1] * w2;
        pair_mean(self.g3, self.g4, mu3, mu4, self.s3, self.s4, self.r)
    }

    /// Radii in (0, R_MAX) where a conditionally deterministic value factor's
    /// activation kink crosses the ray r ↦ (dir1·r, dir2·r).
    fn radial_kinks(&self, dir1: f64, dir2: f64, out: &mut Vec<f64>) {
        for (g, s, a) in [(self.g3, self.s3, self.a[0]), (self.g4, self.s4, self.a[1])] {
            let slope = a[0] * dir1 + a[1] * dir2;
            if slope != 0.0 && s <= KINK_SHARP * slope.abs() {
                for &k in g.kinks() {
                    let r = k / slope;
                    if r > 1e-9 && r < R_MAX {
                        out.push(r);
                    }
                }
            }
        }
    }
}

/// Build the conditional law from the full 4×4 covariance (outer block
/// assumed invertible with determinant `det`).
fn inner_pair(g3: Act, g4: Act, c: &Array2<f64>, det: f64) -> InnerPair {
    // Σw⁻¹ = [[c11, −c01], [−c01, c00]] / det; A = B Σw⁻¹ with B the
    // cross-covariance of (z₃, z₄) against (z₁, z₂).
    let b = [[c[(2, 0)], c[(2, 1)]], [c[(3, 0)], c[(3, 1)]]];
    let inv = [
        [c[(1, 1)] / det, -c[(0, 1)] / det],
        [-c[(0, 1)] / det, c[(0, 0)] / det],
    ];
    let mut a = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            a[i][j] = b[i][0] * inv[0][j] + b[i][1] * inv[1][j];
        }
    }
    // Σc = Σ₃₄ − A Bᵀ.
    let c33 = (c[(2, 2)] - a[0][0] * b[0][0] - a[0][1] * b[0][1]).max(0.0);
    let c44 = (c[(3, 3)] - a[1][0] * b[1][0] - a[1][1] * b[1][1]).max(0.0);
    let c34 = c[(2, 3)] - a[0][0] * b[1][0] - a[0][1] * b[1][1];
    let s3 = c33.sqrt();
    let s4 = c44.sqrt();
    let r = if s3 > 0.0 && s4 > 0.0 {
        (c34 / (s3 * s4)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    InnerPair { g3, g4, a, s3, s4, r }
}

/// ∫ φ(x) · weight(x) · inner(x) dx over kink-split panels on (−∞, ∞),
/// used when the outer pair degenerates to a single Gaussian direction.
fn outer_single(
    weight: impl Fn(f64) -> f64,
    inner: impl Fn(f64) -> f64,
    kinks: &[f64],
    order: usize,
) -> f64 {
    crate::special::integrate_gauss_segments(|x| weight(x) * inner(x), kinks, order)
}

/// E[g′(z₁) g′(z₂) g₃(z₃) g₄(z₄)] when z₂ = gamma·z₁ almost surely
/// (rank-one outer block). Conditions (z₃, z₄) on z₁ alone.
fn i4_rank1(
    gd: Act,
    g3: Act,
    g4: Act,
    c: &Array2<f64>,
    gamma: f64,
    order: usize,
) -> f64 {
    let c00 = c[(0, 0)].max(0.0);
    let s1 = c00.sqrt();
    let a3 = c[(0, 2)] / c00;
    let a4 = c[(0, 3)] / c00;
    let c33 = (c[(2, 2)] - a3 * a3 * c00).max(0.0);
    let c44 = (c[(3, 3)] - a4 * a4 * c00).max(0.0);
    let c34 = c[(2, 3)] - a3 * a4 * c00;
    let s3 = c33.sqrt();
    let s4 = c44.sqrt();
    let r = if s3 > 0.0 && s4 > 0.0 {
        (c34 / (s3 * s4)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let mut kinks: Vec<f64> = gd.kinks().iter().map(|k| k / s1).collect();
    if gamma != 0.0 {
        kinks.extend(gd.kinks().iter().map(|k| k / (gamma * s1)));
    }
    // Deterministic value factors drag their own kinks into the outer axis.
    for (g, s, a) in [(g3, s3, a3), (g4, s4, a4)] {
        let slope = a * s1;
        if slope != 0.0 && s <= KINK_SHARP * slope.abs() {
            kinks.extend(g.kinks().iter().map(|k| k / slope));
        }
    }
    outer_single(
        |x| {
            let z1 = s1 * x;
            gd.deriv(z1) * gd.deriv(gamma * z1)
        },
        |x| {
            let z1 = s1 * x;
            pair_mean(g3, g4, a3 * z1, a4 * z1, s3, s4, r)
        },
        &kinks,
        order,
    )
}

/// ReLU outer: polar quadrature over the wedge {w₁ > 0, w₂ > 0} in whitened
/// coordinates — Gauss–Legendre in the angle, composite kink-split
/// Gauss–Legendre in the radius against r·e^{−r²/2}.
fn relu_outer(c: &Array2<f64>, inner: &InnerPair, n_r: usize, n_th: usize) -> f64 {
    let l11 = c[(0, 0)].sqrt();
    let l21 = c[(0, 1)] / l11;
    let l22 = (c[(1, 1)] - l21 * l21).max(0.0).sqrt();
    // w₁ > 0 ⇔ cos θ > 0; w₂ > 0 ⇔ l21 cos θ + l22 sin θ > 0.
    let alpha = l22.atan2(l21); // in (0, π) since l22 > 0
    let half_pi = std::f64::consts::FRAC_PI_2;
    let th_lo = (-half_pi).max(alpha - half_pi);
    let th_hi = half_pi.min(alpha + half_pi);
    if th_lo >= th_hi {
        return 0.0;
    }
    let rule_r = gauss_legendre(n_r);
    let rule_th = gauss_legendre(n_th);
    let mid = 0.5 * (th_lo + th_hi);
    let hw = 0.5 * (th_hi - th_lo);
    let mut cuts: Vec<f64> = Vec::with_capacity(12);
    let mut acc = 0.0;
    for (tn, tw) in rule_th.nodes.iter().zip(rule_th.weights.iter()) {
        let th = mid + hw * tn;
        let (sin_t, cos_t) = th.sin_cos();
        let dir1 = l11 * cos_t;
        let dir2 = l21 * cos_t + l22 * sin_t;
        cuts.clear();
        cuts.extend_from_slice(&[0.0, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, R_MAX]);
        inner.radial_kinks(dir1, dir2, &mut cuts);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut radial = 0.0;
        for seg in cuts.windows(2) {
            let (m, h) = (0.5 * (seg[0] + seg[1]), 0.5 * (seg[1] - seg[0]));
            let mut part = 0.0;
            for (rn, rw) in rule_r.nodes.iter().zip(rule_r.weights.iter()) {
                let r = m + h * rn;
                part += rw * r * (-0.5 * r * r).exp() * inner.eval(dir1 * r, dir2 * r);
            }
            radial += h * part;
        }
        acc += tw * radial;
    }
    acc * hw / (2.0 * std::f64::consts::PI)
}

/// hardtanh outer: tensor Gauss–Legendre over the box (−1,1)² (clipped to
/// ±8σ per axis) against the explicit bivariate normal density of w.
fn box_outer(c: &Array2<f64>, inner: &InnerPair, det: f64, n: usize) -> f64 {
    let s1 = c[(0, 0)].sqrt();
    let s2 = c[(1, 1)].sqrt();
    let lo1 = (-1.0f64).max(-8.0 * s1);
    let hi1 = 1.0f64.min(8.0 * s1);
    let lo2 = (-1.0f64).max(-8.0 * s2);
    let hi2 = 1.0f64.min(8.0 * s2);
    let rule = gauss_legendre(n);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let (m1, h1) = (0.5 * (lo1 + hi1), 0.5 * (hi1 - lo1));
    let (m2, h2) = (0.5 * (lo2 + hi2), 0.5 * (hi2 - lo2));
    let mut acc = 0.0;
    for (xn, xw) in rule.nodes.iter().zip(rule.weights.iter()) {
        let w1 = m1 + h1 * xn;
        for (yn, yw) in rule.nodes.iter().zip(rule.weights.iter()) {
            let w2 = m2 + h2 * yn;
            // density exponent: −½ wᵀ Σw⁻¹ w
            let q = (c[(1, 1)] * w1 * w1 - 2.0 * c[(0, 1)] * w1 * w2 + c[(0, 0)] * w2 * w2) / det;
            let pdf = norm * (-0.5 * q).exp();
            acc += xw * yw * pdf * inner.eval(w1, w2);
        }
    }
    acc * h1 * h2
}

/// Smooth-weight outer (tanh): tensor Gauss–Hermite in whitened coordinates.
fn smooth_outer(gd: Act, c: &Array2<f64>, inner: &InnerPair, n: usize) -> f64 {
    let l11 = c[(0, 0)].sqrt();
    let l21 = c[(0, 1)] / l11;
    let l22 = (c[(1, 1)] - l21 * l21).max(0.0).sqrt();
    let rule = gauss_hermite_prob(n);
    let mut acc = 0.0;
    for (xn, xw) in rule.nodes.iter().zip(rule.weights.iter()) {
        let w1 = l11 * xn;
        for (yn, yw) in rule.nodes.iter().zip(rule.weights.iter()) {
            let w2 = l21 * xn + l22 * yn;
            acc += xw * yw * gd.deriv(w1) * gd.deriv(w2) * inner.eval(w1, w2);
        }
    }
    acc
}

/// Escalating-order evaluation: returns the refined estimate once two
/// successive orders agree within half the tolerance.
fn escalate(mut eval: impl FnMut(usize) -> f64) -> Result<f64> {
    let mut prev = eval(0);
    for level in 1..3 {
        let cur = eval(level);
        if (cur - prev).abs() <= 0.5 * I4_TOL {
            return Ok(cur);
        }
        prev = cur;
    }
    let last = eval(3);
    let achieved = (last - prev).abs();
    if achieved <= 0.5 * I4_TOL {
        return Ok(last);
    }
    Err(Error::Accuracy {
        requested: I4_TOL,
        achieved,
        estimate: last,
    })
}

pub(crate) fn i4(gd: Act, g3: Act, g4: Act, cov: &Array2<f64>) -> Result<f64> {
    if cov.dim() != (4, 4) {
        return Err(Error::Shape(format!("i4 needs a 4×4 covariance, got {:?}", cov.dim())));
    }
    // Validates symmetry and rejects indefinite input; the repaired matrix is
    // only used on the full-rank generic path.
    let c = floor_psd(cov)?;
    // Degeneracy classification on the raw entries (see module docs).
    let sym = |i: usize, j: usize| 0.5 * (cov[(i, j)] + cov[(j, i)]);
    let v00 = sym(0, 0).max(0.0);
    let v11 = sym(1, 1).max(0.0);
    let v01 = sym(0, 1);
    let s3m = sym(2, 2).max(0.0).sqrt();
    let s4m = sym(3, 3).max(0.0).sqrt();
    let r34 = if s3m > 0.0 && s4m > 0.0 {
        (sym(2, 3) / (s3m * s4m)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    if gd == Act::Identity {
        return Ok(pair_mean(g3, g4, 0.0, 0.0, s3m, s4m, r34));
    }
    let scale = v00.max(v11).max(1e-300);
    let tiny = 1e-12 * scale;
    if v00 <= tiny && v11 <= tiny {
        let d0 = gd.deriv(0.0);
        return Ok(d0 * d0 * pair_mean(g3, g4, 0.0, 0.0, s3m, s4m, r34));
    }
    if v00 <= tiny || v11 <= tiny {
        // One derivative factor is frozen at zero; condition on the other.
        let iw = if v00 <= tiny { 1usize } else { 0usize };
        let d0 = gd.deriv(0.0);
        if d0 == 0.0 {
            return Ok(0.0);
        }
        let vww = sym(iw, iw);
        let sw = vww.sqrt();
        let a3 = sym(iw, 2) / vww;
        let a4 = sym(iw, 3) / vww;
        let c33 = (sym(2, 2) - a3 * a3 * vww).max(0.0);
        let c44 = (sym(3, 3) - a4 * a4 * vww).max(0.0);
        let c34 = sym(2, 3) - a3 * a4 * vww;
        let (s3, s4) = (c33.sqrt(), c44.sqrt());
        let r = if s3 > 0.0 && s4 > 0.0 {
            (c34 / (s3 * s4)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let mut kinks: Vec<f64> = gd.kinks().iter().map(|k| k / sw).collect();
        for (g, s, a) in [(g3, s3, a3), (g4, s4, a4)] {
            let slope = a * sw;
            if slope != 0.0 && s <= KINK_SHARP * slope.abs() {
                kinks.extend(g.kinks().iter().map(|k| k / slope));
            }
        }
        return Ok(d0
            * outer_single(
                |x| gd.deriv(sw * x),
                |x| pair_mean(g3, g4, a3 * sw * x, a4 * sw * x, s3, s4, r),
                &kinks,
                48,
            ));
    }
    let det_raw = v00 * v11 - v01 * v01;
    if det_raw <= 1e-11 * v00 * v11 {
        let gamma = v01 / v00;
        return escalate(|level| i4_rank1(gd, g3, g4, cov, gamma, 48 + 24 * level));
    }
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(0, 1)];
    let inner = inner_pair(g3, g4, &c, det);
    match gd {
        Act::Relu => {
            let orders = [(12usize, 28usize), (16, 42), (24, 64), (32, 96)];
            escalate(|level| relu_outer(&c, &inner, orders[level].0, orders[level].1))
        }
        Act::HardTanh => {
            let orders = [24usize, 36, 54, 80];
            escalate(|level| box_outer(&c, &inner, det, orders[level]))
        }
        Act::Tanh => {
            let orders = [32usize, 48, 72, 104];
            escalate(|level| smooth_outer(gd, &c, &inner, orders[level]))
        }
        Act::Identity => unreachable!("handled above"),
    }
}

/// Marginal sanity used in tests: E[g₃(z₃) g₄(z₄)] from the same machinery.
#[cfg(test)]
pub(crate) fn pair_marginal(g3: Act, g4: Act, s3: f64, s4: f64, r: f64) -> f64 {
    pair_mean(g3, g4, 0.0, 0.0, s3, s4, r)
}

#[cfg(test)]
mod smoke {
    use super::super::cond::cm1;
    use super::*;
    use ndarray::arr2;

    #[test]
    fn identity_weight_reduces_to_pair_marginal() {
        let cov = arr2(&[
            [1.0, 0.3, 0.2, 0.1],
            [0.3, 1.0, 0.0, 0.4],
            [0.2, 0.0, 1.0, 0.5],
            [0.1, 0.4, 0.5, 1.0],
        ]);
        let got = i4(Act::Identity, Act::Relu, Act::Relu, &cov).unwrap();
        let want = pair_marginal(Act::Relu, Act::Relu, 1.0, 1.0, 0.5);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn relu_quadrature_matches_independent_factorization() {
        // Independent blocks: E[g′g′ g g] = E[g′(z1)]E[g′(z2)]E[g(z3)g(z4)].
        let cov = arr2(&[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.7],
            [0.0, 0.0, 0.7, 1.0],
        ]);
        let got = i4(Act::Relu, Act::Relu, Act::Relu, &cov).unwrap();
        let want = 0.25 * pair_marginal(Act::Relu, Act::Relu, 1.0, 1.0, 0.7);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn floored_rank_one_outer_matches_exact_rank_one() {
        // An exactly rank-one outer block whose diagonal was lifted by ~1e-12
        // (the PSD floor does this) must land on the same rank-one path — the
        // generic wedge quadrature cannot resolve a 1e-6-radian opening.
        let q = 0.3470843091073095;
        let exact = arr2(&[
            [q, q, q, 0.0032640536549976],
            [q, q, q, 0.0032640536549976],
            [q, q, q, 0.0032640536549976],
            [0.0032640536549976, 0.0032640536549976, 0.0032640536549976, 0.5430811735988248],
        ]);
        let mut lifted = exact.clone();
        for i in 0..3 {
            lifted[(i, i)] += 1e-12;
        }
        let a = i4(Act::Relu, Act::Relu, Act::Relu, &exact).unwrap();
        let b = i4(Act::Relu, Act::Relu, Act::Relu, &lifted).unwrap();
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }

    #[test]
    fn cm1_relu_limits() {
        assert!((cm1(Act::Relu, 0.0, 1.0) - (2.0 * std::f64::consts::PI).sqrt().recip()).abs() < 1e-14);
        assert!((cm1(Act::Relu, 5.0, 1e-12) - 5.0).abs() < 1e-9);
    }
}
