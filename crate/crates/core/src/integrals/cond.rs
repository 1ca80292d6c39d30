//! Conditional one- and two-variable Gaussian moments of the activations.
//!
//! These are the closed-form kernels the higher-arity integrals condition on:
//! means of g(Z) and g′(Z) for scalar Gaussian Z, and truncated bivariate
//! normal moments that make the ReLU pair expectation exact.

use crate::activations::Act;
use crate::special::{bvn_pdf, bvn_upper, integrate_gauss_segments, norm_cdf, norm_sf, phi};

/// E[g(s·z)] for z ~ N(0,1).
pub(crate) fn marginal_mean(g: Act, s: f64) -> f64 {
    cm1(g, 0.0, s)
}

/// E[g(Z)] for Z ~ N(mu, s²), s ≥ 0.
pub fn cm1(g: Act, mu: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return g.apply(mu);
    }
    match g {
        Act::Identity => mu,
        Act::Relu => {
            let h = mu / s;
            mu * norm_cdf(h) + s * phi(h)
        }
        Act::HardTanh => {
            // −1·P(Z<−1) + 1·P(Z>1) + E[Z; −1<Z<1]
            let alpha = (-1.0 - mu) / s;
            let beta = (1.0 - mu) / s;
            -norm_cdf(alpha) + norm_sf(beta) + mu * (norm_cdf(beta) - norm_cdf(alpha))
                - s * (phi(beta) - phi(alpha))
        }
        Act::Tanh => integrate_gauss_segments(|u| (mu + s * u).tanh(), &[], 40),
    }
}

/// E[g′(Z)] for Z ~ N(mu, s²), s ≥ 0.
pub fn cd1(g: Act, mu: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return g.deriv(mu);
    }
    match g {
        Act::Identity => 1.0,
        Act::Relu => norm_cdf(mu / s),
        Act::HardTanh => norm_cdf((1.0 - mu) / s) - norm_cdf((-1.0 - mu) / s),
        Act::Tanh => integrate_gauss_segments(|u| Act::Tanh.deriv(mu + s * u), &[], 40),
    }
}

/// Truncated standard-bivariate-normal moments on {X > h, Y > k} at
/// correlation r: returns (P, E[X;·], E[Y;·], E[XY;·]) where each expectation
/// is unnormalized (i.e. already multiplied by the indicator).
pub(crate) fn trunc_biv(h: f64, k: f64, r: f64) -> (f64, f64, f64, f64) {
    let r = r.clamp(-1.0, 1.0);
    let t2 = 1.0 - r * r;
    if t2 <= 1e-24 {
        if r > 0.0 {
            // Y = X: region X > max(h, k).
            let m = h.max(k);
            let p = norm_sf(m);
            let ex = phi(m);
            let exy = p + m * phi(m);
            return (p, ex, ex, exy);
        }
        // Y = −X: region h < X < −k.
        if h >= -k {
            return (0.0, 0.0, 0.0, 0.0);
        }
        let p = norm_cdf(-k) - norm_cdf(h);
        let ex = phi(h) - phi(-k);
        let ex2 = p + h * phi(h) - (-k) * phi(-k);
        return (p, ex, -ex, -ex2);
    }
    let t = t2.sqrt();
    let zk = (k - r * h) / t;
    let zh = (h - r * k) / t;
    let p = bvn_upper(h, k, r);
    let ex = phi(h) * norm_sf(zk) + r * phi(k) * norm_sf(zh);
    let ey = phi(k) * norm_sf(zh) + r * phi(h) * norm_sf(zk);
    let exy =
        r * p + r * h * phi(h) * norm_sf(zk) + r * k * phi(k) * norm_sf(zh) + t2 * bvn_pdf(h, k, r);
    (p, ex, ey, exy)
}

/// E[relu(Z₃) relu(Z₄)] for (Z₃, Z₄) jointly normal with means (mu3, mu4),
/// standard deviations (s3, s4) ≥ 0 and correlation r.
pub fn relu_pair_mean(mu3: f64, mu4: f64, s3: f64, s4: f64, r: f64) -> f64 {
    if s3 <= 0.0 && s4 <= 0.0 {
        return mu3.max(0.0) * mu4.max(0.0);
    }
    if s3 <= 0.0 {
        return mu3.max(0.0) * cm1(Act::Relu, mu4, s4);
    }
    if s4 <= 0.0 {
        return mu4.max(0.0) * cm1(Act::Relu, mu3, s3);
    }
    let h = -mu3 / s3;
    let k = -mu4 / s4;
    let (p, ex, ey, exy) = trunc_biv(h, k, r);
    mu3 * mu4 * p + mu3 * s4 * ey + mu4 * s3 * ex + s3 * s4 * exy
}

/// E[g₃(Z₃) g₄(Z₄)] for (Z₃, Z₄) jointly normal with means (mu3, mu4),
/// standard deviations (s3, s4) ≥ 0 and correlation r. Closed forms where
/// available (ReLU pairs and anything with identity), otherwise a one-
/// dimensional kink-split quadrature over Z₃ with the Z₄ conditional mean in
/// closed form.
pub(crate) fn pair_mean(g3: Act, g4: Act, mu3: f64, mu4: f64, s3: f64, s4: f64, r: f64) -> f64 {
    if s3 <= 0.0 {
        return g3.apply(mu3) * cm1(g4, mu4, s4);
    }
    if s4 <= 0.0 {
        return g4.apply(mu4) * cm1(g3, mu3, s3);
    }
    let r = r.clamp(-1.0, 1.0);
    match (g3, g4) {
        (Act::Relu, Act::Relu) => relu_pair_mean(mu3, mu4, s3, s4, r),
        (Act::Identity, Act::Identity) => mu3 * mu4 + r * s3 * s4,
        // Stein: E[Z₃ g(Z₄)] = μ₃·E[g(Z₄)] + Cov(Z₃,Z₄)·E[g′(Z₄)].
        (Act::Identity, _) => mu3 * cm1(g4, mu4, s4) + r * s3 * s4 * cd1(g4, mu4, s4),
        (_, Act::Identity) => mu4 * cm1(g3, mu3, s3) + r * s3 * s4 * cd1(g3, mu3, s3),
        _ => {
            let t = (1.0 - r * r).max(0.0).sqrt();
            let kinks: Vec<f64> = g3.kinks().iter().map(|kk| (kk - mu3) / s3).collect();
            integrate_gauss_segments(
                |x| g3.apply(mu3 + s3 * x) * cm1(g4, mu4 + r * s4 * x, s4 * t),
                &kinks,
                40,
            )
        }
    }
}
