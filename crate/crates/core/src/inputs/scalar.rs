//! Scalar input laws applied i.i.d. across all latent dimensions, plus the
//! per-dimension affine Gaussian proxy.

use ndarray::{Array1, Array2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Beta, Cauchy, Distribution, Exp1, Pareto, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{row_rng, InputModel};

/// A scalar law for latent coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ScalarLawSpec {
    Uniform { a: f64, b: f64 },
    Beta { alpha: f64, beta: f64 },
    Poisson { lambda: f64 },
    Laplace { mu: f64, b: f64 },
    Pareto { scale: f64, shape: f64 },
    Lorentz { x0: f64, gamma: f64 },
    Gaussian { mu: f64, sigma: f64 },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        sigmas: Vec<f64>,
    },
    /// Dimension-wise μ_r + σ_r·Z with Z standard normal; vectors of length D
    /// or length 1 (broadcast).
    AffineProxy { mu: Vec<f64>, sigma: Vec<f64> },
}

impl ScalarLawSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        match self {
            ScalarLawSpec::Uniform { a, b } => {
                if !(b > a) {
                    return bad(format!("uniform needs a < b, got [{a}, {b}]"));
                }
            }
            ScalarLawSpec::Beta { alpha, beta } => {
                if !(*alpha > 0.0 && *beta > 0.0) {
                    return bad(format!("beta needs α, β > 0, got ({alpha}, {beta})"));
                }
            }
            ScalarLawSpec::Poisson { lambda } => {
                if !(*lambda > 0.0) {
                    return bad(format!("poisson needs λ > 0, got {lambda}"));
                }
            }
            ScalarLawSpec::Laplace { b, .. } => {
                if !(*b > 0.0) {
                    return bad(format!("laplace needs scale b > 0, got {b}"));
                }
            }
            ScalarLawSpec::Pareto { scale, shape } => {
                if !(*scale > 0.0 && *shape > 0.0) {
                    return bad(format!("pareto needs scale, shape > 0, got ({scale}, {shape})"));
                }
            }
            ScalarLawSpec::Lorentz { gamma, .. } => {
                if !(*gamma > 0.0) {
                    return bad(format!("lorentz needs γ > 0, got {gamma}"));
                }
            }
            ScalarLawSpec::Gaussian { sigma, .. } => {
                if !(*sigma > 0.0) {
                    return bad(format!("gaussian needs σ > 0, got {sigma}"));
                }
            }
            ScalarLawSpec::GaussianMixture { weights, means, sigmas } => {
                if weights.is_empty() || weights.len() != means.len() || weights.len() != sigmas.len() {
                    return bad("gaussian_mixture needs equal-length nonempty parameter vectors".into());
                }
                let wsum: f64 = weights.iter().sum();
                if (wsum - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
                    return bad(format!("gaussian_mixture weights must be ≥ 0 and sum to 1 (got {wsum})"));
                }
                if sigmas.iter().any(|&s| !(s > 0.0)) {
                    return bad("gaussian_mixture needs all σ > 0".into());
                }
            }
            ScalarLawSpec::AffineProxy { mu, sigma } => {
                if mu.is_empty() || sigma.is_empty() {
                    return bad("affine_proxy needs nonempty μ, σ vectors".into());
                }
                if sigma.iter().any(|&s| !(s > 0.0)) {
                    return bad("affine_proxy needs all σ > 0".into());
                }
            }
        }
        Ok(())
    }

    /// Scalar (mean, standard deviation) when finite; `None` for Lorentz and
    /// for Pareto with shape ≤ 2 (infinite variance). Affine proxy is
    /// per-dimension and handled by the column wrapper.
    fn scalar_moments(&self) -> Option<(f64, f64)> {
        match self {
            ScalarLawSpec::Uniform { a, b } => {
                Some(((a + b) / 2.0, (b - a) / 12f64.sqrt()))
            }
            ScalarLawSpec::Beta { alpha, beta } => {
                let s = alpha + beta;
                let mean = alpha / s;
                let var = alpha * beta / (s * s * (s + 1.0));
                Some((mean, var.sqrt()))
            }
            ScalarLawSpec::Poisson { lambda } => Some((*lambda, lambda.sqrt())),
            ScalarLawSpec::Laplace { mu, b } => Some((*mu, 2f64.sqrt() * b)),
            ScalarLawSpec::Pareto { scale, shape } => {
                if *shape <= 2.0 {
                    return None;
                }
                let mean = shape * scale / (shape - 1.0);
                let var = scale * scale * shape / ((shape - 1.0) * (shape - 1.0) * (shape - 2.0));
                Some((mean, var.sqrt()))
            }
            ScalarLawSpec::Lorentz { .. } => None,
            ScalarLawSpec::Gaussian { mu, sigma } => Some((*mu, *sigma)),
            ScalarLawSpec::GaussianMixture { weights, means, sigmas } => {
                let m1: f64 = weights.iter().zip(means).map(|(w, m)| w * m).sum();
                let m2: f64 = weights
                    .iter()
                    .zip(means)
                    .zip(sigmas)
                    .map(|((w, m), s)| w * (s * s + m * m))
                    .sum();
                Some((m1, (m2 - m1 * m1).max(0.0).sqrt()))
            }
            ScalarLawSpec::AffineProxy { .. } => None,
        }
    }

    fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng, dim: usize) -> f64 {
        match self {
            ScalarLawSpec::Uniform { a, b } => rng.gen_range(*a..*b),
            ScalarLawSpec::Beta { alpha, beta } => {
                Beta::new(*alpha, *beta).expect("validated").sample(rng)
            }
            ScalarLawSpec::Poisson { lambda } => {
                let v: f64 = Poisson::new(*lambda).expect("validated").sample(rng);
                v
            }
            ScalarLawSpec::Laplace { mu, b } => {
                let e: f64 = Exp1.sample(rng);
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                mu + b * sign * e
            }
            ScalarLawSpec::Pareto { scale, shape } => {
                Pareto::new(*scale, *shape).expect("validated").sample(rng)
            }
            ScalarLawSpec::Lorentz { x0, gamma } => {
                Cauchy::new(*x0, *gamma).expect("validated").sample(rng)
            }
            ScalarLawSpec::Gaussian { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            ScalarLawSpec::GaussianMixture { weights, means, sigmas } => {
                let u: f64 = rng.gen();
                let mut k = 0usize;
                let mut acc = 0.0;
                for kk in 0..weights.len() {
                    acc += weights[kk];
                    if u < acc {
                        k = kk;
                        break;
                    }
                    k = kk;
                }
                let z: f64 = StandardNormal.sample(rng);
                means[k] + sigmas[k] * z
            }
            ScalarLawSpec::AffineProxy { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                let m = if mu.len() == 1 { mu[0] } else { mu[dim] };
                let s = if sigma.len() == 1 { sigma[0] } else { sigma[dim] };
                m + s * z
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ScalarLawSpec::Uniform { .. } => "uniform",
            ScalarLawSpec::Beta { .. } => "beta",
            ScalarLawSpec::Poisson { .. } => "poisson",
            ScalarLawSpec::Laplace { .. } => "laplace",
            ScalarLawSpec::Pareto { .. } => "pareto",
            ScalarLawSpec::Lorentz { .. } => "lorentz",
            ScalarLawSpec::Gaussian { .. } => "gaussian",
            ScalarLawSpec::GaussianMixture { .. } => "gaussian_mixture",
            ScalarLawSpec::AffineProxy { .. } => "affine_proxy",
        }
    }
}

/// D i.i.d. columns of a scalar law.
#[derive(Debug, Clone)]
pub struct ScalarColumns {
    d: usize,
    law: ScalarLawSpec,
}

impl ScalarColumns {
    pub fn new(d: usize, law: ScalarLawSpec) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("latent dimension must be ≥ 1".into()));
        }
        law.validate()?;
        if let ScalarLawSpec::AffineProxy { mu, sigma } = &law {
            if (mu.len() != 1 && mu.len() != d) || (sigma.len() != 1 && sigma.len() != d) {
                return Err(Error::Shape(format!(
                    "affine_proxy vectors must have length 1 or D={d}"
                )));
            }
        }
        Ok(ScalarColumns { d, law })
    }
}

impl InputModel for ScalarColumns {
    fn name(&self) -> String {
        self.law.tag().to_string()
    }

    fn latent_dim(&self) -> usize {
        self.d
    }

    fn sample_into(&self, seed: u64, row_offset: usize, mut out: ArrayViewMut2<'_, f64>) -> Result<()> {
        if out.ncols() != self.d {
            return Err(Error::Shape(format!(
                "chunk has {} columns, law dimension is {}",
                out.ncols(),
                self.d
            )));
        }
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let mut rng = row_rng(seed, row_offset + i);
            for (r, x) in row.iter_mut().enumerate() {
                *x = self.law.draw(&mut rng, r);
            }
        }
        Ok(())
    }

    fn analytic_moments(&self) -> Option<(Array1<f64>, Array1<f64>)> {
        if let ScalarLawSpec::AffineProxy { mu, sigma } = &self.law {
            let take = |v: &Vec<f64>, r: usize| if v.len() == 1 { v[0] } else { v[r] };
            let mu_v = Array1::from_iter((0..self.d).map(|r| take(mu, r)));
            let sd_v = Array1::from_iter((0..self.d).map(|r| take(sigma, r)));
            return Some((mu_v, sd_v));
        }
        let (m, s) = self.law.scalar_moments()?;
        Some((
            Array1::from_elem(self.d, m),
            Array1::from_elem(self.d, s),
        ))
    }
}

/// Sample a P×D matrix of i.i.d. columns from a scalar law.
pub fn sample_scalar_law(law: &ScalarLawSpec, p: usize, d: usize, seed: u64) -> Result<Array2<f64>> {
    let cols = ScalarColumns::new(d, law.clone())?;
    super::sample_matrix(&cols, p, seed)
}
