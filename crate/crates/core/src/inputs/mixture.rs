//! Dimension-wise Gaussian mixtures: each latent coordinate has its own
//! q-component mixture, coordinates are mutually independent.

use ndarray::{Array1, Array2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::{row_rng, InputModel};

/// Floor for drawn component standard deviations: the admissible interval is
/// open at 0, so the generator draws from [SIGMA_FLOOR, β).
const SIGMA_FLOOR: f64 = 1e-3;

/// A q-component Gaussian mixture per dimension.
///
/// All parameter arrays are D×q: `means[(r, k)]` is the k-th component mean
/// of dimension r, and so on.
#[derive(Debug, Clone)]
pub struct MixtureSpec {
    pub d: usize,
    pub q: usize,
    /// Mean range half-width the means were drawn from.
    pub alpha: f64,
    /// Standard-deviation upper bound the σ's were drawn from.
    pub beta: f64,
    pub means: Array2<f64>,
    pub stds: Array2<f64>,
    pub weights: Array2<f64>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.q == 0 {
            return Err(Error::Parameter("mixture needs D ≥ 1 and q ≥ 1".into()));
        }
        for arr in [&self.means, &self.stds, &self.weights] {
            if arr.dim() != (self.d, self.q) {
                return Err(Error::Shape(format!(
                    "mixture parameter array has shape {:?}, want ({}, {})",
                    arr.dim(),
                    self.d,
                    self.q
                )));
            }
        }
        for r in 0..self.d {
            let wsum: f64 = self.weights.row(r).sum();
            if (wsum - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "dimension {r}: mixture weights sum to {wsum}, not 1"
                )));
            }
            for k in 0..self.q {
                if self.weights[(r, k)] < 0.0 {
                    return Err(Error::Parameter(format!(
                        "dimension {r}: negative weight at component {k}"
                    )));
                }
                if !(self.stds[(r, k)] > 0.0) {
                    return Err(Error::Parameter(format!(
                        "dimension {r}: non-positive σ at component {k}"
                    )));
                }
                if !(self.stds[(r, k)] < self.beta) {
                    return Err(Error::Parameter(format!(
                        "dimension {r}: σ {} outside (0, β={})",
                        self.stds[(r, k)],
                        self.beta
                    )));
                }
                if self.means[(r, k)] < -self.alpha
                    || (self.alpha > 0.0 && self.means[(r, k)] >= self.alpha)
                    || (self.alpha == 0.0 && self.means[(r, k)] != 0.0)
                {
                    return Err(Error::Parameter(format!(
                        "dimension {r}: mean {} outside [−α, α) with α={}",
                        self.means[(r, k)],
                        self.alpha
                    )));
                }
            }
        }
        Ok(())
    }

    /// Closed-form per-dimension mean and standard deviation.
    pub fn moments(&self) -> (Array1<f64>, Array1<f64>) {
        let mut mu = Array1::zeros(self.d);
        let mut sigma = Array1::zeros(self.d);
        for r in 0..self.d {
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for k in 0..self.q {
                let (w, mk, sk) = (self.weights[(r, k)], self.means[(r, k)], self.stds[(r, k)]);
                m1 += w * mk;
                m2 += w * (sk * sk + mk * mk);
            }
            mu[r] = m1;
            sigma[r] = (m2 - m1 * m1).max(0.0).sqrt();
        }
        (mu, sigma)
    }
}

/// Draw a mixture spec: means ~ U[−α, α), σ ~ U[σ_floor, β), weights as
/// normalized uniforms. The spec is drawn once; rows are then i.i.d.
pub fn draw_mixture_spec(d: usize, q: usize, alpha: f64, beta: f64, seed: u64) -> Result<MixtureSpec> {
    if d == 0 || q == 0 {
        return Err(Error::Parameter("mixture needs D ≥ 1 and q ≥ 1".into()));
    }
    if alpha < 0.0 || !(beta > SIGMA_FLOOR) {
        return Err(Error::Parameter(format!(
            "mixture hyperparameters need α ≥ 0 and β > {SIGMA_FLOOR}, got α={alpha}, β={beta}"
        )));
    }
    let mut rng = row_rng(seed, 0);
    let mut means = Array2::zeros((d, q));
    let mut stds = Array2::zeros((d, q));
    let mut weights = Array2::zeros((d, q));
    for r in 0..d {
        let mut wsum = 0.0;
        for k in 0..q {
            means[(r, k)] = if alpha == 0.0 {
                0.0
            } else {
                rng.gen_range(-alpha..alpha)
            };
            stds[(r, k)] = rng.gen_range(SIGMA_FLOOR..beta);
            let w: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            weights[(r, k)] = w;
            wsum += w;
        }
        for k in 0..q {
            weights[(r, k)] /= wsum;
        }
        // Renormalize exactly: push any roundoff into the largest weight.
        let err = 1.0 - weights.row(r).sum();
        let imax = (0..q).max_by(|&a, &b| weights[(r, a)].total_cmp(&weights[(r, b)])).unwrap();
        weights[(r, imax)] += err;
    }
    let spec = MixtureSpec { d, q, alpha, beta, means, stds, weights };
    spec.validate()?;
    Ok(spec)
}

/// Sample P i.i.d. rows of the dimension-wise mixture.
pub fn sample_dimensionwise_mixture(spec: &MixtureSpec, p: usize, seed: u64) -> Result<Array2<f64>> {
    spec.validate()?;
    super::sample_matrix(spec, p, seed)
}

impl InputModel for MixtureSpec {
    fn name(&self) -> String {
        format!("mixture(q={}, alpha={}, beta={})", self.q, self.alpha, self.beta)
    }

    fn latent_dim(&self) -> usize {
        self.d
    }

    fn sample_into(&self, seed: u64, row_offset: usize, mut out: ArrayViewMut2<'_, f64>) -> Result<()> {
        if out.ncols() != self.d {
            return Err(Error::Shape(format!(
                "chunk has {} columns, mixture dimension is {}",
                out.ncols(),
                self.d
            )));
        }
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            let mut rng = row_rng(seed, row_offset + i);
            for (r, x) in row.iter_mut().enumerate() {
                let u: f64 = rng.gen();
                let mut k = 0usize;
                let mut acc = 0.0;
                for kk in 0..self.q {
                    acc += self.weights[(r, kk)];
                    if u < acc {
                        k = kk;
                        break;
                    }
                    k = kk; // falls through to the last component on roundoff
                }
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = self.means[(r, k)] + self.stds[(r, k)] * z;
            }
        }
        Ok(())
    }

    fn analytic_moments(&self) -> Option<(Array1<f64>, Array1<f64>)> {
        Some(self.moments())
    }
}
