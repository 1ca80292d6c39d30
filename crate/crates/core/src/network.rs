//! Teacher/student network state, forward maps, and weight-space order
//! parameters.
//!
//! The data model: latent vectors `c ∈ R^D` are lifted to inputs
//! `x = f(c F / √D) ∈ R^N` through a fixed feature matrix `F (D×N)` and an
//! element-wise feature function `f`.  A teacher with weights `W̃ (M×D)`,
//! `ṽ (M)` labels the latent directly, `y = ṽ·g̃(ν)` with `ν = c W̃ᵀ/√D`;
//! a student with weights `W (K×N)`, `v (K)` predicts from the lifted input,
//! `ŷ = v·g(λ)` with `λ = x Wᵀ/√N`.
//!
//! Order parameters are the weight-space overlaps that close the learning
//! dynamics when the lifted inputs behave like Gaussians:
//! `S = W Fᵀ/√N`, `Ω = W Wᵀ/N`, `Σ = S Sᵀ/D`, `T = W̃ W̃ᵀ/D`,
//! `R = (b/D)·S W̃ᵀ`, and `Q = (c − a² − b²)·Ω + b²·Σ` where `(a, b, c)` are
//! the Gaussian statistics of `f`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::Act;
use crate::integrals::NonlinearityStats;
use crate::{Error, Result};

/// Dimensions and nonlinearity tags of a teacher/student pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Input (lifted) dimension.
    pub n: usize,
    /// Latent dimension.
    pub d: usize,
    /// Student hidden width.
    pub k: usize,
    /// Teacher hidden width.
    pub m: usize,
    /// Hidden activation `g = g̃` shared by student and teacher.
    pub g: Act,
    /// Feature function `f` applied to the projected latent.
    pub f: Act,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.k == 0 || self.m == 0 {
            return Err(Error::Parameter(format!(
                "network dimensions must be positive (N={}, D={}, K={}, M={})",
                self.n, self.d, self.k, self.m
            )));
        }
        Ok(())
    }

    /// Aspect ratio `δ = D/N` of the feature matrix.
    pub fn delta(&self) -> f64 {
        self.d as f64 / self.n as f64
    }
}

/// All weights of one teacher/student pair plus the shared feature matrix.
#[derive(Debug, Clone)]
pub struct NetworkState {
    pub config: NetworkConfig,
    /// Teacher first-layer weights, `M×D`.
    pub w_tilde: Array2<f64>,
    /// Teacher second-layer weights, length `M`.
    pub v_tilde: Array1<f64>,
    /// Student first-layer weights, `K×N`.
    pub w: Array2<f64>,
    /// Student second-layer weights, length `K`.
    pub v: Array1<f64>,
    /// Feature matrix, `D×N`.
    pub f_mat: Array2<f64>,
}

/// One forward pass over a batch of latent rows.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Teacher labels, length `P`.
    pub y: Array1<f64>,
    /// Student predictions, length `P`.
    pub y_hat: Array1<f64>,
    /// Teacher preactivations `ν = c W̃ᵀ/√D`, `P×M`.
    pub nu: Array2<f64>,
    /// Student preactivations `λ = x Wᵀ/√N`, `P×K`.
    pub lambda: Array2<f64>,
    /// Projected latents `U = c F/√D` (pre-feature-function), `P×N`.
    pub u: Array2<f64>,
}

/// Weight-space order parameters at one instant of training.
#[derive(Debug, Clone)]
pub struct OrderParams {
    /// Normalized time `t = steps/N` of the snapshot.
    pub t: f64,
    /// Generalization error at the snapshot.  Filled by the caller that owns
    /// the evaluation machinery; `measure_order_params` leaves it at NaN.
    pub eps_g: f64,
    /// Student preactivation covariance `Q`, `K×K`, exactly symmetric.
    pub q: Array2<f64>,
    /// Student/teacher overlap `R`, `K×M`.
    pub r: Array2<f64>,
    /// Teacher self-overlap `T`, `M×M`, exactly symmetric.
    pub t_mat: Array2<f64>,
    /// Student weight overlap `Ω = W Wᵀ/N`, `K×K`, exactly symmetric.
    pub omega: Array2<f64>,
    /// Feature-space overlap `Σ = S Sᵀ/D`, `K×K`, exactly symmetric.
    pub sigma: Array2<f64>,
    /// Student second-layer weights, length `K`.
    pub v: Array1<f64>,
    /// Feature-space student weights `S = W Fᵀ/√N`, `K×D`; retained only on
    /// request (the spectral ODE initializer needs it, trajectory snapshots
    /// do not).
    pub s: Option<Array2<f64>>,
}

fn fill_standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for x in m.iter_mut() {
        *x = rng.sample::<f64, _>(StandardNormal);
    }
    m
}

/// Draw a fresh teacher/student pair with i.i.d. standard-normal weights and
/// feature matrix, deterministically from `seed`.
///
/// With `normalize_f` set, every column of `F` is rescaled to `‖F_{·,i}‖² = D`
/// so each lifted coordinate sees a unit-variance projection.
pub fn init_gaussian(config: &NetworkConfig, seed: u64, normalize_f: bool) -> Result<NetworkState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Draw order is part of the determinism contract: teacher first layer,
    // teacher second layer, student first layer, student second layer, then F.
    let w_tilde = fill_standard_normal(&mut rng, config.m, config.d);
    let mut v_tilde = Array1::zeros(config.m);
    for x in v_tilde.iter_mut() {
        *x = rng.sample::<f64, _>(StandardNormal);
    }
    let w = fill_standard_normal(&mut rng, config.k, config.n);
    let mut v = Array1::zeros(config.k);
    for x in v.iter_mut() {
        *x = rng.sample::<f64, _>(StandardNormal);
    }
    let mut f_mat = fill_standard_normal(&mut rng, config.d, config.n);
    if normalize_f {
        let d = config.d as f64;
        for mut col in f_mat.axis_iter_mut(Axis(1)) {
            let norm2: f64 = col.iter().map(|x| x * x).sum();
            if norm2 <= 0.0 {
                return Err(Error::Degenerate(
                    "feature matrix column with zero norm cannot be normalized".into(),
                ));
            }
            let scale = (d / norm2).sqrt();
            col.mapv_inplace(|x| x * scale);
        }
    }
    Ok(NetworkState {
        config: config.clone(),
        w_tilde,
        v_tilde,
        w,
        v,
        f_mat,
    })
}

/// Run teacher and student on a batch of latent rows `cbar (P×D)`.
pub fn forward(state: &NetworkState, cbar: ArrayView2<f64>) -> Result<ForwardPass> {
    let cfg = &state.config;
    if cbar.ncols() != cfg.d {
        return Err(Error::Shape(format!(
            "latent batch has {} columns, network expects D = {}",
            cbar.ncols(),
            cfg.d
        )));
    }
    let sqrt_d = (cfg.d as f64).sqrt();
    let sqrt_n = (cfg.n as f64).sqrt();

    let mut u = cbar.dot(&state.f_mat);
    u.mapv_inplace(|x| x / sqrt_d);
    let x = u.mapv(|z| cfg.f.apply(z));

    let mut nu = cbar.dot(&state.w_tilde.t());
    nu.mapv_inplace(|z| z / sqrt_d);
    let mut lambda = x.dot(&state.w.t());
    lambda.mapv_inplace(|z| z / sqrt_n);

    let y = nu.mapv(|z| cfg.g.apply(z)).dot(&state.v_tilde);
    let y_hat = lambda.mapv(|z| cfg.g.apply(z)).dot(&state.v);

    Ok(ForwardPass {
        y,
        y_hat,
        nu,
        lambda,
        u,
    })
}

/// Symmetric product `A Aᵀ / scale` with the upper triangle mirrored so the
/// result is exactly symmetric.
pub(crate) fn sym_outer(a: &Array2<f64>, scale: f64) -> Array2<f64> {
    let k = a.nrows();
    let mut out = Array2::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let d = a.row(i).dot(&a.row(j)) / scale;
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

/// Measure all weight-space order parameters of `state`.
///
/// `stats` carries the Gaussian statistics `(a, b, c)` of the feature
/// function; `keep_s` additionally retains the feature-space weights `S`
/// (needed to initialize the spectral ODE).  The returned `eps_g` is NaN —
/// generalization error is a property of an evaluation ensemble, not of the
/// weights alone.
pub fn measure_order_params(
    state: &NetworkState,
    stats: &NonlinearityStats,
    keep_s: bool,
) -> OrderParams {
    let cfg = &state.config;
    let n = cfg.n as f64;
    let d = cfg.d as f64;
    let sqrt_n = n.sqrt();

    // S = W Fᵀ/√N  (K×D)
    let mut s = state.w.dot(&state.f_mat.t());
    s.mapv_inplace(|x| x / sqrt_n);

    let omega = sym_outer(&state.w, n);
    let sigma = sym_outer(&s, d);
    let t_mat = sym_outer(&state.w_tilde, d);

    let mut r = s.dot(&state.w_tilde.t());
    r.mapv_inplace(|x| x * stats.b / d);

    let coeff_omega = stats.c - stats.a * stats.a - stats.b * stats.b;
    let mut q = Array2::zeros((cfg.k, cfg.k));
    for i in 0..cfg.k {
        for j in 0..cfg.k {
            q[(i, j)] = coeff_omega * omega[(i, j)] + stats.b * stats.b * sigma[(i, j)];
        }
    }

    OrderParams {
        t: 0.0,
        eps_g: f64::NAN,
        q,
        r,
        t_mat,
        omega,
        sigma,
        v: state.v.clone(),
        s: if keep_s { Some(s) } else { None },
    }
}

/// Mean offset of the student preactivations, `a·(Σ_i W_{k,i})/√N` per unit.
///
/// For odd feature functions `a = 0` and the preactivations are already
/// centered; for asymmetric ones (e.g. ReLU features) the Gaussian-equivalent
/// description applies to `λ̄ = λ − offset`, so measurement code subtracts
/// this vector before comparing covariances.
pub fn lambda_offset(state: &NetworkState, stats: &NonlinearityStats) -> Array1<f64> {
    let sqrt_n = (state.config.n as f64).sqrt();
    state.w.sum_axis(Axis(1)).mapv(|s| stats.a * s / sqrt_n)
}
