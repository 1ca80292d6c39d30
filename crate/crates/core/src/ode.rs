//! Deterministic integration of the order-parameter ODE system that describes
//! online SGD in the Gaussian-equivalent picture.
//!
//! The student preactivation covariance splits as
//! `Q = (c − a² − b²)·Ω + b²·Σ` with `Ω = W Wᵀ/N` evolving by its own closed
//! equation and `Σ` carried as a density `σ_{kℓ}(ρ)` over the spectrum of the
//! feature Gram matrix `𝓕 = F Fᵀ/N`.  The student/teacher overlap is carried
//! as `r_{km}(ρ)` with `R = b·∫ p(ρ) r(ρ) dρ`.  Discretizing ρ into bins turns
//! both densities into per-bin matrices updated by explicit Euler steps; every
//! Gaussian expectation in the update brackets is evaluated exactly (to
//! quadrature tolerance) from the current `(Q, R, T)` blocks.
//!
//! The spectral weight `d(ρ) = (c − b²)·δ + b²·ρ` with `δ = D/N` converts
//! bin-local overlaps into preactivation covariance contributions.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Array3};

use crate::activations::Act;
use crate::integrals::{i2, i3, i4, NonlinearityStats};
use crate::network::{sym_outer, NetworkState};
use crate::network::OrderParams;
use crate::sgd::RunRecord;
use crate::{Error, Result};

/// Threshold below which the 2×2 covariance denominators in the ODE brackets
/// are regularized by adding the same constant.
const DENOM_FLOOR: f64 = 1e-12;

static DENOM_FLOOR_EVENTS: AtomicUsize = AtomicUsize::new(0);

/// Number of near-degenerate bracket denominators regularized so far in this
/// process (diagnostic; monotone).
pub fn denominator_floor_events() -> usize {
    DENOM_FLOOR_EVENTS.load(Ordering::Relaxed)
}

fn floor_denom(den: f64) -> f64 {
    if den < DENOM_FLOOR {
        DENOM_FLOOR_EVENTS.fetch_add(1, Ordering::Relaxed);
        den + DENOM_FLOOR
    } else {
        den
    }
}

/// How the spectral bins over ρ are constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    /// Bin the actual eigenvalues of `𝓕 = F Fᵀ/N` (keeps the eigenbasis, so
    /// density fields can be initialized from the concrete weights).
    Empirical,
    /// Closed-form Marchenko–Pastur weights over the limiting support.
    AnalyticMp,
}

/// Eigendata retained by empirical grids: eigenvalues ascending, eigenvectors
/// ψ_τ as columns normalized to `Σ_s ψ_τ(s)² = D`, and each eigenvalue's bin.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub eigvals: Vec<f64>,
    pub psi: Array2<f64>,
    pub bin_of: Vec<usize>,
}

/// Discretization of the feature-Gram eigenvalue density.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    pub mode: GridMode,
    /// Aspect ratio δ = D/N.
    pub delta: f64,
    /// Bin edges, length `n_bins + 1`, strictly increasing.
    pub edges: Vec<f64>,
    /// Fraction of eigenvalue mass per bin; sums to 1.
    pub p_bin: Vec<f64>,
    /// Representative ρ per bin (bin mean of eigenvalues when available,
    /// midpoint otherwise).
    pub rho: Vec<f64>,
    /// Eigenbasis (empirical mode only).
    pub basis: Option<SpectralBasis>,
}

impl SpectralGrid {
    pub fn n_bins(&self) -> usize {
        self.p_bin.len()
    }
}

/// Support endpoints `(1 ∓ √δ)²` of the Marchenko–Pastur law.
pub fn mp_support(delta: f64) -> (f64, f64) {
    let s = delta.sqrt();
    ((1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s))
}

/// Marchenko–Pastur density `√((hi−ρ)(ρ−lo))/(2πδρ)` on its support,
/// zero outside.
pub fn mp_density(rho: f64, delta: f64) -> f64 {
    let (lo, hi) = mp_support(delta);
    if rho <= lo || rho >= hi || rho <= 0.0 {
        return 0.0;
    }
    ((hi - rho) * (rho - lo)).sqrt() / (2.0 * std::f64::consts::PI * delta * rho)
}

/// Build the ρ-discretization for `state`'s feature matrix.
pub fn build_spectral_grid(
    state: &NetworkState,
    mode: GridMode,
    n_bins: usize,
) -> Result<SpectralGrid> {
    if n_bins == 0 {
        return Err(Error::Parameter("spectral grid needs at least one bin".into()));
    }
    let delta = state.config.delta();
    match mode {
        GridMode::AnalyticMp => {
            let (lo, hi) = mp_support(delta);
            let mut edges = Vec::with_capacity(n_bins + 1);
            for i in 0..=n_bins {
                // Force the support endpoints to be exact.
                let e = if i == 0 {
                    lo
                } else if i == n_bins {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / n_bins as f64
                };
                edges.push(e);
            }
            let mut rho = Vec::with_capacity(n_bins);
            let mut p = Vec::with_capacity(n_bins);
            for i in 0..n_bins {
                let mid = 0.5 * (edges[i] + edges[i + 1]);
                rho.push(mid);
                p.push(mp_density(mid, delta) * (edges[i + 1] - edges[i]));
            }
            let total: f64 = p.iter().sum();
            if total <= 0.0 {
                return Err(Error::Degenerate(
                    "Marchenko–Pastur weights vanished on every bin".into(),
                ));
            }
            for w in p.iter_mut() {
                *w /= total;
            }
            Ok(SpectralGrid {
                mode,
                delta,
                edges,
                p_bin: p,
                rho,
                basis: None,
            })
        }
        GridMode::Empirical => {
            let d = state.config.d;
            let n = state.config.n as f64;
            let gram = state.f_mat.dot(&state.f_mat.t()) / n;
            let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]));
            let eig = SymmetricEigen::new(sym);
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| {
                eig.eigenvalues[a]
                    .partial_cmp(&eig.eigenvalues[b])
                    .expect("eigenvalues of a symmetric matrix are real")
            });
            let eigvals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let sqrt_d = (d as f64).sqrt();
            let mut psi = Array2::zeros((d, d));
            for (tau, &src) in order.iter().enumerate() {
                let col = eig.eigenvectors.column(src);
                let norm2: f64 = col.iter().map(|x| x * x).sum();
                let scale = sqrt_d / norm2.sqrt();
                for s in 0..d {
                    psi[(s, tau)] = col[s] * scale;
                }
            }
            let lo = eigvals[0];
            let hi = eigvals[d - 1];
            let span = (hi - lo).max(1e-12 * (1.0 + hi.abs()));
            let width = span / n_bins as f64;
            let edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
            let mut counts = vec![0usize; n_bins];
            let mut sums = vec![0.0f64; n_bins];
            let mut bin_of = Vec::with_capacity(d);
            for &ev in eigvals.iter() {
                let b = (((ev - lo) / width) as usize).min(n_bins - 1);
                counts[b] += 1;
                sums[b] += ev;
                bin_of.push(b);
            }
            let mut p: Vec<f64> = counts.iter().map(|&c| c as f64 / d as f64).collect();
            // Push division roundoff into the heaviest bin so Σp = 1 exactly.
            let total: f64 = p.iter().sum();
            let argmax = (0..n_bins)
                .max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap())
                .unwrap();
            p[argmax] += 1.0 - total;
            let rho: Vec<f64> = (0..n_bins)
                .map(|b| {
                    if counts[b] > 0 {
                        sums[b] / counts[b] as f64
                    } else {
                        0.5 * (edges[b] + edges[b + 1])
                    }
                })
                .collect();
            Ok(SpectralGrid {
                mode,
                delta,
                edges,
                p_bin: p,
                rho,
                basis: Some(SpectralBasis {
                    eigvals,
                    psi,
                    bin_of,
                }),
            })
        }
    }
}

/// Per-bin overlap densities plus the constant teacher companions.
#[derive(Debug, Clone)]
pub struct DensityField {
    /// Student/teacher overlap density, one `K×M` matrix per bin.
    pub r: Vec<Array2<f64>>,
    /// Student feature-overlap density, one symmetric `K×K` matrix per bin.
    pub sigma: Vec<Array2<f64>>,
    /// Teacher overlap density, one symmetric `M×M` matrix per bin
    /// (constant in time).
    pub t_bin: Vec<Array2<f64>>,
    /// Spectrum-weighted teacher overlap `𝓣 = Σ_b p_b·ρ_b·t_bin`, `M×M`,
    /// constant in time.
    pub t_script: Array2<f64>,
    /// Teacher self-overlap `T = W̃ W̃ᵀ/D`, `M×M`, constant in time.
    pub t_mat: Array2<f64>,
}

impl DensityField {
    /// `Σ = Σ_b p_b·σ_bin`.
    pub fn assemble_sigma(&self, grid: &SpectralGrid) -> Array2<f64> {
        let mut out = Array2::zeros(self.sigma[0].dim());
        for (w, s) in grid.p_bin.iter().zip(self.sigma.iter()) {
            out.scaled_add(*w, s);
        }
        out
    }

    /// `R = b·Σ_b p_b·r_bin`.
    pub fn assemble_r(&self, grid: &SpectralGrid, stats: &NonlinearityStats) -> Array2<f64> {
        let mut out = Array2::zeros(self.r[0].dim());
        for (w, r) in grid.p_bin.iter().zip(self.r.iter()) {
            out.scaled_add(*w, r);
        }
        out * stats.b
    }

    /// `Q = (c − a² − b²)·Ω + b²·Σ`.
    pub fn assemble_q(
        &self,
        grid: &SpectralGrid,
        omega: &Array2<f64>,
        stats: &NonlinearityStats,
    ) -> Array2<f64> {
        let sigma = self.assemble_sigma(grid);
        let cw = stats.c - stats.a * stats.a - stats.b * stats.b;
        let cb = stats.b * stats.b;
        let mut q = Array2::zeros(omega.dim());
        for ((i, j), val) in q.indexed_iter_mut() {
            *val = cw * omega[(i, j)] + cb * sigma[(i, j)];
        }
        q
    }
}

/// Project the student and teacher weights onto the spectral basis and
/// bin-average the pairwise products into density fields.
pub fn init_density_fields(
    state: &NetworkState,
    grid: &SpectralGrid,
    _stats: &NonlinearityStats,
) -> Result<DensityField> {
    let basis = grid.basis.as_ref().ok_or_else(|| {
        Error::Parameter("density-field initialization requires an empirical spectral grid".into())
    })?;
    let cfg = &state.config;
    if basis.psi.nrows() != cfg.d {
        return Err(Error::Shape(format!(
            "spectral basis is {}-dimensional, network latent dimension is {}",
            basis.psi.nrows(),
            cfg.d
        )));
    }
    let d = cfg.d;
    let k = cfg.k;
    let m = cfg.m;
    let sqrt_n = (cfg.n as f64).sqrt();
    let sqrt_d = (d as f64).sqrt();

    // S = W Fᵀ/√N (K×D); spectral projections 𝓢 = S ψ/√D, 𝓦 = W̃ ψ/√D.
    let s = state.w.dot(&state.f_mat.t()) / sqrt_n;
    let s_spec = s.dot(&basis.psi) / sqrt_d;
    let w_spec = state.w_tilde.dot(&basis.psi) / sqrt_d;

    let n_bins = grid.n_bins();
    let mut r = vec![Array2::zeros((k, m)); n_bins];
    let mut sigma = vec![Array2::zeros((k, k)); n_bins];
    let mut t_bin = vec![Array2::zeros((m, m)); n_bins];
    let mut counts = vec![0usize; n_bins];
    for tau in 0..d {
        let b = basis.bin_of[tau];
        counts[b] += 1;
        for p in 0..k {
            for q in 0..m {
                r[b][(p, q)] += s_spec[(p, tau)] * w_spec[(q, tau)];
            }
            for q in 0..k {
                sigma[b][(p, q)] += s_spec[(p, tau)] * s_spec[(q, tau)];
            }
        }
        for p in 0..m {
            for q in 0..m {
                t_bin[b][(p, q)] += w_spec[(p, tau)] * w_spec[(q, tau)];
            }
        }
    }
    for b in 0..n_bins {
        if counts[b] > 0 {
            let inv = 1.0 / counts[b] as f64;
            r[b].mapv_inplace(|x| x * inv);
            sigma[b].mapv_inplace(|x| x * inv);
            t_bin[b].mapv_inplace(|x| x * inv);
        }
    }
    let mut t_script = Array2::zeros((m, m));
    for b in 0..n_bins {
        t_script.scaled_add(grid.p_bin[b] * grid.rho[b], &t_bin[b]);
    }
    let t_mat = sym_outer(&state.w_tilde, d as f64);
    Ok(DensityField {
        r,
        sigma,
        t_bin,
        t_script,
        t_mat,
    })
}

/// Integration parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeConfig {
    /// Euler step in normalized time.
    pub dt: f64,
    /// Final normalized time.
    pub t_end: f64,
    /// Number of spectral bins (≥ 16).
    pub n_bins: usize,
    /// Learning rate η shared with the SGD run being mirrored.
    pub eta: f64,
    /// Steps between recorded snapshots.
    pub stride: usize,
}

impl OdeConfig {
    pub fn default_for(eta: f64, t_end: f64) -> Self {
        OdeConfig {
            dt: 0.01,
            t_end,
            n_bins: 64,
            eta,
            stride: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Parameter(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if self.n_bins < 16 {
            return Err(Error::Parameter(format!(
                "need at least 16 spectral bins, got {}",
                self.n_bins
            )));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Parameter(format!(
                "learning rate must be positive, got {}",
                self.eta
            )));
        }
        if self.stride == 0 {
            return Err(Error::Parameter("record stride must be ≥ 1".into()));
        }
        Ok(())
    }
}

fn cov2(a: f64, ab: f64, b: f64) -> Array2<f64> {
    Array2::from_shape_vec((2, 2), vec![a, ab, ab, b]).unwrap()
}

/// Analytic generalization error from order-parameter blocks:
/// `½ Σ v_k v_ℓ E[g(λ_k)g(λ_ℓ)] + ½ Σ ṽ_n ṽ_m E[g(ν_n)g(ν_m)]
///  − Σ v_k ṽ_n E[g(λ_k)g(ν_n)]`.
pub fn assemble_eps_g(
    q: &Array2<f64>,
    r: &Array2<f64>,
    t_mat: &Array2<f64>,
    v: &Array1<f64>,
    v_tilde: &Array1<f64>,
    g: Act,
) -> Result<f64> {
    let k = v.len();
    let m = v_tilde.len();
    if q.dim() != (k, k) || r.dim() != (k, m) || t_mat.dim() != (m, m) {
        return Err(Error::Shape(
            "order-parameter blocks do not match second-layer widths".into(),
        ));
    }
    let mut acc = 0.0;
    for a in 0..k {
        for bb in 0..k {
            if v[a] == 0.0 || v[bb] == 0.0 {
                continue;
            }
            let c = cov2(q[(a, a)], q[(a, bb)], q[(bb, bb)]);
            acc += 0.5 * v[a] * v[bb] * i2(g, g, &c)?;
        }
    }
    for a in 0..m {
        for bb in 0..m {
            if v_tilde[a] == 0.0 || v_tilde[bb] == 0.0 {
                continue;
            }
            let c = cov2(t_mat[(a, a)], t_mat[(a, bb)], t_mat[(bb, bb)]);
            acc += 0.5 * v_tilde[a] * v_tilde[bb] * i2(g, g, &c)?;
        }
    }
    for a in 0..k {
        for bb in 0..m {
            if v[a] == 0.0 || v_tilde[bb] == 0.0 {
                continue;
            }
            let c = cov2(q[(a, a)], r[(a, bb)], t_mat[(bb, bb)]);
            acc -= v[a] * v_tilde[bb] * i2(g, g, &c)?;
        }
    }
    Ok(acc)
}

/// The bracket coefficients shared by every bin at one time step.
struct StepCoefficients {
    /// `num1[k][j]`, `num2[k][j]` for j ≠ k (diagonal unused).
    num1: Array2<f64>,
    num2: Array2<f64>,
    /// `sk[k] = E[g′(λ_k)λ_k g(λ_k)]/Q_kk`.
    sk: Array1<f64>,
    /// `tn1[k][n]`, `tn2[k][n]`.
    tn1: Array2<f64>,
    tn2: Array2<f64>,
    /// `a3[(k,l,j)] = E[g′(λ_k) λ_ℓ g(λ_j)]`.
    a3: Array3<f64>,
    /// `b3[(k,l,n)] = E[g′(λ_k) λ_ℓ g̃(ν_n)]`.
    b3: Array3<f64>,
    /// `f4[(k,l)]` — the symmetric η² four-point bracket.
    f4: Array2<f64>,
    /// dv/dt.
    dv: Array1<f64>,
}

fn step_coefficients(
    q: &Array2<f64>,
    r: &Array2<f64>,
    t: &Array2<f64>,
    v: &Array1<f64>,
    v_tilde: &Array1<f64>,
    g: Act,
    eta: f64,
) -> Result<StepCoefficients> {
    let k_dim = v.len();
    let m_dim = v_tilde.len();

    // Three-point expectations with a λ linear factor.
    let mut a3 = Array3::zeros((k_dim, k_dim, k_dim));
    for k in 0..k_dim {
        for l in 0..k_dim {
            for j in 0..k_dim {
                let cov = Array2::from_shape_vec(
                    (3, 3),
                    vec![
                        q[(k, k)],
                        q[(k, l)],
                        q[(k, j)],
                        q[(k, l)],
                        q[(l, l)],
                        q[(l, j)],
                        q[(k, j)],
                        q[(l, j)],
                        q[(j, j)],
                    ],
                )
                .unwrap();
                a3[(k, l, j)] = i3(g, g, &cov)?;
            }
        }
    }
    let mut b3 = Array3::zeros((k_dim, k_dim, m_dim));
    for k in 0..k_dim {
        for l in 0..k_dim {
            for n in 0..m_dim {
                let cov = Array2::from_shape_vec(
                    (3, 3),
                    vec![
                        q[(k, k)],
                        q[(k, l)],
                        r[(k, n)],
                        q[(k, l)],
                        q[(l, l)],
                        r[(l, n)],
                        r[(k, n)],
                        r[(l, n)],
                        t[(n, n)],
                    ],
                )
                .unwrap();
                b3[(k, l, n)] = i3(g, g, &cov)?;
            }
        }
    }
    // e4[(k,n)] = E[g′(λ_k) ν_n g̃(ν_n)].
    let mut e4 = Array2::zeros((k_dim, m_dim));
    for k in 0..k_dim {
        for n in 0..m_dim {
            let cov = Array2::from_shape_vec(
                (3, 3),
                vec![
                    q[(k, k)],
                    r[(k, n)],
                    r[(k, n)],
                    r[(k, n)],
                    t[(n, n)],
                    t[(n, n)],
                    r[(k, n)],
                    t[(n, n)],
                    t[(n, n)],
                ],
            )
            .unwrap();
            e4[(k, n)] = i3(g, g, &cov)?;
        }
    }

    let mut num1 = Array2::zeros((k_dim, k_dim));
    let mut num2 = Array2::zeros((k_dim, k_dim));
    for k in 0..k_dim {
        for j in 0..k_dim {
            if j == k {
                continue;
            }
            let den = floor_denom(q[(j, j)] * q[(k, k)] - q[(k, j)] * q[(k, j)]);
            num1[(k, j)] = (q[(j, j)] * a3[(k, k, j)] - q[(k, j)] * a3[(k, j, j)]) / den;
            num2[(k, j)] = (q[(k, k)] * a3[(k, j, j)] - q[(k, j)] * a3[(k, k, j)]) / den;
        }
    }
    let mut sk = Array1::zeros(k_dim);
    for k in 0..k_dim {
        sk[k] = a3[(k, k, k)] / floor_denom(q[(k, k)]);
    }
    let mut tn1 = Array2::zeros((k_dim, m_dim));
    let mut tn2 = Array2::zeros((k_dim, m_dim));
    for k in 0..k_dim {
        for n in 0..m_dim {
            let den = floor_denom(q[(k, k)] * t[(n, n)] - r[(k, n)] * r[(k, n)]);
            tn1[(k, n)] = (t[(n, n)] * b3[(k, k, n)] - r[(k, n)] * e4[(k, n)]) / den;
            tn2[(k, n)] = (q[(k, k)] * e4[(k, n)] - r[(k, n)] * b3[(k, k, n)]) / den;
        }
    }

    // Four-point bracket F4_{kℓ}: student-student − 2·student-teacher
    // + teacher-teacher, all weighted by the second layers.
    let mut f4 = Array2::zeros((k_dim, k_dim));
    for k in 0..k_dim {
        for l in k..k_dim {
            let mut acc = 0.0;
            for j in 0..k_dim {
                for i in j..k_dim {
                    let w = v[j] * v[i] * if i == j { 1.0 } else { 2.0 };
                    if w == 0.0 {
                        continue;
                    }
                    let cov = Array2::from_shape_vec(
                        (4, 4),
                        vec![
                            q[(k, k)],
                            q[(k, l)],
                            q[(k, j)],
                            q[(k, i)],
                            q[(k, l)],
                            q[(l, l)],
                            q[(l, j)],
                            q[(l, i)],
                            q[(k, j)],
                            q[(l, j)],
                            q[(j, j)],
                            q[(j, i)],
                            q[(k, i)],
                            q[(l, i)],
                            q[(j, i)],
                            q[(i, i)],
                        ],
                    )
                    .unwrap();
                    acc += w * i4(g, g, g, &cov)?;
                }
            }
            for j in 0..k_dim {
                for n in 0..m_dim {
                    let w = -2.0 * v[j] * v_tilde[n];
                    if w == 0.0 {
                        continue;
                    }
                    let cov = Array2::from_shape_vec(
                        (4, 4),
                        vec![
                            q[(k, k)],
                            q[(k, l)],
                            q[(k, j)],
                            r[(k, n)],
                            q[(k, l)],
                            q[(l, l)],
                            q[(l, j)],
                            r[(l, n)],
                            q[(k, j)],
                            q[(l, j)],
                            q[(j, j)],
                            r[(j, n)],
                            r[(k, n)],
                            r[(l, n)],
                            r[(j, n)],
                            t[(n, n)],
                        ],
                    )
                    .unwrap();
                    acc += w * i4(g, g, g, &cov)?;
                }
            }
            for n in 0..m_dim {
                for m2 in n..m_dim {
                    let w = v_tilde[n] * v_tilde[m2] * if n == m2 { 1.0 } else { 2.0 };
                    if w == 0.0 {
                        continue;
                    }
                    let cov = Array2::from_shape_vec(
                        (4, 4),
                        vec![
                            q[(k, k)],
                            q[(k, l)],
                            r[(k, n)],
                            r[(k, m2)],
                            q[(k, l)],
                            q[(l, l)],
                            r[(l, n)],
                            r[(l, m2)],
                            r[(k, n)],
                            r[(l, n)],
                            t[(n, n)],
                            t[(n, m2)],
                            r[(k, m2)],
                            r[(l, m2)],
                            t[(n, m2)],
                            t[(m2, m2)],
                        ],
                    )
                    .unwrap();
                    acc += w * i4(g, g, g, &cov)?;
                }
            }
            f4[(k, l)] = acc;
            f4[(l, k)] = acc;
        }
    }

    // dv_k/dt = η [Σ_n ṽ_n E[g(λ_k)g̃(ν_n)] − Σ_j v_j E[g(λ_k)g(λ_j)]].
    let mut dv = Array1::zeros(k_dim);
    for k in 0..k_dim {
        let mut acc = 0.0;
        for n in 0..m_dim {
            if v_tilde[n] != 0.0 {
                let c = cov2(q[(k, k)], r[(k, n)], t[(n, n)]);
                acc += v_tilde[n] * i2(g, g, &c)?;
            }
        }
        for j in 0..k_dim {
            if v[j] != 0.0 {
                let c = cov2(q[(k, k)], q[(k, j)], q[(j, j)]);
                acc -= v[j] * i2(g, g, &c)?;
            }
        }
        dv[k] = eta * acc;
    }

    Ok(StepCoefficients {
        num1,
        num2,
        sk,
        tn1,
        tn2,
        a3,
        b3,
        f4,
        dv,
    })
}

/// One explicit Euler step of the full system (per-bin densities, Ω-part,
/// second layer), all right-hand sides evaluated at the current state.
#[allow(clippy::too_many_arguments)]
pub fn ode_step(
    fields: &mut DensityField,
    v: &mut Array1<f64>,
    omega: &mut Array2<f64>,
    grid: &SpectralGrid,
    v_tilde: &Array1<f64>,
    g: Act,
    stats: &NonlinearityStats,
    eta: f64,
    dt: f64,
    step: usize,
) -> Result<()> {
    let k_dim = v.len();
    let m_dim = v_tilde.len();
    let delta = grid.delta;
    let bcoef = stats.b;
    let ccoef = stats.c;

    let q = fields.assemble_q(grid, omega, stats);
    let r = fields.assemble_r(grid, stats);
    let t = fields.t_mat.clone();
    let co = step_coefficients(&q, &r, &t, v, v_tilde, g, eta)?;

    // Per-bin density updates (pre-update field values on every RHS).
    let n_bins = grid.n_bins();
    let mut new_r = Vec::with_capacity(n_bins);
    let mut new_sigma = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let rho = grid.rho[b];
        let d_rho = (ccoef - bcoef * bcoef) * delta + bcoef * bcoef * rho;
        let r_old = &fields.r[b];
        let s_old = &fields.sigma[b];

        let mut r_new = r_old.clone();
        for k in 0..k_dim {
            for m in 0..m_dim {
                let mut bracket = 0.0;
                for j in 0..k_dim {
                    if j == k {
                        continue;
                    }
                    bracket += r_old[(k, m)] * v[j] * co.num1[(k, j)];
                    bracket += v[j] * r_old[(j, m)] * co.num2[(k, j)];
                }
                bracket += v[k] * r_old[(k, m)] * co.sk[k];
                for n in 0..m_dim {
                    bracket -= r_old[(k, m)] * v_tilde[n] * co.tn1[(k, n)];
                    bracket -= bcoef * rho / d_rho
                        * v_tilde[n]
                        * fields.t_script[(n, m)]
                        * co.tn2[(k, n)];
                }
                r_new[(k, m)] -= dt * (eta / delta) * v[k] * d_rho * bracket;
            }
        }

        let mut s_new = s_old.clone();
        // One-sided bracket with unit k active and unit l passive.
        let one_sided = |k: usize, l: usize| -> f64 {
            let mut acc = 0.0;
            for j in 0..k_dim {
                if j == k {
                    continue;
                }
                acc += d_rho * v[k] * s_old[(k, l)] * v[j] * co.num1[(k, j)];
                acc += v[k] * v[j] * d_rho * s_old[(j, l)] * co.num2[(k, j)];
            }
            acc += d_rho * v[k] * s_old[(k, l)] * v[k] * co.sk[k];
            for n in 0..m_dim {
                acc -= d_rho * v[k] * s_old[(k, l)] * v_tilde[n] * co.tn1[(k, n)];
                acc -= bcoef * rho * v[k] * v_tilde[n] * r_old[(l, n)] * co.tn2[(k, n)];
            }
            acc
        };
        for k in 0..k_dim {
            for l in k..k_dim {
                // Literal two-sided symmetrization: at k = l both orientations
                // contribute, doubling the one-sided bracket.
                let drift = -(eta / delta) * (one_sided(k, l) + one_sided(l, k));
                let eta2 = eta * eta
                    * v[k]
                    * v[l]
                    * ((ccoef - bcoef * bcoef) * rho + bcoef * bcoef / delta * rho * rho)
                    * co.f4[(k, l)];
                let val = s_old[(k, l)] + dt * (drift + eta2);
                s_new[(k, l)] = val;
                s_new[(l, k)] = val;
            }
        }
        new_r.push(r_new);
        new_sigma.push(s_new);
    }

    // Ω-part update.
    let mut new_omega = omega.clone();
    for k in 0..k_dim {
        for l in k..k_dim {
            let mut lin = 0.0;
            {
                let mut acc_k = 0.0;
                for j in 0..k_dim {
                    acc_k += v[j] * co.a3[(k, l, j)];
                }
                for n in 0..m_dim {
                    acc_k -= v_tilde[n] * co.b3[(k, l, n)];
                }
                lin -= eta * v[k] * acc_k;
            }
            {
                let mut acc_l = 0.0;
                for j in 0..k_dim {
                    acc_l += v[j] * co.a3[(l, k, j)];
                }
                for n in 0..m_dim {
                    acc_l -= v_tilde[n] * co.b3[(l, k, n)];
                }
                lin -= eta * v[l] * acc_l;
            }
            let eta2 = ccoef * eta * eta * v[k] * v[l] * co.f4[(k, l)];
            let val = omega[(k, l)] + dt * (lin + eta2);
            new_omega[(k, l)] = val;
            new_omega[(l, k)] = val;
        }
    }

    // Second layer.
    let mut new_v = v.clone();
    for k in 0..k_dim {
        new_v[k] += dt * co.dv[k];
    }

    // Commit and police finiteness.
    fields.r = new_r;
    fields.sigma = new_sigma;
    *omega = new_omega;
    *v = new_v;
    let t_now = step as f64 * dt;
    let finite = fields
        .r
        .iter()
        .chain(fields.sigma.iter())
        .all(|m| m.iter().all(|x| x.is_finite()))
        && omega.iter().all(|x| x.is_finite())
        && v.iter().all(|x| x.is_finite());
    if !finite {
        return Err(Error::Divergence {
            step,
            t: t_now,
            what: "non-finite order parameters in ODE step".into(),
        });
    }
    Ok(())
}

/// Integrate the full system from `state`'s weights and record snapshots on
/// the shared trajectory schema.
pub fn run_ode(
    state: &NetworkState,
    config: &OdeConfig,
    stats: &NonlinearityStats,
) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let g = state.config.g;
    let grid = build_spectral_grid(state, GridMode::Empirical, config.n_bins)?;
    let mut fields = init_density_fields(state, &grid, stats)?;
    let mut omega = sym_outer(&state.w, state.config.n as f64);
    let mut v = state.v.clone();
    let v_tilde = state.v_tilde.clone();

    let snapshot = |fields: &DensityField,
                    omega: &Array2<f64>,
                    v: &Array1<f64>,
                    t: f64|
     -> Result<OrderParams> {
        let q = fields.assemble_q(&grid, omega, stats);
        let r = fields.assemble_r(&grid, stats);
        let sigma = fields.assemble_sigma(&grid);
        let eps = assemble_eps_g(&q, &r, &fields.t_mat, v, &v_tilde, g)?;
        Ok(OrderParams {
            t,
            eps_g: eps,
            q,
            r,
            t_mat: fields.t_mat.clone(),
            omega: omega.clone(),
            sigma,
            v: v.clone(),
            s: None,
        })
    };

    let steps = (config.t_end / config.dt).round() as usize;
    let mut snaps = Vec::with_capacity(steps / config.stride + 1);
    snaps.push(snapshot(&fields, &omega, &v, 0.0)?);
    for step in 1..=steps {
        ode_step(
            &mut fields,
            &mut v,
            &mut omega,
            &grid,
            &v_tilde,
            g,
            stats,
            config.eta,
            config.dt,
            step,
        )?;
        if step % config.stride == 0 || step == steps {
            snaps.push(snapshot(&fields, &omega, &v, step as f64 * config.dt)?);
        }
    }

    Ok(RunRecord {
        label: format!(
            "ode N={} D={} K={} M={} eta={} dt={} bins={}",
            state.config.n,
            state.config.d,
            state.config.k,
            state.config.m,
            config.eta,
            config.dt,
            config.n_bins
        ),
        seeds: vec![],
        snaps,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}
