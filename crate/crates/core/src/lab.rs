//! Distribution diagnostics behind the universality checks: Wasserstein-1
//! and Kolmogorov–Smirnov distances to the standard normal, blockwise
//! third-moment statistics for the quantitative CLT scaling, covariance
//! consistency residuals of the feature map, log-log slope fits, rank
//! correlation, and covariance-mismatch diagnostics between input ensembles.
//!
//! Everything here is a pure fold over sample streams; functions either take
//! materialized sample matrices (cheap diagnostics) or a seeded
//! [`SampleSource`] (large-`P` streams that would not fit in memory).

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::integrals::NonlinearityStats;
use crate::network::NetworkState;
use crate::sgd::SampleSource;
use crate::special::{norm_cdf, norm_quantile, norm_sf, phi};

/// Chunk height for streaming folds.
const CHUNK: usize = 256;

// ---------------------------------------------------------------------------
// Wasserstein-1 distance to the standard normal
// ---------------------------------------------------------------------------

/// Antiderivative of the standard normal CDF: `∫_{-∞}^x Φ = x·Φ(x) + φ(x)`.
#[inline]
fn int_phi_below(x: f64) -> f64 {
    x * norm_cdf(x) + phi(x)
}

/// `∫_a^b Φ(x) dx` for finite `a ≤ b`.
#[inline]
fn int_phi(a: f64, b: f64) -> f64 {
    int_phi_below(b) - int_phi_below(a)
}

/// `∫_l^u |c − Φ(x)| dx` for a constant level `c ∈ (0, 1)`, exact: the
/// integrand changes sign only at `Φ⁻¹(c)`.
fn segment_abs(c: f64, l: f64, u: f64) -> f64 {
    if u <= l {
        return 0.0;
    }
    let cross = norm_quantile(c);
    if cross <= l {
        int_phi(l, u) - c * (u - l)
    } else if cross >= u {
        c * (u - l) - int_phi(l, u)
    } else {
        (c * (cross - l) - int_phi(l, cross)) + (int_phi(cross, u) - c * (u - cross))
    }
}

/// Wasserstein-1 distance between the empirical law of `samples` and the
/// standard normal, computed as the exact area `∫|F_P(x) − Φ(x)|dx` of the
/// piecewise-constant empirical CDF against Φ (no quadrature error beyond
/// float roundoff).
pub fn wasserstein1_to_normal(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Parameter("wasserstein1 needs a nonempty sample".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("wasserstein1 needs finite samples".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    // Left tail: empirical CDF is 0, so the integrand is Φ itself.
    let mut area = int_phi_below(xs[0]);
    // Right tail: empirical CDF is 1; ∫_a^∞ (1−Φ) = φ(a) − a·(1−Φ(a)).
    let a = xs[n - 1];
    area += phi(a) - a * norm_sf(a);
    for i in 0..n - 1 {
        let c = (i + 1) as f64 / n as f64;
        area += segment_abs(c, xs[i], xs[i + 1]);
    }
    Ok(area)
}

/// A scalar Gaussian mixture `Σ_j π_j N(μ_j, σ_j²)` with validated weights.
#[derive(Debug, Clone)]
pub struct ScalarMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ScalarMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len() {
            return Err(Error::Parameter(
                "mixture needs equal-length nonempty weights/means/sds".into(),
            ));
        }
        let wsum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "mixture weights must be ≥ 0 and sum to 1 (got {wsum})"
            )));
        }
        if sds.iter().any(|&s| !(s > 0.0)) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Parameter("mixture needs σ > 0 and finite means".into()));
        }
        Ok(ScalarMixture { weights, means, sds })
    }

    /// Closed-form mean and standard deviation.
    pub fn moments(&self) -> (f64, f64) {
        let m1: f64 = self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum();
        let m2: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| w * (s * s + m * m))
            .sum();
        (m1, (m2 - m1 * m1).max(0.0).sqrt())
    }

    /// The affinely rescaled mixture with mean 0 and variance 1.
    pub fn standardized(&self) -> Result<ScalarMixture> {
        let (mu, sd) = self.moments();
        if !(sd > 0.0) {
            return Err(Error::Degenerate("mixture has zero variance".into()));
        }
        ScalarMixture::new(
            self.weights.clone(),
            self.means.iter().map(|m| (m - mu) / sd).collect(),
            self.sds.iter().map(|s| s / sd).collect(),
        )
    }

    /// Mixture CDF at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| w * norm_cdf((x - m) / s))
            .sum()
    }

    /// `∫_{-∞}^x F_mix − ∫_{-∞}^x Φ`, the signed area between the two CDFs
    /// accumulated from the left.
    fn signed_area_below(&self, x: f64) -> f64 {
        let mix: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((w, m), s)| w * s * int_phi_below((x - m) / s))
            .sum();
        mix - int_phi_below(x)
    }
}

/// Wasserstein-1 distance between a scalar Gaussian mixture and the standard
/// normal, from the closed-form antiderivative of both CDFs: the sign changes
/// of `F_mix − Φ` are located by scan+bisection and the area is summed exactly
/// between them. Accuracy is limited only by root refinement (≪ 1e-9).
pub fn wasserstein1_mixture_to_normal(mix: &ScalarMixture) -> Result<f64> {
    let lo = mix
        .means
        .iter()
        .zip(&mix.sds)
        .map(|(m, s)| m - 9.0 * s)
        .fold(-9.0_f64, f64::min);
    let hi = mix
        .means
        .iter()
        .zip(&mix.sds)
        .map(|(m, s)| m + 9.0 * s)
        .fold(9.0_f64, f64::max);
    let g = |x: f64| mix.cdf(x) - norm_cdf(x);

    // Scan for sign changes on a fine grid, then bisect each bracket.
    let n_grid = 4096usize;
    let step = (hi - lo) / n_grid as f64;
    let mut roots = Vec::new();
    let mut x_prev = lo;
    let mut g_prev = g(lo);
    for i in 1..=n_grid {
        let x = lo + step * i as f64;
        let gx = g(x);
        if g_prev == 0.0 {
            roots.push(x_prev);
        } else if g_prev.signum() != gx.signum() && gx != 0.0 {
            let (mut a, mut b, mut ga) = (x_prev, x, g_prev);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let gm = g(m);
                if gm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if ga.signum() == gm.signum() {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x_prev = x;
        g_prev = gx;
    }

    // Signed area over (-∞, r_1], [r_1, r_2], …, [r_k, ∞); the sign of
    // F_mix − Φ is constant on each piece, so |Σ| per piece is the |·| integral.
    let (mix_mean, _) = mix.moments();
    let area_at_inf = -mix_mean; // lim_{x→∞} signed_area_below(x)
    let mut total = 0.0;
    let mut prev_area = 0.0; // signed_area_below(-∞) = 0
    for &r in &roots {
        let a = mix.signed_area_below(r);
        total += (a - prev_area).abs();
        prev_area = a;
    }
    total += (area_at_inf - prev_area).abs();
    Ok(total)
}

/// Draw the scalar mixture used by the spread sweep: `q` unit-variance
/// components with means `α·u_j`, `u_j ~ U[−1, 1)`, and normalized-uniform
/// weights. The base draws `u_j` depend only on `(q, seed)`, so sweeping `α`
/// with a fixed seed moves the means along exactly coupled rays — the
/// monotonicity of the resulting distance curve is not masked by redraws.
pub fn spread_mixture(q: usize, alpha: f64, seed: u64) -> Result<ScalarMixture> {
    if q == 0 {
        return Err(Error::Parameter("mixture needs q ≥ 1".into()));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Parameter(format!("mean half-width must be ≥ 0, got {alpha}")));
    }
    let mut rng = crate::inputs::row_rng(seed, 0);
    let mut means = Vec::with_capacity(q);
    let mut weights = Vec::with_capacity(q);
    for _ in 0..q {
        let u: f64 = rng.gen_range(-1.0..1.0);
        means.push(alpha * u);
        weights.push(rng.gen_range(f64::MIN_POSITIVE..1.0));
    }
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let err = 1.0 - weights.iter().sum::<f64>();
    let imax = (0..q).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap();
    weights[imax] += err;
    ScalarMixture::new(weights, means, vec![1.0; q])
}

// ---------------------------------------------------------------------------
// Kolmogorov–Smirnov distance to the standard normal
// ---------------------------------------------------------------------------

/// Two-sided KS statistic `sup_x |F_P(x) − Φ(x)|` over sorted samples.
pub fn ks_to_normal(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Parameter("ks distance needs a nonempty sample".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("ks distance needs finite samples".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in xs.iter().enumerate() {
        let c = norm_cdf(x);
        d = d.max(((i + 1) as f64 / n - c).abs()).max((c - i as f64 / n).abs());
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Blockwise contributions to one preactivation coordinate
// ---------------------------------------------------------------------------

/// Which linear statistic the blocks partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockTarget {
    /// Projected latent `U_i = Σ_r (F_{r,i}/√D)·c_r` — feature column `i`.
    U(usize),
    /// Teacher preactivation `ν_m = Σ_r (W̃_{m,r}/√D)·c_r` — teacher row `m`.
    Nu(usize),
    /// Linear main term of the student preactivation `λ_k`: the weights are
    /// `S_{k,r}/√D` with `S = W Fᵀ/√N`; the nonlinear remainder of λ is
    /// estimated empirically alongside.
    Lambda(usize),
}

/// Per-block second/third absolute moments of one normalized linear
/// statistic `Z = Σ_b Z_b`, plus the sample stream of totals.
#[derive(Debug, Clone)]
pub struct BlockStatistic {
    pub target: BlockTarget,
    pub n_samples: usize,
    /// Design normalizer: the ℓ2 norm of the weight vector, i.e. the standard
    /// deviation the total would have under i.i.d. unit-variance coordinates.
    pub sigma: f64,
    pub block_sizes: Vec<usize>,
    /// Per-block sample means of `Z_b`.
    pub z_mean: Vec<f64>,
    /// Per-block sample variances of `Z_b` (they sum to ≈1 when the
    /// coordinates are standardized and weakly correlated).
    pub z_var: Vec<f64>,
    /// Per-block raw absolute third moments `E|Z_b|³`.
    pub z_abs3: Vec<f64>,
    /// The `P` samples of the normalized total `Σ_b Z_b`.
    pub totals: Vec<f64>,
    /// For [`BlockTarget::Lambda`] only: `Var(λ − a·offset − b·L)/Var(λ)`,
    /// the share of preactivation variance the linear main term misses.
    pub remainder_ratio: Option<f64>,
}

impl BlockStatistic {
    /// `Σ_b Var(Z_b)` — should be ≈1 for standardized weakly-correlated inputs.
    pub fn variance_sum(&self) -> f64 {
        self.z_var.iter().sum()
    }
}

/// Sum of per-block absolute third moments, `Σ_b E|Z_b|³` — the quantity the
/// quantitative CLT bounds the KS distance by.
pub fn third_moment_sum(stat: &BlockStatistic) -> f64 {
    stat.z_abs3.iter().sum()
}

fn check_partition(partition: &[(usize, usize)], d: usize) -> Result<()> {
    if partition.is_empty() {
        return Err(Error::Parameter("block partition cannot be empty".into()));
    }
    let mut next = 0usize;
    for &(start, size) in partition {
        if start != next || size == 0 {
            return Err(Error::Shape(format!(
                "block partition must tile 0..D contiguously; got block ({start}, {size}) where start {next} was expected"
            )));
        }
        next += size;
    }
    if next != d {
        return Err(Error::Shape(format!(
            "block partition covers 0..{next}, latent dimension is {d}"
        )));
    }
    Ok(())
}

/// Per-target streaming accumulators for [`block_statistics`].
struct TargetFold {
    target: BlockTarget,
    weights: Array1<f64>,
    sigma: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    totals: Vec<f64>,
    /// λ targets only: constant offset a·Σ_i W_{k,i}/√N and the running
    /// (λ, λ², rem, rem²) sums for the remainder variance share.
    lambda: Option<(usize, f64, [f64; 4])>,
}

fn target_weights(state: &NetworkState, target: BlockTarget) -> Result<Array1<f64>> {
    let (n, d) = (state.config.n, state.config.d);
    let sqrt_d = (d as f64).sqrt();
    Ok(match target {
        BlockTarget::U(i) => {
            if i >= n {
                return Err(Error::Parameter(format!("feature column {i} out of range (N={n})")));
            }
            state.f_mat.column(i).mapv(|x| x / sqrt_d)
        }
        BlockTarget::Nu(m) => {
            if m >= state.config.m {
                return Err(Error::Parameter(format!(
                    "teacher row {m} out of range (M={})",
                    state.config.m
                )));
            }
            state.w_tilde.row(m).mapv(|x| x / sqrt_d)
        }
        BlockTarget::Lambda(k) => {
            if k >= state.config.k {
                return Err(Error::Parameter(format!(
                    "student row {k} out of range (K={})",
                    state.config.k
                )));
            }
            let sqrt_n = (n as f64).sqrt();
            // S_{k,r} = Σ_i W_{k,i} F_{r,i} / √N, weights S_{k,·}/√D.
            state.f_mat.dot(&state.w.row(k)).mapv(|x| x / (sqrt_n * sqrt_d))
        }
    })
}

/// Stream `p` latent rows **once** and fold the per-block contributions for
/// several targets simultaneously: totals `T_b = Σ_{r∈B_b} w_r·c_r`,
/// normalized as `Z_b = T_b/σ` with the design normalizer `σ = ‖w‖₂`.
///
/// Sampling the structured rows dominates the large-`P` diagnostic sweeps, so
/// averaging a statistic over many feature columns must not pay for the
/// sample stream once per column. The results are identical to calling
/// [`block_statistic`] per target with the same source.
///
/// For [`BlockTarget::Lambda`] the fold additionally runs the feature map on
/// every row (once per chunk, shared by all λ targets) to measure the full
/// preactivation `λ_k` and the variance share of its nonlinear remainder
/// (`stats` supplies the feature-function coefficients `a`, `b`; they are
/// unused for the linear targets).
pub fn block_statistics(
    state: &NetworkState,
    source: &SampleSource,
    p: usize,
    partition: &[(usize, usize)],
    targets: &[BlockTarget],
    stats: &NonlinearityStats,
) -> Result<Vec<BlockStatistic>> {
    let d = state.config.d;
    check_partition(partition, d)?;
    if p < 2 {
        return Err(Error::Parameter("block statistics need at least 2 samples".into()));
    }
    if targets.is_empty() {
        return Err(Error::Parameter("block statistics need at least one target".into()));
    }
    let nb = partition.len();
    let sqrt_n = (state.config.n as f64).sqrt();

    let mut folds = Vec::with_capacity(targets.len());
    for &target in targets {
        let weights = target_weights(state, target)?;
        let sigma = weights.dot(&weights).sqrt();
        if !(sigma > 0.0) {
            return Err(Error::Degenerate("block statistic has a zero weight vector".into()));
        }
        let lambda = match target {
            BlockTarget::Lambda(k) => {
                Some((k, stats.a * state.w.row(k).sum() / sqrt_n, [0.0; 4]))
            }
            _ => None,
        };
        folds.push(TargetFold {
            target,
            weights,
            sigma,
            s1: vec![0.0; nb],
            s2: vec![0.0; nb],
            s3: vec![0.0; nb],
            totals: Vec::with_capacity(p),
            lambda,
        });
    }
    let any_lambda = folds.iter().any(|f| f.lambda.is_some());

    let mut chunk = Array2::zeros((CHUNK.min(p), d));
    let mut row_totals = vec![0.0_f64; CHUNK.min(p)];
    let mut row = 0usize;
    while row < p {
        let len = CHUNK.min(p - row);
        let mut view = chunk.slice_mut(ndarray::s![..len, ..]);
        source.fill(row, view.view_mut())?;
        let view = view.view();

        let fwd = if any_lambda {
            Some(crate::network::forward(state, view)?)
        } else {
            None
        };

        for fold in folds.iter_mut() {
            row_totals[..len].fill(0.0);
            for (b, &(start, size)) in partition.iter().enumerate() {
                let wb = fold.weights.slice(ndarray::s![start..start + size]);
                let tb = view.slice(ndarray::s![.., start..start + size]).dot(&wb);
                for (t, rt) in tb.iter().zip(row_totals.iter_mut()) {
                    fold.s1[b] += t;
                    fold.s2[b] += t * t;
                    fold.s3[b] += t.abs().powi(3);
                    *rt += t;
                }
            }
            if let Some((k, a_offset, sums)) = fold.lambda.as_mut() {
                let fwd = fwd.as_ref().expect("forward pass exists when λ targets do");
                for (s, &linear) in fwd.lambda.column(*k).iter().zip(row_totals.iter()) {
                    let rem = s - *a_offset - stats.b * linear;
                    sums[0] += s;
                    sums[1] += s * s;
                    sums[2] += rem;
                    sums[3] += rem * rem;
                }
            }
            fold.totals.extend(row_totals[..len].iter().map(|t| t / fold.sigma));
        }
        row += len;
    }

    let pf = p as f64;
    let block_sizes: Vec<usize> = partition.iter().map(|&(_, s)| s).collect();
    Ok(folds
        .into_iter()
        .map(|fold| {
            let sigma = fold.sigma;
            let mut z_mean = vec![0.0; nb];
            let mut z_var = vec![0.0; nb];
            let mut z_abs3 = vec![0.0; nb];
            for b in 0..nb {
                let m = fold.s1[b] / (pf * sigma);
                z_mean[b] = m;
                z_var[b] = (fold.s2[b] / (pf * sigma * sigma) - m * m).max(0.0);
                z_abs3[b] = fold.s3[b] / (pf * sigma * sigma * sigma);
            }
            let remainder_ratio = fold.lambda.map(|(_, _, sums)| {
                let var_lam = (sums[1] / pf - (sums[0] / pf).powi(2)).max(0.0);
                let var_rem = (sums[3] / pf - (sums[2] / pf).powi(2)).max(0.0);
                if var_lam > 0.0 {
                    var_rem / var_lam
                } else {
                    f64::NAN
                }
            });
            BlockStatistic {
                target: fold.target,
                n_samples: p,
                sigma,
                block_sizes: block_sizes.clone(),
                z_mean,
                z_var,
                z_abs3,
                totals: fold.totals,
                remainder_ratio,
            }
        })
        .collect())
}

/// Single-target convenience wrapper around [`block_statistics`].
pub fn block_statistic(
    state: &NetworkState,
    source: &SampleSource,
    p: usize,
    partition: &[(usize, usize)],
    target: BlockTarget,
    stats: &NonlinearityStats,
) -> Result<BlockStatistic> {
    Ok(block_statistics(state, source, p, partition, &[target], stats)?
        .pop()
        .expect("one target in, one statistic out"))
}

// ---------------------------------------------------------------------------
// Covariance-consistency residuals of the feature map
// ---------------------------------------------------------------------------

/// Residuals of the two Gaussian-theory identities for feature second moments,
/// with plain-mean standard errors.
#[derive(Debug, Clone, Copy)]
pub struct ResidualPair {
    /// `|E[f(U_i)f(U_j)] − (a² + b²·(FᵀF/D)_{ij})|`.
    pub r1: f64,
    pub r1_se: f64,
    /// `|E[f(U_i)·c_r] − (F_{r,i}/√D)·E[U_i f(U_i)]|`, with the scalar factor
    /// `E[U_i f(U_i)]` estimated from the same sample.
    pub r2: f64,
    pub r2_se: f64,
}

/// Stream `p ≥ 10⁴` latent rows **once** and measure both residuals for
/// several `(i, j, r)` triples simultaneously (feature columns `i ≠ j`,
/// latent coordinate `r`). One pass amortizes the structured sampling cost
/// across every triple; results are identical to calling [`residuals`] per
/// triple with the same source.
pub fn residuals_many(
    state: &NetworkState,
    source: &SampleSource,
    p: usize,
    triples: &[(usize, usize, usize)],
    stats: &NonlinearityStats,
) -> Result<Vec<ResidualPair>> {
    let (n, d) = (state.config.n, state.config.d);
    if p < 10_000 {
        return Err(Error::Parameter(format!(
            "residuals need at least 10⁴ samples, got {p}"
        )));
    }
    if triples.is_empty() {
        return Err(Error::Parameter("residuals need at least one (i, j, r) triple".into()));
    }
    for &(i, j, r) in triples {
        if i == j {
            return Err(Error::Parameter("residual R1 needs distinct feature columns".into()));
        }
        if i >= n || j >= n {
            return Err(Error::Parameter(format!(
                "feature columns ({i}, {j}) out of range (N={n})"
            )));
        }
        if r >= d {
            return Err(Error::Parameter(format!("latent coordinate {r} out of range (D={d})")));
        }
    }
    let f = state.config.f;
    let sqrt_d = (d as f64).sqrt();

    // One normalized-column matrix for all distinct feature columns, so each
    // chunk pays a single GEMM for every projected latent it needs.
    let mut cols: Vec<usize> = triples.iter().flat_map(|&(i, j, _)| [i, j]).collect();
    cols.sort_unstable();
    cols.dedup();
    let col_pos = |c: usize| cols.binary_search(&c).expect("column collected above");
    let mut col_mat = Array2::zeros((d, cols.len()));
    for (slot, &c) in cols.iter().enumerate() {
        col_mat
            .column_mut(slot)
            .assign(&state.f_mat.column(c).mapv(|x| x / sqrt_d));
    }

    // Per-triple: z1 = f(U_i)f(U_j), z2 = f(U_i)·c_r − f_ri·U_i·f(U_i).
    let mut sums = vec![[0.0_f64; 4]; triples.len()];
    let f_ri: Vec<f64> = triples
        .iter()
        .map(|&(i, _, r)| state.f_mat[(r, i)] / sqrt_d)
        .collect();

    let mut chunk = Array2::zeros((CHUNK.min(p), d));
    let mut row = 0usize;
    while row < p {
        let len = CHUNK.min(p - row);
        let mut view = chunk.slice_mut(ndarray::s![..len, ..]);
        source.fill(row, view.view_mut())?;
        let u_all = view.view().dot(&col_mat);
        for (t, &(i, j, r)) in triples.iter().enumerate() {
            let (pi, pj) = (col_pos(i), col_pos(j));
            let acc = &mut sums[t];
            for s in 0..len {
                let u = u_all[(s, pi)];
                let fu = f.apply(u);
                let z1 = fu * f.apply(u_all[(s, pj)]);
                let z2 = fu * view[(s, r)] - f_ri[t] * u * fu;
                acc[0] += z1;
                acc[1] += z1 * z1;
                acc[2] += z2;
                acc[3] += z2 * z2;
            }
        }
        row += len;
    }

    let pf = p as f64;
    Ok(triples
        .iter()
        .zip(sums.iter())
        .map(|(&(i, j, _), acc)| {
            let gram_ij = col_mat.column(col_pos(i)).dot(&col_mat.column(col_pos(j)));
            let theory1 = stats.a * stats.a + stats.b * stats.b * gram_ij;
            let mean1 = acc[0] / pf;
            let mean2 = acc[2] / pf;
            let var1 = (acc[1] / pf - mean1 * mean1).max(0.0);
            let var2 = (acc[3] / pf - mean2 * mean2).max(0.0);
            ResidualPair {
                r1: (mean1 - theory1).abs(),
                r1_se: (var1 / pf).sqrt(),
                r2: mean2.abs(),
                r2_se: (var2 / pf).sqrt(),
            }
        })
        .collect())
}

/// Single-triple convenience wrapper around [`residuals_many`].
pub fn residuals(
    state: &NetworkState,
    source: &SampleSource,
    p: usize,
    i: usize,
    j: usize,
    r: usize,
    stats: &NonlinearityStats,
) -> Result<ResidualPair> {
    Ok(residuals_many(state, source, p, &[(i, j, r)], stats)?
        .pop()
        .expect("one triple in, one pair out"))
}

// ---------------------------------------------------------------------------
// Log-log slope fits and rank correlation
// ---------------------------------------------------------------------------

/// Least-squares power-law fit on `(log x, log y)`.
#[derive(Debug, Clone, Copy)]
pub struct ScalingFit {
    pub slope: f64,
    /// Intercept in log space: `log y = slope·log x + intercept`.
    pub intercept: f64,
    pub r2: f64,
    /// Range of `x` actually used.
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_used: usize,
}

/// Fit `y = C·x^slope` by least squares on logs, optionally restricted to
/// `x ∈ [range.0, range.1]`. Requires ≥ 4 usable points, all positive.
pub fn fit_scaling(points: &[(f64, f64)], range: Option<(f64, f64)>) -> Result<ScalingFit> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, _)| range.map_or(true, |(lo, hi)| x >= lo && x <= hi))
        .collect();
    if kept.len() < 4 {
        return Err(Error::Parameter(format!(
            "scaling fit needs ≥ 4 points in range, got {}",
            kept.len()
        )));
    }
    if kept.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(Error::Parameter(
            "scaling fit needs strictly positive coordinates for the log-log regression".into(),
        ));
    }
    let n = kept.len() as f64;
    let (mut sx, mut sy) = (0.0_f64, 0.0_f64);
    for &(x, y) in &kept {
        sx += x.ln();
        sy += y.ln();
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut sxx, mut sxy, mut syy) = (0.0_f64, 0.0, 0.0);
    for &(x, y) in &kept {
        let (dx, dy) = (x.ln() - mx, y.ln() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("scaling fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let x_lo = kept.iter().map(|&(x, _)| x).fold(f64::INFINITY, f64::min);
    let x_hi = kept.iter().map(|&(x, _)| x).fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingFit { slope, intercept: my - slope * mx, r2, x_lo, x_hi, n_used: kept.len() })
}

/// Midranks with ties averaged.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; n];
    let mut i = 0usize;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with midrank tie handling.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Parameter(format!(
            "rank correlation needs two equal-length samples of ≥ 2 values (got {}, {})",
            xs.len(),
            ys.len()
        )));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0_f64, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("rank correlation is undefined for constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

// ---------------------------------------------------------------------------
// Covariance-mismatch diagnostics between two input ensembles
// ---------------------------------------------------------------------------

/// Element-wise ℓ1 covariance mismatches between a structured input ensemble
/// and a reference ensemble, measured through the network's linear maps.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceMismatch {
    /// Mean |ΔCov| over the M×M teacher preactivation covariance.
    pub nu: f64,
    /// Mean |ΔCov| over the N×N projected-latent covariance.
    pub u: f64,
    /// Mean |ΔCov| over the M×D cross-covariance of teacher preactivations
    /// with latent coordinates (the teacher-weight-direction mismatch).
    pub w_tilde: f64,
}

fn covariance(a: ArrayView2<f64>) -> Array2<f64> {
    let p = a.nrows() as f64;
    let mean = a.mean_axis(Axis(0)).expect("nonempty");
    let mut cov = a.t().dot(&a);
    cov.mapv_inplace(|x| x / p);
    for r in 0..cov.nrows() {
        for c in 0..cov.ncols() {
            cov[(r, c)] -= mean[r] * mean[c];
        }
    }
    cov
}

fn cross_covariance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let p = a.nrows() as f64;
    let ma = a.mean_axis(Axis(0)).expect("nonempty");
    let mb = b.mean_axis(Axis(0)).expect("nonempty");
    let mut cov = a.t().dot(&b);
    cov.mapv_inplace(|x| x / p);
    for r in 0..cov.nrows() {
        for c in 0..cov.ncols() {
            cov[(r, c)] -= ma[r] * mb[c];
        }
    }
    cov
}

fn mean_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += (x - y).abs();
    }
    acc / a.len() as f64
}

/// Compare the covariance structure two input ensembles induce on the
/// network's linear statistics: teacher preactivations `ν = cW̃ᵀ/√D`,
/// projected latents `U = cF/√D`, and the `ν`-vs-latent cross-covariance.
/// Both matrices are `P×D` sample sets (rows = samples).
pub fn covariance_mismatch(
    state: &NetworkState,
    structured: ArrayView2<f64>,
    reference: ArrayView2<f64>,
) -> Result<CovarianceMismatch> {
    let d = state.config.d;
    if structured.ncols() != d || reference.ncols() != d {
        return Err(Error::Shape(format!(
            "input ensembles have {} and {} columns, latent dimension is {d}",
            structured.ncols(),
            reference.ncols()
        )));
    }
    if structured.nrows() < 2 || reference.nrows() < 2 {
        return Err(Error::Parameter("covariance mismatch needs ≥ 2 samples per ensemble".into()));
    }
    let sqrt_d = (d as f64).sqrt();
    let project = |c: ArrayView2<f64>| -> (Array2<f64>, Array2<f64>) {
        let nu = c.dot(&state.w_tilde.t()).mapv(|x| x / sqrt_d);
        let u = c.dot(&state.f_mat).mapv(|x| x / sqrt_d);
        (nu, u)
    };
    let (nu_s, u_s) = project(structured);
    let (nu_r, u_r) = project(reference);

    let nu = mean_abs_diff(&covariance(nu_s.view()), &covariance(nu_r.view()));
    let u = mean_abs_diff(&covariance(u_s.view()), &covariance(u_r.view()));
    let w_tilde = mean_abs_diff(
        &cross_covariance(nu_s.view(), structured),
        &cross_covariance(nu_r.view(), reference),
    );
    Ok(CovarianceMismatch { nu, u, w_tilde })
}

#[cfg(test)]
mod tests;
