//! Scaled online SGD for the student network, trajectory records, and
//! trajectory comparison utilities.
//!
//! One training step consumes one fresh latent row `c`, forwards it through
//! teacher and student, and applies the simultaneous updates
//!
//! ```text
//! W_{k,i} ← W_{k,i} − (η/√N)·v_k·(ŷ−y)·g′(λ_k)·f(U_i)
//! v_k     ← v_k     − (η/N)·g(λ_k)·(ŷ−y)
//! ```
//!
//! where both right-hand sides use pre-update weights.  Normalized time is
//! `t = steps/N`.  Generalization error is estimated on a dedicated held-out
//! evaluation stream as `½·mean[(ŷ−y)²]`.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut2};

use crate::inputs::{apply_standardization_inplace, InputModel, StandardizationRecord};
use crate::integrals::NonlinearityStats;
use crate::network::{forward, measure_order_params, NetworkState, OrderParams};
use crate::{Error, Result};

/// Rows sampled per chunk when streaming training inputs.
const TRAIN_CHUNK: usize = 256;

/// Hyperparameters of one online-SGD run.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    /// Learning rate η (> 0).
    pub eta: f64,
    /// Total number of online steps.
    pub steps: usize,
    /// Steps between order-parameter snapshots (≥ 1).
    pub stride: usize,
    /// Held-out samples for the ε_g estimate (≥ 10³).
    pub p_eval: usize,
    /// Seed of the training sample stream.
    pub sample_seed: u64,
    /// Seed of the evaluation stream (kept disjoint from training).
    pub eval_seed: u64,
}

impl SgdConfig {
    /// Defaults for width `n`: 10·N steps, N/20 stride (200 snapshots),
    /// 10⁴ evaluation samples.
    pub fn default_for(n: usize, eta: f64, sample_seed: u64, eval_seed: u64) -> Self {
        SgdConfig {
            eta,
            steps: 10 * n,
            stride: (n / 20).max(1),
            p_eval: 10_000,
            sample_seed,
            eval_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Parameter(format!(
                "learning rate must be positive and finite, got {}",
                self.eta
            )));
        }
        if self.stride == 0 {
            return Err(Error::Parameter("snapshot stride must be ≥ 1".into()));
        }
        if self.p_eval < 1_000 {
            return Err(Error::Parameter(format!(
                "P_eval must be ≥ 1000, got {}",
                self.p_eval
            )));
        }
        Ok(())
    }
}

/// A seeded source of latent rows: an input model plus an optional
/// standardization record applied to every sampled row.
pub struct SampleSource<'a> {
    pub model: &'a dyn InputModel,
    pub record: Option<&'a StandardizationRecord>,
    pub seed: u64,
}

impl<'a> SampleSource<'a> {
    pub fn new(
        model: &'a dyn InputModel,
        record: Option<&'a StandardizationRecord>,
        seed: u64,
    ) -> Self {
        SampleSource {
            model,
            record,
            seed,
        }
    }

    /// Fill `out` with rows `row_offset .. row_offset + out.nrows()` of the
    /// stream, standardized when a record is attached.
    pub fn fill(&self, row_offset: usize, mut out: ArrayViewMut2<f64>) -> Result<()> {
        self.model.sample_into(self.seed, row_offset, out.view_mut())?;
        if let Some(rec) = self.record {
            apply_standardization_inplace(&mut out, rec);
        }
        Ok(())
    }
}

/// Precomputed held-out evaluation data: feature-mapped inputs and labels.
///
/// The feature map `X = f(C̄F/√D)` does not change during training, so one
/// evaluation set amortizes the expensive lift across every snapshot of every
/// run that shares the teacher, feature matrix, and input distribution.
#[derive(Debug, Clone)]
pub struct EvalSet {
    /// Lifted inputs `f(U)`, `P×N`.
    pub x: Array2<f64>,
    /// Teacher labels, length `P`.
    pub y: Array1<f64>,
}

impl EvalSet {
    pub fn build(state: &NetworkState, source: &SampleSource, p_eval: usize) -> Result<EvalSet> {
        if p_eval == 0 {
            return Err(Error::Parameter("evaluation set cannot be empty".into()));
        }
        let d = state.config.d;
        let mut cbar = Array2::zeros((p_eval, d));
        source.fill(0, cbar.view_mut())?;
        let fwd = forward(state, cbar.view())?;
        let f = state.config.f;
        let x = fwd.u.mapv(|z| f.apply(z));
        Ok(EvalSet { x, y: fwd.y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Monte-Carlo generalization error `½·mean[(ŷ−y)²]` of `state` on `eval`.
pub fn eps_g_eval(state: &NetworkState, eval: &EvalSet) -> f64 {
    let g = state.config.g;
    let sqrt_n = (state.config.n as f64).sqrt();
    let mut lambda = eval.x.dot(&state.w.t());
    lambda.mapv_inplace(|z| z / sqrt_n);
    let y_hat = lambda.mapv(|z| g.apply(z)).dot(&state.v);
    let p = eval.y.len() as f64;
    let mut acc = 0.0;
    for (yh, y) in y_hat.iter().zip(eval.y.iter()) {
        let e = yh - y;
        acc += e * e;
    }
    0.5 * acc / p
}

/// One online step on a single latent row; returns the per-step loss
/// `½(ŷ−y)²`.  `step` only labels the divergence diagnostic.
pub fn sgd_step(
    state: &mut NetworkState,
    c_row: ArrayView1<f64>,
    eta: f64,
    step: usize,
) -> Result<f64> {
    let cfg = state.config.clone();
    if c_row.len() != cfg.d {
        return Err(Error::Shape(format!(
            "latent row has {} entries, network expects D = {}",
            c_row.len(),
            cfg.d
        )));
    }
    let sqrt_d = (cfg.d as f64).sqrt();
    let sqrt_n = (cfg.n as f64).sqrt();
    let n = cfg.n as f64;

    // x = f(cF/√D), λ = xWᵀ/√N, ν = cW̃ᵀ/√D — all from pre-update weights.
    let mut x = c_row.dot(&state.f_mat);
    x.mapv_inplace(|z| cfg.f.apply(z / sqrt_d));
    let mut lambda = state.w.dot(&x);
    lambda.mapv_inplace(|z| z / sqrt_n);
    let mut nu = state.w_tilde.dot(&c_row);
    nu.mapv_inplace(|z| z / sqrt_d);

    let y: f64 = nu
        .iter()
        .zip(state.v_tilde.iter())
        .map(|(&z, &vt)| vt * cfg.g.apply(z))
        .sum();
    let y_hat: f64 = lambda
        .iter()
        .zip(state.v.iter())
        .map(|(&z, &v)| v * cfg.g.apply(z))
        .sum();
    let err = y_hat - y;
    if !err.is_finite() || lambda.iter().any(|z| !z.is_finite()) {
        return Err(Error::Divergence {
            step,
            t: step as f64 / n,
            what: "non-finite forward values in SGD step".into(),
        });
    }

    // Simultaneous update: coefficients from pre-update λ and v.
    let mut w_coef = Array1::zeros(cfg.k);
    let mut v_delta = Array1::zeros(cfg.k);
    for k in 0..cfg.k {
        w_coef[k] = (eta / sqrt_n) * state.v[k] * err * cfg.g.deriv(lambda[k]);
        v_delta[k] = (eta / n) * err * cfg.g.apply(lambda[k]);
    }
    for k in 0..cfg.k {
        let coef = w_coef[k];
        if coef != 0.0 {
            let mut row = state.w.row_mut(k);
            row.iter_mut().zip(x.iter()).for_each(|(w, &xi)| {
                *w -= coef * xi;
            });
        }
        state.v[k] -= v_delta[k];
    }
    Ok(0.5 * err * err)
}

/// Trajectory of one run (or one average of runs): snapshot times are strictly
/// increasing and start at t = 0.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Human-readable provenance (config summary).
    pub label: String,
    /// Seeds that produced the record (sample/eval, or all contributing runs).
    pub seeds: Vec<u64>,
    /// Order-parameter snapshots, first at t = 0.
    pub snaps: Vec<OrderParams>,
    /// Wall-clock seconds spent producing the record.
    pub wall_secs: f64,
}

impl RunRecord {
    pub fn times(&self) -> Vec<f64> {
        self.snaps.iter().map(|s| s.t).collect()
    }

    pub fn k(&self) -> usize {
        self.snaps.first().map_or(0, |s| s.q.nrows())
    }

    pub fn m(&self) -> usize {
        self.snaps.first().map_or(0, |s| s.t_mat.nrows())
    }

    pub fn final_t(&self) -> f64 {
        self.snaps.last().map_or(0.0, |s| s.t)
    }
}

/// Which trajectory quantity a comparison looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    EpsG,
    Q,
    R,
    V,
}

impl Quantity {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "eps_g" => Ok(Quantity::EpsG),
            "q" | "Q" => Ok(Quantity::Q),
            "r" | "R" => Ok(Quantity::R),
            "v" => Ok(Quantity::V),
            other => Err(Error::Parameter(format!(
                "unknown quantity tag '{other}' (expected eps_g | Q | R | v)"
            ))),
        }
    }

    /// Flatten the tagged quantity of one snapshot into a vector.
    fn extract(&self, snap: &OrderParams) -> Vec<f64> {
        match self {
            Quantity::EpsG => vec![snap.eps_g],
            Quantity::Q => snap.q.iter().copied().collect(),
            Quantity::R => snap.r.iter().copied().collect(),
            Quantity::V => snap.v.iter().copied().collect(),
        }
    }
}

fn interp_quantity(record: &RunRecord, quantity: Quantity, tau: f64) -> Result<Vec<f64>> {
    let times = record.times();
    let (first, last) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Degenerate("empty trajectory record".into())),
    };
    let tol = 1e-12 * (1.0 + last.abs());
    if tau < first - tol || tau > last + tol {
        return Err(Error::Parameter(format!(
            "τ = {tau} outside recorded range [{first}, {last}]"
        )));
    }
    let tau = tau.clamp(first, last);
    // Find the bracketing snapshots.
    let hi = times.partition_point(|&t| t < tau).min(times.len() - 1);
    let lo = if times[hi] <= tau { hi } else { hi - 1 };
    let hi = if times[lo] >= tau { lo } else { hi };
    let a = quantity.extract(&record.snaps[lo]);
    if lo == hi || (times[hi] - times[lo]).abs() < 1e-300 {
        return Ok(a);
    }
    let b = quantity.extract(&record.snaps[hi]);
    let w = (tau - times[lo]) / (times[hi] - times[lo]);
    Ok(a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (1.0 - w) * x + w * y)
        .collect())
}

/// Euclidean norm of the difference of the tagged quantity between two
/// records at normalized time `τ`, with linear interpolation between
/// snapshots.
pub fn dynamic_error(a: &RunRecord, b: &RunRecord, quantity: Quantity, tau: f64) -> Result<f64> {
    let va = interp_quantity(a, quantity, tau)?;
    let vb = interp_quantity(b, quantity, tau)?;
    if va.len() != vb.len() {
        return Err(Error::Shape(format!(
            "records disagree on quantity dimension ({} vs {})",
            va.len(),
            vb.len()
        )));
    }
    Ok(va
        .iter()
        .zip(vb.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Element-wise mean of several records sharing one snapshot grid.
pub fn average_runs(records: &[RunRecord]) -> Result<RunRecord> {
    let first = records
        .first()
        .ok_or_else(|| Error::Parameter("cannot average zero records".into()))?;
    let times = first.times();
    for rec in records.iter().skip(1) {
        let other = rec.times();
        if other.len() != times.len()
            || times
                .iter()
                .zip(other.iter())
                .any(|(&a, &b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::Parameter(
                "records have mismatched snapshot time grids".into(),
            ));
        }
    }
    let inv = 1.0 / records.len() as f64;
    let mut snaps = Vec::with_capacity(first.snaps.len());
    for i in 0..first.snaps.len() {
        let mut acc = first.snaps[i].clone();
        acc.s = None;
        for rec in records.iter().skip(1) {
            let s = &rec.snaps[i];
            acc.eps_g += s.eps_g;
            acc.q += &s.q;
            acc.r += &s.r;
            acc.t_mat += &s.t_mat;
            acc.omega += &s.omega;
            acc.sigma += &s.sigma;
            acc.v += &s.v;
        }
        acc.eps_g *= inv;
        acc.q *= inv;
        acc.r *= inv;
        acc.t_mat *= inv;
        acc.omega *= inv;
        acc.sigma *= inv;
        acc.v *= inv;
        snaps.push(acc);
    }
    Ok(RunRecord {
        label: format!("mean of {} runs: {}", records.len(), first.label),
        seeds: records.iter().flat_map(|r| r.seeds.iter().copied()).collect(),
        snaps,
        wall_secs: records.iter().map(|r| r.wall_secs).sum(),
    })
}

/// Train `state` online on `source` and record order parameters every
/// `config.stride` steps (plus the t = 0 snapshot).
///
/// The evaluation set must be built from the same teacher/feature matrix and
/// the run's input distribution; it is shared across runs for efficiency.
pub fn run_sgd(
    state: &mut NetworkState,
    source: &SampleSource,
    config: &SgdConfig,
    stats: &NonlinearityStats,
    eval: &EvalSet,
) -> Result<RunRecord> {
    config.validate()?;
    if eval.x.ncols() != state.config.n {
        return Err(Error::Shape(format!(
            "evaluation set is for N = {}, network has N = {}",
            eval.x.ncols(),
            state.config.n
        )));
    }
    let start = Instant::now();
    let n = state.config.n as f64;
    let d = state.config.d;

    let mut snaps = Vec::with_capacity(config.steps / config.stride + 1);
    let mut snap0 = measure_order_params(state, stats, false);
    snap0.t = 0.0;
    snap0.eps_g = eps_g_eval(state, eval);
    snaps.push(snap0);

    let mut chunk = Array2::zeros((TRAIN_CHUNK, d));
    let mut chunk_start = 0usize;
    let mut chunk_len = 0usize;
    for step in 1..=config.steps {
        let row_index = step - 1;
        if row_index >= chunk_start + chunk_len {
            chunk_start = row_index;
            chunk_len = TRAIN_CHUNK.min(config.steps - row_index);
            source.fill(
                chunk_start,
                chunk.slice_mut(ndarray::s![..chunk_len, ..]),
            )?;
        }
        let row = chunk.row(row_index - chunk_start);
        sgd_step(state, row, config.eta, step)?;
        if step % config.stride == 0 {
            let mut snap = measure_order_params(state, stats, false);
            snap.t = step as f64 / n;
            snap.eps_g = eps_g_eval(state, eval);
            if !snap.eps_g.is_finite() {
                return Err(Error::Divergence {
                    step,
                    t: snap.t,
                    what: "non-finite generalization error at snapshot".into(),
                });
            }
            snaps.push(snap);
        }
    }

    Ok(RunRecord {
        label: format!(
            "sgd N={} D={} K={} M={} eta={} input={}",
            state.config.n,
            state.config.d,
            state.config.k,
            state.config.m,
            config.eta,
            source.model.name()
        ),
        seeds: vec![config.sample_seed, config.eval_seed],
        snaps,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}
