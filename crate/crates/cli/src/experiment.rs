//! Orchestration behind the CLI subcommands: prepare a configured experiment,
//! run the SGD seeds in parallel against one shared evaluation set, integrate
//! the ODE, drive the diagnostic sweeps, and persist every artifact bundle
//! with a manifest.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use gelab::inputs::{
    draw_block_spec, draw_mixture_spec, sample_matrix, BlockMixtureParams, GaussianLatent,
    InputModel, InputSpec, StandardizationRecord, StandardizeMode,
};
use gelab::integrals::{nonlinearity_stats, NonlinearityStats};
use gelab::io::{
    format_float, write_manifest, write_run_csv, write_timestamp, DiagnosticRow, Manifest,
};
use gelab::lab::{
    block_statistics, covariance_mismatch, fit_scaling, ks_to_normal, residuals_many, spearman,
    spread_mixture, third_moment_sum, wasserstein1_mixture_to_normal, BlockTarget,
};
use gelab::network::{init_gaussian, NetworkState};
use gelab::ode::run_ode;
use gelab::sgd::{
    average_runs, dynamic_error, run_sgd, EvalSet, Quantity, RunRecord, SampleSource,
};
use gelab::{Act, Error, Result};

use crate::config::{ExperimentConfig, StdMode};
use crate::plots::{emit_plot_data, FigureTag, MSweepRow, PlotInput, ScalingSeries, W1Row};

/// Hermite order for the activation statistics — far past convergence for
/// every supported activation.
pub const STATS_ORDER: usize = 80;

/// Everything a run needs that is shared across seeds: the input sampler,
/// its standardization record, the initialized network, and the activation
/// statistics.
pub struct Prepared {
    pub model: Box<dyn InputModel>,
    pub record: Option<StandardizationRecord>,
    pub state: NetworkState,
    pub stats: NonlinearityStats,
}

/// Build the model, standardization record, network state, and activation
/// statistics declared by a config.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let model = cfg.build_model()?;
    let record = cfg.build_record(model.as_ref())?;
    let state = init_gaussian(&cfg.network_core(), cfg.seeds.model, cfg.network.normalize_f)?;
    let stats = nonlinearity_stats(cfg.network.g, STATS_ORDER)?;
    Ok(Prepared {
        model,
        record,
        state,
        stats,
    })
}

/// Run one SGD trajectory per configured seed, in parallel, sharing a single
/// evaluation set; results keep the seed order. `truncated` stops each run at
/// the first snapshot boundary at or past τ instead of the full horizon.
pub fn run_sgd_multi(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    truncated: bool,
) -> Result<Vec<RunRecord>> {
    let eval_source = SampleSource::new(prep.model.as_ref(), prep.record.as_ref(), cfg.seeds.eval);
    let eval = EvalSet::build(&prep.state, &eval_source, cfg.sgd.p_eval)?;
    cfg.seeds
        .sgd
        .par_iter()
        .map(|&seed| {
            let sgd_cfg = if truncated {
                cfg.sgd_config_truncated(seed)
            } else {
                cfg.sgd_config(seed)
            };
            let source = SampleSource::new(prep.model.as_ref(), prep.record.as_ref(), seed);
            let mut state = prep.state.clone();
            run_sgd(&mut state, &source, &sgd_cfg, &prep.stats, &eval)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Artifact bundles
// ---------------------------------------------------------------------------

/// Refuse to clobber an existing artifact unless `--overwrite` was given.
pub fn guard_overwrite(path: &Path, overwrite: bool) -> Result<()> {
    if !overwrite && path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} exists; pass --overwrite to replace it", path.display()),
        )));
    }
    Ok(())
}

/// One output directory with clobber discipline: every artifact path is
/// guarded before anything expensive runs.
pub struct Bundle {
    pub dir: PathBuf,
    overwrite: bool,
}

impl Bundle {
    pub fn new(dir: &Path, overwrite: bool) -> Result<Bundle> {
        std::fs::create_dir_all(dir)?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            overwrite,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Path of `name`, failing if it exists and overwriting is off.
    pub fn guard(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        guard_overwrite(&p, self.overwrite)?;
        Ok(p)
    }

    /// Write `manifest.json` (timestamp-free, byte-identical across reruns)
    /// and the volatile `timestamp.txt` sidecar.
    pub fn finish<T: Serialize>(
        &self,
        label: &str,
        config: &T,
        seeds: &[u64],
        details: Vec<(String, String)>,
    ) -> Result<()> {
        let mut manifest = Manifest::new(label, config, seeds)?;
        for (k, v) in details {
            manifest.details.insert(k, v);
        }
        write_manifest(&self.path("manifest.json"), &manifest)?;
        write_timestamp(&self.path("timestamp.txt"))?;
        Ok(())
    }
}

fn standardize_detail(cfg: &ExperimentConfig) -> (String, String) {
    let mode = match cfg.standardize.mode {
        StdMode::None => "none",
        StdMode::Analytic => "analytic",
        StdMode::Empirical => "empirical",
    };
    ("standardize".into(), mode.into())
}

// ---------------------------------------------------------------------------
// `sgd` and `ode`
// ---------------------------------------------------------------------------

/// `sgd`: one trajectory CSV per seed plus their average.
pub fn cmd_sgd(cfg: &ExperimentConfig, overwrite: bool) -> Result<Vec<PathBuf>> {
    let bundle = Bundle::new(&cfg.out_dir, overwrite)?;
    let mut paths = vec![bundle.guard("sgd_avg.csv")?];
    for seed in &cfg.seeds.sgd {
        paths.push(bundle.guard(&format!("sgd_seed{seed}.csv"))?);
    }
    bundle.guard("manifest.json")?;

    let prep = prepare(cfg)?;
    let runs = run_sgd_multi(cfg, &prep, false)?;
    write_run_csv(&paths[0], &average_runs(&runs)?)?;
    for (path, run) in paths[1..].iter().zip(&runs) {
        write_run_csv(path, run)?;
    }
    bundle.finish(
        &cfg.label,
        cfg,
        &cfg.seeds.sgd,
        vec![
            ("command".into(), "sgd".into()),
            ("input".into(), prep.model.name()),
            standardize_detail(cfg),
            ("steps".into(), cfg.sgd_steps().to_string()),
            ("stride".into(), cfg.sgd_stride().to_string()),
        ],
    )?;
    Ok(paths)
}

/// `ode`: integrate the order-parameter system from the configured network's
/// initial weights.
pub fn cmd_ode(cfg: &ExperimentConfig, overwrite: bool) -> Result<Vec<PathBuf>> {
    let bundle = Bundle::new(&cfg.out_dir, overwrite)?;
    let path = bundle.guard("ode.csv")?;
    bundle.guard("manifest.json")?;

    let state = init_gaussian(&cfg.network_core(), cfg.seeds.model, cfg.network.normalize_f)?;
    let stats = nonlinearity_stats(cfg.network.g, STATS_ORDER)?;
    let ode = run_ode(&state, &cfg.ode_config(), &stats)?;
    write_run_csv(&path, &ode)?;
    bundle.finish(
        &cfg.label,
        cfg,
        &[cfg.seeds.model],
        vec![
            ("command".into(), "ode".into()),
            ("dt".into(), format_float(cfg.ode_config().dt)),
            ("t_end".into(), format_float(cfg.ode_config().t_end)),
        ],
    )?;
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// Scaling diagnostics (block statistics on the idealized design)
// ---------------------------------------------------------------------------

/// Shared layout of the block-statistic scaling sweeps: the idealized design
/// is a square network (N = D, K = M = 2, ReLU/tanh) with feature columns
/// rescaled to ‖F_col‖² = D, fed standardized block-mixture inputs.
#[derive(Debug, Clone)]
pub struct ScalingSweepSpec {
    /// Latent dimensions, one curve per entry.
    pub d_list: Vec<usize>,
    /// Block-size ratios m/D; powers of two so every D yields integer m.
    pub ratios: Vec<f64>,
    /// Samples per statistic estimate.
    pub p: usize,
    /// Feature columns (or residual triples) averaged per point.
    pub indices: usize,
    /// Independent block-spec redraws averaged per point.
    pub spec_reps: usize,
    /// Master seed; per-point spec and sample seeds derive from it.
    pub master_seed: u64,
    /// Block-mixture hyperparameters; `d` and `m` are overridden per point.
    pub params: BlockMixtureParams,
}

impl ScalingSweepSpec {
    /// Defaults for the summed-third-moment sweep: the full ratio range at
    /// modest sample counts (the statistic is cheap and low-noise). The
    /// averaging counts are set by the curve-collapse comparison, not the
    /// fit: each block's variance carries a ρ_b·((Σ_r w̃_r)² − 1) term whose
    /// χ²-style tail feeds the convex 3/2 power, so per-point scatter dies
    /// slowly. Mild correlations (the scaling here is driven by the block
    /// sizes, not by ρ), 32 feature columns, and 16 paired spec reps bring
    /// the cross-D gap noise to a few percent.
    pub fn third_moment_default(master_seed: u64) -> Self {
        ScalingSweepSpec {
            d_list: vec![1024, 2048],
            ratios: pow2_ratios(-6, -2),
            p: 1000,
            indices: 32,
            spec_reps: 16,
            master_seed,
            params: BlockMixtureParams {
                equicorr_max: 0.2,
                ..BlockMixtureParams::default()
            },
        }
    }

    /// Defaults for the KS-distance sweep: ratios keeping the block size
    /// m ≥ 16 at every D (the scaling law asks
    /// for m and D both large — blocks of size 8 already show strong shape
    /// corrections that inflate the distance at the bottom of the grid) and
    /// large P so the distance sits above the 0.87/√P estimator floor.
    /// The correlation draw is a narrow strong band (every component of a
    /// block shares nearly the same ρ): the leading deviation of the
    /// normalized total from N(0, 1) is then the correlation-induced
    /// variance mismatch, ∝ ρ̄·√(m/D), lifted a decade above the estimator
    /// floor at this P, while the variance-mixing shape channel (which
    /// scales as m/D and would steepen the fit) and the label-mean channel
    /// are suppressed. Half-step ratios keep five fit points after the
    /// fewest-blocks point is dropped from the fit window.
    pub fn ks_default(master_seed: u64) -> Self {
        ScalingSweepSpec {
            d_list: vec![512, 1024],
            ratios: vec![
                1.0 / 32.0,
                3.0 / 64.0,
                1.0 / 16.0,
                3.0 / 32.0,
                1.0 / 8.0,
                3.0 / 16.0,
            ],
            p: 100_000,
            indices: 8,
            spec_reps: 6,
            master_seed,
            params: BlockMixtureParams {
                level_half_width: 0.2,
                shift_max: 0.2,
                equicorr_min: 0.5,
                equicorr_max: 0.8,
                ..BlockMixtureParams::default()
            },
        }
    }

    /// Defaults for the covariance-consistency residual sweep. Same mid-range
    /// grid as the KS sweep: the residuals' leading term comes from
    /// within-block covariance and carries a √((m−1)/m) small-m bend, so the
    /// grid keeps m ≥ 8.
    pub fn residual_default(master_seed: u64) -> Self {
        ScalingSweepSpec {
            d_list: vec![512, 1024],
            ratios: pow2_ratios(-6, -2),
            p: 100_000,
            indices: 16,
            spec_reps: 3,
            master_seed,
            params: BlockMixtureParams::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d_list.is_empty() || self.ratios.is_empty() {
            return Err(Error::Parameter(
                "scaling sweep needs at least one dimension and one ratio".into(),
            ));
        }
        if self.indices == 0 || self.spec_reps == 0 {
            return Err(Error::Parameter(
                "scaling sweep needs indices ≥ 1 and spec_reps ≥ 1".into(),
            ));
        }
        for &r in &self.ratios {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::Parameter(format!(
                    "block-size ratio must lie in (0, 1], got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// `{2^lo, …, 2^hi}` as ratios.
pub fn pow2_ratios(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| (2f64).powi(e)).collect()
}

/// The square normalized-feature network all scaling sweeps share.
fn idealized_state(d: usize, seed: u64) -> Result<NetworkState> {
    let config = gelab::network::NetworkConfig {
        n: d,
        d,
        k: 2,
        m: 2,
        g: Act::Relu,
        f: Act::Tanh,
    };
    init_gaussian(&config, seed, true)
}

/// Deterministic per-point seed keyed by (m/D, rep): points at the same
/// block-size ratio share their spec-draw seed across D, so (together with
/// the per-block draw streams) the cross-D comparison is paired and
/// spec-draw scatter cancels out of curve-collapse checks.
fn point_seed(master: u64, d: usize, m: usize, rep: usize) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325_u64;
    for word in [(m as f64 / d as f64).to_bits(), rep as u64] {
        for byte in word.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    master ^ h
}

/// `indices` feature columns spread evenly over `n`.
fn spread_columns(n: usize, indices: usize) -> Vec<usize> {
    (0..indices).map(|j| j * n / indices).collect()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Which statistic a block-statistic sweep measures on each normalized total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockStat {
    /// `Σ_b E|Z_b|³` — the quantity the quantitative CLT bounds by.
    ThirdMoment,
    /// KS distance of the P totals to the standard normal.
    Ks,
}

/// One (d, ratio) point of a block-statistic sweep: average the statistic
/// over `indices` feature columns × `spec_reps` independent block specs.
fn block_stat_point(
    spec: &ScalingSweepSpec,
    state: &NetworkState,
    stats: &NonlinearityStats,
    d: usize,
    m: usize,
    which: BlockStat,
) -> Result<DiagnosticRow> {
    let targets: Vec<BlockTarget> = spread_columns(state.config.n, spec.indices)
        .into_iter()
        .map(BlockTarget::U)
        .collect();
    let mut values = Vec::with_capacity(spec.indices * spec.spec_reps);
    for rep in 0..spec.spec_reps {
        let seed = point_seed(spec.master_seed, d, m, rep);
        let params = BlockMixtureParams {
            d,
            m,
            ..spec.params.clone()
        };
        let (bspec, _rejections) = draw_block_spec(&params, seed)?;
        let partition = bspec.partition();
        let (mu, sigma) = bspec
            .analytic_moments()
            .expect("block mixtures have closed-form moments");
        let record = StandardizationRecord {
            mode: StandardizeMode::Analytic,
            mu,
            sigma,
        };
        let source = SampleSource::new(&bspec, Some(&record), seed ^ 0x5eed_0001);
        for stat in block_statistics(state, &source, spec.p, &partition, &targets, stats)? {
            values.push(match which {
                BlockStat::ThirdMoment => third_moment_sum(&stat),
                BlockStat::Ks => ks_to_normal(&stat.totals)?,
            });
        }
    }
    let (mean, se) = mean_and_se(&values);
    Ok(DiagnosticRow {
        m,
        d,
        statistic: mean,
        stderr: se,
    })
}

fn block_stat_sweep(spec: &ScalingSweepSpec, which: BlockStat) -> Result<Vec<ScalingSeries>> {
    spec.validate()?;
    let stats = nonlinearity_stats(Act::Tanh, STATS_ORDER)?;
    let name = match which {
        BlockStat::ThirdMoment => "third_moment_sum",
        BlockStat::Ks => "ks",
    };
    spec.d_list
        .iter()
        .map(|&d| {
            let state = idealized_state(d, spec.master_seed ^ 0xfea7)?;
            let rows: Vec<DiagnosticRow> = spec
                .ratios
                .par_iter()
                .map(|&ratio| {
                    let m = ((d as f64 * ratio).round() as usize).max(1);
                    block_stat_point(spec, &state, &stats, d, m, which)
                })
                .collect::<Result<_>>()?;
            let points: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| (r.m as f64 / r.d as f64, r.statistic))
                .collect();
            // The KS fit window drops the fewest-blocks point: with only
            // D/m ≈ 4 blocks the distance is an extreme statistic of a
            // handful of heavy-tailed block contributions, and its
            // finite-rep mean sits well below the asymptote, bending the
            // log-log curve down at the top end. (The point is still swept
            // and plotted.)
            let fit_range = match which {
                BlockStat::Ks if spec.ratios.len() >= 5 => {
                    let mut sorted = spec.ratios.clone();
                    sorted.sort_by(f64::total_cmp);
                    Some((0.0, sorted[sorted.len() - 2] * (1.0 + 1e-9)))
                }
                _ => None,
            };
            let fit = fit_scaling(&points, fit_range)?;
            Ok(ScalingSeries {
                statistic: name.into(),
                d,
                rows,
                fit,
            })
        })
        .collect()
}

/// Summed-third-moment scaling: one series per D of `Σ_b E|Z_b|³` against
/// m/D with its log-log fit.
pub fn third_moment_sweep(spec: &ScalingSweepSpec) -> Result<Vec<ScalingSeries>> {
    block_stat_sweep(spec, BlockStat::ThirdMoment)
}

/// KS-distance scaling: one series per D of the KS distance of the
/// normalized projected latent to the standard normal.
pub fn ks_sweep(spec: &ScalingSweepSpec) -> Result<Vec<ScalingSeries>> {
    block_stat_sweep(spec, BlockStat::Ks)
}

/// Covariance-consistency residual scaling: two series per D (the pairwise
/// feature residual and the input–feature residual) against m/D.
pub fn residual_sweep(spec: &ScalingSweepSpec) -> Result<Vec<ScalingSeries>> {
    spec.validate()?;
    let stats = nonlinearity_stats(Act::Tanh, STATS_ORDER)?;
    let mut out = Vec::new();
    for &d in &spec.d_list {
        let state = idealized_state(d, spec.master_seed ^ 0xfea7)?;
        let n = state.config.n;
        // Triples (i, j, r): columns i, j spread over N and offset by N/2;
        // latent coordinates r spread over D.
        let triples: Vec<(usize, usize, usize)> = (0..spec.indices)
            .map(|k| {
                let i = k * n / spec.indices;
                let j = (i + n / 2) % n;
                let r = k * d / spec.indices;
                (i, j, r)
            })
            .collect();
        let per_ratio: Vec<(DiagnosticRow, DiagnosticRow)> = spec
            .ratios
            .par_iter()
            .map(|&ratio| {
                let m = ((d as f64 * ratio).round() as usize).max(1);
                let mut r1s = Vec::new();
                let mut r2s = Vec::new();
                for rep in 0..spec.spec_reps {
                    let seed = point_seed(spec.master_seed, d, m, rep);
                    let params = BlockMixtureParams {
                        d,
                        m,
                        ..spec.params.clone()
                    };
                    let (bspec, _) = draw_block_spec(&params, seed)?;
                    let (mu, sigma) = bspec
                        .analytic_moments()
                        .expect("block mixtures have closed-form moments");
                    let record = StandardizationRecord {
                        mode: StandardizeMode::Analytic,
                        mu,
                        sigma,
                    };
                    let source = SampleSource::new(&bspec, Some(&record), seed ^ 0x5eed_0002);
                    for pair in residuals_many(&state, &source, spec.p, &triples, &stats)? {
                        r1s.push(pair.r1);
                        r2s.push(pair.r2);
                    }
                }
                let (m1, s1) = mean_and_se(&r1s);
                let (m2, s2) = mean_and_se(&r2s);
                Ok((
                    DiagnosticRow {
                        m,
                        d,
                        statistic: m1,
                        stderr: s1,
                    },
                    DiagnosticRow {
                        m,
                        d,
                        statistic: m2,
                        stderr: s2,
                    },
                ))
            })
            .collect::<Result<_>>()?;
        for (name, rows) in [
            ("r1", per_ratio.iter().map(|p| p.0).collect::<Vec<_>>()),
            ("r2", per_ratio.iter().map(|p| p.1).collect::<Vec<_>>()),
        ] {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| (r.m as f64 / r.d as f64, r.statistic))
                .collect();
            let fit = fit_scaling(&points, None)?;
            out.push(ScalingSeries {
                statistic: name.into(),
                d,
                rows,
                fit,
            });
        }
    }
    Ok(out)
}

/// `diag third-moment | ks-scaling | residuals`: run the sweep and emit the
/// per-D scaling CSVs with fit summary lines.
pub fn cmd_diag_scaling(
    out_dir: &Path,
    spec: &ScalingSweepSpec,
    tag: FigureTag,
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    let bundle = Bundle::new(out_dir, overwrite)?;
    let series = match tag {
        FigureTag::Fig6 => third_moment_sweep(spec)?,
        FigureTag::Fig7 => ks_sweep(spec)?,
        FigureTag::Fig8 => residual_sweep(spec)?,
        _ => {
            return Err(Error::Parameter(format!(
                "figure tag {tag} is not a scaling diagnostic"
            )))
        }
    };
    let paths = emit_plot_data(&bundle, tag, &PlotInput::Scaling(&series))?;
    bundle.finish(
        &format!("diag-{tag}"),
        &SweepManifest {
            d_list: spec.d_list.clone(),
            ratios: spec.ratios.clone(),
            p: spec.p,
            indices: spec.indices,
            spec_reps: spec.spec_reps,
        },
        &[spec.master_seed],
        vec![("command".into(), format!("diag {tag}"))],
    )?;
    Ok(paths)
}

#[derive(Serialize)]
struct SweepManifest {
    d_list: Vec<usize>,
    ratios: Vec<f64>,
    p: usize,
    indices: usize,
    spec_reps: usize,
}

// ---------------------------------------------------------------------------
// `diag w1` — spread-mixture distance table
// ---------------------------------------------------------------------------

/// Closed-form W1 distances of standardized spread mixtures to the standard
/// normal over a (q, α) grid. Means are coupled across α (one draw per q), so
/// each row's distance is exactly nondecreasing in α.
pub fn w1_table(q_list: &[usize], alpha_list: &[f64], seed: u64) -> Result<Vec<W1Row>> {
    let mut rows = Vec::with_capacity(q_list.len() * alpha_list.len());
    for &q in q_list {
        for &alpha in alpha_list {
            let mix = spread_mixture(q, alpha, seed.wrapping_add(q as u64))?;
            let w1 = wasserstein1_mixture_to_normal(&mix.standardized()?)?;
            rows.push(W1Row { q, alpha, w1 });
        }
    }
    Ok(rows)
}

pub fn cmd_diag_w1(
    out_dir: &Path,
    q_list: &[usize],
    alpha_list: &[f64],
    seed: u64,
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    let bundle = Bundle::new(out_dir, overwrite)?;
    let rows = w1_table(q_list, alpha_list, seed)?;
    let paths = emit_plot_data(&bundle, FigureTag::Fig2, &PlotInput::W1(&rows))?;
    bundle.finish(
        "diag-w1",
        &(q_list, alpha_list),
        &[seed],
        vec![("command".into(), "diag w1".into())],
    )?;
    Ok(paths)
}

// ---------------------------------------------------------------------------
// `diag corr` — covariance mismatch against the Gaussian reference
// ---------------------------------------------------------------------------

/// Mean absolute covariance mismatches (teacher preactivations, projected
/// latents, teacher×latent cross) between the configured ensemble and fresh
/// standard-normal latents.
pub fn cmd_diag_corr(
    cfg: &ExperimentConfig,
    p: usize,
    seed: u64,
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    let bundle = Bundle::new(&cfg.out_dir, overwrite)?;
    let path = bundle.guard("corr.csv")?;
    let prep = prepare(cfg)?;
    let raw = sample_matrix(prep.model.as_ref(), p, seed)?;
    let structured = match &prep.record {
        Some(rec) => gelab::inputs::apply_standardization(&raw, rec)?,
        None => raw,
    };
    let reference = sample_matrix(
        &GaussianLatent {
            d: prep.state.config.d,
        },
        p,
        seed.wrapping_add(1),
    )?;
    let mis = covariance_mismatch(&prep.state, structured.view(), reference.view())?;
    let mut text = String::from("component,value\n");
    for (name, value) in [("nu", mis.nu), ("u", mis.u), ("w_tilde", mis.w_tilde)] {
        text.push_str(&format!("{name},{}\n", format_float(value)));
    }
    std::fs::write(&path, text)?;
    bundle.finish(
        &cfg.label,
        cfg,
        &[seed],
        vec![
            ("command".into(), "diag corr".into()),
            ("input".into(), prep.model.name()),
            standardize_detail(cfg),
            ("p".into(), p.to_string()),
        ],
    )?;
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// Sweeps: dynamic error at τ against one input-law knob
// ---------------------------------------------------------------------------

/// Dynamic ε_g error at τ between a truncated multi-seed SGD average and the
/// shared ODE record. SGD divergence maps to +∞ (the sweep point is the
/// answer, not a failure); everything else propagates.
fn eps_error_at_tau(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    ode: &RunRecord,
) -> Result<f64> {
    match run_sgd_multi(cfg, prep, true) {
        Ok(runs) => dynamic_error(&average_runs(&runs)?, ode, Quantity::EpsG, cfg.tau_time()),
        Err(Error::Divergence { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn write_sweep_csv(path: &Path, knob: &str, rows: &[(f64, f64)], comment: Option<String>) -> Result<()> {
    let mut text = format!("{knob},eps_g_error\n");
    for &(x, e) in rows {
        text.push_str(&format!("{},{}\n", format_float(x), format_float(e)));
    }
    if let Some(c) = comment {
        text.push_str(&format!("# {c}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// The ODE record used by every point of a sweep: the trajectory depends only
/// on the network weights, not on the input law, so one integration serves
/// all sweep points.
fn sweep_ode(cfg: &ExperimentConfig) -> Result<(NetworkState, NonlinearityStats, RunRecord)> {
    let state = init_gaussian(&cfg.network_core(), cfg.seeds.model, cfg.network.normalize_f)?;
    let stats = nonlinearity_stats(cfg.network.g, STATS_ORDER)?;
    let ode = run_ode(&state, &cfg.ode_config(), &stats)?;
    Ok((state, stats, ode))
}

/// `sweep m`: redraw the block-mixture spec per block size (spec seed =
/// master + m, recorded in the manifest) and measure e_{ε_g}(τ) for each.
pub fn cmd_sweep_m(
    cfg: &ExperimentConfig,
    m_list: &[usize],
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    let (params0, master) = match &cfg.input {
        InputSpec::Block { params, spec_seed } => (params.clone(), *spec_seed),
        _ => {
            return Err(Error::Config(
                "sweep m needs a block-mixture input law".into(),
            ))
        }
    };
    if m_list.is_empty() {
        return Err(Error::Parameter("sweep m needs at least one block size".into()));
    }
    let bundle = Bundle::new(&cfg.out_dir, overwrite)?;
    let csv = bundle.guard("msweep.csv")?;

    let (state, stats, ode) = sweep_ode(cfg)?;
    let rows: Vec<(f64, f64)> = m_list
        .par_iter()
        .map(|&m| {
            let point = ExperimentConfig {
                input: InputSpec::Block {
                    params: BlockMixtureParams {
                        m,
                        ..params0.clone()
                    },
                    spec_seed: master + m as u64,
                },
                ..cfg.clone()
            };
            let model = point.build_model()?;
            let record = point.build_record(model.as_ref())?;
            let prep = Prepared {
                model,
                record,
                state: state.clone(),
                stats: stats.clone(),
            };
            Ok((m as f64, eps_error_at_tau(&point, &prep, &ode)?))
        })
        .collect::<Result<_>>()?;

    let ms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let rank_corr = spearman(&ms, &es)?;
    write_sweep_csv(
        &csv,
        "m",
        &rows,
        Some(format!("spearman={}", format_float(rank_corr))),
    )?;
    let msweep_rows: Vec<MSweepRow> = rows
        .iter()
        .map(|&(m, e)| MSweepRow { m: m as usize, e })
        .collect();
    let mut paths = emit_plot_data(
        &bundle,
        FigureTag::FigM,
        &PlotInput::MSweep {
            rows: &msweep_rows,
            rank_corr,
        },
    )?;
    paths.insert(0, csv);
    bundle.finish(
        &cfg.label,
        cfg,
        &cfg.seeds.sgd,
        vec![
            ("command".into(), "sweep m".into()),
            ("master_spec_seed".into(), master.to_string()),
            (
                "m_list".into(),
                m_list.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("spec_seed_rule".into(), "master + m".into()),
            ("spearman".into(), format_float(rank_corr)),
        ],
    )?;
    Ok(paths)
}

/// `sweep alpha` / `sweep q`: vary one dimension-wise-mixture knob with the
/// spec seed held fixed, so the component parameters move along coupled rays.
fn mixture_sweep(
    cfg: &ExperimentConfig,
    knob: &str,
    points: &[f64],
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    let (d, q0, alpha0, beta, spec_seed) = match &cfg.input {
        InputSpec::Mixture {
            d,
            q,
            alpha,
            beta,
            spec_seed,
        } => (*d, *q, *alpha, *beta, *spec_seed),
        _ => {
            return Err(Error::Config(format!(
                "sweep {knob} needs a dimension-wise mixture input law"
            )))
        }
    };
    if points.is_empty() {
        return Err(Error::Parameter(format!(
            "sweep {knob} needs at least one value"
        )));
    }
    let bundle = Bundle::new(&cfg.out_dir, overwrite)?;
    let csv = bundle.guard(&format!("{knob}sweep.csv"))?;

    let (state, stats, ode) = sweep_ode(cfg)?;
    let rows: Vec<(f64, f64)> = points
        .par_iter()
        .map(|&x| {
            let (q, alpha) = match knob {
                "q" => (x as usize, alpha0),
                _ => (q0, x),
            };
            let point = ExperimentConfig {
                input: InputSpec::Mixture {
                    d,
                    q,
                    alpha,
                    beta,
                    spec_seed,
                },
                ..cfg.clone()
            };
            let model = point.build_model()?;
            let record = point.build_record(model.as_ref())?;
            let prep = Prepared {
                model,
                record,
                state: state.clone(),
                stats: stats.clone(),
            };
            Ok((x, eps_error_at_tau(&point, &prep, &ode)?))
        })
        .collect::<Result<_>>()?;
    write_sweep_csv(&csv, knob, &rows, None)?;
    bundle.finish(
        &cfg.label,
        cfg,
        &cfg.seeds.sgd,
        vec![
            ("command".into(), format!("sweep {knob}")),
            ("spec_seed".into(), spec_seed.to_string()),
            standardize_detail(cfg),
            (
                format!("{knob}_list"),
                points.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            ),
        ],
    )?;
    Ok(vec![csv])
}

pub fn cmd_sweep_alpha(
    cfg: &ExperimentConfig,
    alpha_list: &[f64],
    overwrite: bool,
) -> Result<Vec<PathBuf>> {
    mixture_sweep(cfg, "alpha", alpha_list, overwrite)
}

pub fn cmd_sweep_q(cfg: &ExperimentConfig, q_list: &[usize], overwrite: bool) -> Result<Vec<PathBuf>> {
    let points: Vec<f64> = q_list.iter().map(|&q| q as f64).collect();
    mixture_sweep(cfg, "q", &points, overwrite)
}

// ---------------------------------------------------------------------------
// Mixture-spec helper shared by tests and the report module
// ---------------------------------------------------------------------------

/// Convenience: a dimension-wise mixture model plus its analytic record.
pub fn mixture_with_record(
    d: usize,
    q: usize,
    alpha: f64,
    beta: f64,
    spec_seed: u64,
) -> Result<(Box<dyn InputModel>, StandardizationRecord)> {
    let spec = draw_mixture_spec(d, q, alpha, beta, spec_seed)?;
    let (mu, sigma) = spec
        .analytic_moments()
        .expect("dimension-wise mixtures have closed-form moments");
    Ok((
        Box::new(spec),
        StandardizationRecord {
            mode: StandardizeMode::Analytic,
            mu,
            sigma,
        },
    ))
}
