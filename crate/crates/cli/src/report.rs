//! SGD-vs-ODE comparison reports: per-quantity dynamic errors at the
//! evaluation time τ, the Gaussian-input baseline thresholds they are judged
//! against, and the converged/diverged verdict.
//!
//! The baseline is the tracking noise floor: twenty full-horizon SGD runs of
//! the *same* network on standard-normal latents, each compared to the same
//! ODE record. Their mean and standard deviation at τ (and of the
//! max-over-time deviation) define what "agrees with the ODE" means for any
//! structured-input run of that network. Baselines are cached on disk keyed
//! by a hash of every input that affects them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use gelab::inputs::GaussianLatent;
use gelab::integrals::nonlinearity_stats;
use gelab::io::{config_hash, format_float, read_run_csv, write_run_csv};
use gelab::network::init_gaussian;
use gelab::ode::run_ode;
use gelab::sgd::{
    average_runs, dynamic_error, run_sgd, EvalSet, Quantity, RunRecord, SampleSource,
};
use gelab::{Act, Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{prepare, run_sgd_multi, Bundle, STATS_ORDER};
use crate::plots::{emit_plot_data, FigureTag, PlotInput};

/// Sample seeds of the twenty baseline repeats; fixed so baselines are
/// comparable across experiments and cacheable.
pub const BASELINE_SEEDS: std::ops::Range<u64> = 9001..9021;

/// Everything that determines the baseline numbers; hashed into the cache
/// key. Baselines always use Gaussian latents and the fixed seed range, so
/// neither appears here.
#[derive(Serialize)]
struct BaselineKey {
    n: usize,
    d: usize,
    k: usize,
    m: usize,
    g: Act,
    f: Act,
    normalize_f: bool,
    model_seed: u64,
    eval_seed: u64,
    eta: f64,
    steps: usize,
    stride: usize,
    p_eval: usize,
    ode_dt: f64,
    ode_t_end: f64,
    ode_n_bins: usize,
    ode_stride: usize,
    tau_steps: usize,
}

impl BaselineKey {
    fn of(cfg: &ExperimentConfig) -> BaselineKey {
        let ode = cfg.ode_config();
        BaselineKey {
            n: cfg.network.n,
            d: cfg.network.d,
            k: cfg.network.k,
            m: cfg.network.m,
            g: cfg.network.g,
            f: cfg.network.f,
            normalize_f: cfg.network.normalize_f,
            model_seed: cfg.seeds.model,
            eval_seed: cfg.seeds.eval,
            eta: cfg.sgd.eta,
            steps: cfg.sgd_steps(),
            stride: cfg.sgd_stride(),
            p_eval: cfg.sgd.p_eval,
            ode_dt: ode.dt,
            ode_t_end: ode.t_end,
            ode_n_bins: ode.n_bins,
            ode_stride: ode.stride,
            tau_steps: cfg.tau_steps,
        }
    }
}

/// Baseline thresholds from twenty Gaussian-input repeats of one network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineStats {
    /// Hex hash of the generating [`BaselineKey`].
    pub key_hash: String,
    pub seeds: Vec<u64>,
    /// Per-run ε_g dynamic error at τ.
    pub per_run_at_tau: Vec<f64>,
    /// Mean and sample standard deviation of `per_run_at_tau`.
    pub e_base: f64,
    pub sigma_base: f64,
    /// Per-run max over the recorded horizon of |Δε_g|.
    pub per_run_max: Vec<f64>,
    /// Mean and sample standard deviation of `per_run_max`.
    pub e_base_max: f64,
    pub sigma_base_max: f64,
}

impl BaselineStats {
    /// The tracking-feasibility threshold at τ.
    pub fn threshold(&self) -> f64 {
        self.e_base + self.sigma_base
    }

    /// The whole-horizon threshold for max-deviation comparisons.
    pub fn threshold_max(&self) -> f64 {
        self.e_base_max + self.sigma_base_max
    }
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (n - 1.0);
    (mean, var.sqrt())
}

/// Max over the run's snapshots of |ε_g(t) − ε_g^ODE(t)|, skipping snapshot
/// times past the ODE's recorded horizon.
pub fn max_eps_deviation(run: &RunRecord, ode: &RunRecord) -> Result<f64> {
    let horizon = ode.final_t();
    let mut max = 0.0f64;
    let mut any = false;
    for snap in &run.snaps {
        if snap.t > horizon {
            continue;
        }
        let e = dynamic_error(run, ode, Quantity::EpsG, snap.t)?;
        max = max.max(e);
        any = true;
    }
    if !any {
        return Err(Error::Parameter(
            "trajectories share no recorded time range".into(),
        ));
    }
    Ok(max)
}

/// Compute (or load from `cache_dir`) the Gaussian-input baseline for the
/// network/schedule of `cfg`, judged against `ode`.
pub fn baseline_stats(
    cfg: &ExperimentConfig,
    ode: &RunRecord,
    cache_dir: &Path,
) -> Result<BaselineStats> {
    let key = BaselineKey::of(cfg);
    let key_hash = format!("{:016x}", config_hash(&key)?);
    let cache_path = cache_dir.join(format!("baseline-{key_hash}.json"));
    if let Ok(text) = std::fs::read_to_string(&cache_path) {
        if let Ok(cached) = serde_json::from_str::<BaselineStats>(&text) {
            if cached.key_hash == key_hash {
                return Ok(cached);
            }
        }
    }

    let state = init_gaussian(&cfg.network_core(), cfg.seeds.model, cfg.network.normalize_f)?;
    let stats = nonlinearity_stats(cfg.network.g, STATS_ORDER)?;
    let model = GaussianLatent { d: cfg.network.d };
    let eval_source = SampleSource::new(&model, None, cfg.seeds.eval);
    let eval = EvalSet::build(&state, &eval_source, cfg.sgd.p_eval)?;
    let tau = cfg.tau_time();

    let seeds: Vec<u64> = BASELINE_SEEDS.collect();
    let pairs: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut st = state.clone();
            let source = SampleSource::new(&model, None, seed);
            let run = run_sgd(&mut st, &source, &cfg.sgd_config(seed), &stats, &eval)?;
            Ok((
                dynamic_error(&run, ode, Quantity::EpsG, tau)?,
                max_eps_deviation(&run, ode)?,
            ))
        })
        .collect::<Result<_>>()?;

    let at_tau: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let at_max: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (e_base, sigma_base) = mean_and_sd(&at_tau);
    let (e_base_max, sigma_base_max) = mean_and_sd(&at_max);
    let out = BaselineStats {
        key_hash,
        seeds,
        per_run_at_tau: at_tau,
        e_base,
        sigma_base,
        per_run_max: at_max,
        e_base_max,
        sigma_base_max,
    };
    let json = serde_json::to_string_pretty(&out)
        .map_err(|e| Error::Config(format!("cannot serialize baseline: {e}")))?;
    std::fs::write(&cache_path, json + "\n")?;
    Ok(out)
}

/// The persisted outcome of one comparison. Every number is stored as a
/// full-precision decimal string ("inf" for diverged runs), so the verdict is
/// recomputable from the recorded fields alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub label: String,
    /// Hash of the generating experiment config.
    pub config_hash: String,
    /// Evaluation time, in raw SGD steps and normalized time.
    pub tau_steps: usize,
    pub tau_time: f64,
    /// Euclidean dynamic errors at τ keyed by quantity (eps_g, q, r, v).
    pub errors_at_tau: BTreeMap<String, String>,
    /// (t, |Δε_g|) over the SGD snapshot grid.
    pub eps_g_error_curve: Vec<[String; 2]>,
    pub e_base: String,
    pub sigma_base: String,
    /// "converged" iff e_{ε_g}(τ) ≤ e_base + σ_base.
    pub verdict: String,
    /// Paths of the trajectory CSVs (empty when the SGD run diverged).
    pub sgd_csv: String,
    pub ode_csv: String,
}

impl ComparisonReport {
    pub fn converged(&self) -> bool {
        self.verdict == "converged"
    }

    /// Parse a recorded error field back to f64 ("inf" included).
    pub fn error_at_tau(&self, quantity: &str) -> Option<f64> {
        self.errors_at_tau.get(quantity)?.parse().ok()
    }
}

fn verdict_of(eps_err: f64, threshold: f64) -> String {
    if eps_err <= threshold {
        "converged".into()
    } else {
        "diverged".into()
    }
}

/// Assemble a report from an SGD average, an ODE record, and baseline
/// thresholds.
pub fn build_report(
    label: &str,
    config_hash_hex: &str,
    tau_steps: usize,
    tau_time: f64,
    sgd_avg: &RunRecord,
    ode: &RunRecord,
    e_base: f64,
    sigma_base: f64,
    sgd_csv: &str,
    ode_csv: &str,
) -> Result<ComparisonReport> {
    let mut errors_at_tau = BTreeMap::new();
    for (name, quantity) in [
        ("eps_g", Quantity::EpsG),
        ("q", Quantity::Q),
        ("r", Quantity::R),
        ("v", Quantity::V),
    ] {
        let e = dynamic_error(sgd_avg, ode, quantity, tau_time)?;
        errors_at_tau.insert(name.to_string(), format_float(e));
    }
    let horizon = ode.final_t();
    let mut curve = Vec::new();
    for snap in &sgd_avg.snaps {
        if snap.t > horizon {
            continue;
        }
        let e = dynamic_error(sgd_avg, ode, Quantity::EpsG, snap.t)?;
        curve.push([format_float(snap.t), format_float(e)]);
    }
    let eps_err: f64 = errors_at_tau["eps_g"].parse().expect("own formatting");
    Ok(ComparisonReport {
        label: label.into(),
        config_hash: config_hash_hex.into(),
        tau_steps,
        tau_time,
        errors_at_tau,
        eps_g_error_curve: curve,
        e_base: format_float(e_base),
        sigma_base: format_float(sigma_base),
        verdict: verdict_of(eps_err, e_base + sigma_base),
        sgd_csv: sgd_csv.into(),
        ode_csv: ode_csv.into(),
    })
}

fn write_report(path: &Path, report: &ComparisonReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ComparisonReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad report {path:?}: {e}")))
}

/// `compare` in config mode: run the configured experiment's SGD seeds and
/// ODE, compute the Gaussian baseline (cached), judge tracking at τ, and
/// persist trajectories + report + optional figure bundle.
///
/// SGD divergence is a *finding*, not a failure: the report records infinite
/// errors and the diverged verdict, and the command succeeds.
pub fn cmd_compare(
    cfg: &ExperimentConfig,
    figure: Option<FigureTag>,
    overwrite: bool,
) -> Result<(ComparisonReport, Vec<PathBuf>)> {
    let bundle = Bundle::new(&cfg.out_dir, overwrite)?;
    let sgd_path = bundle.guard("sgd_avg.csv")?;
    let ode_path = bundle.guard("ode.csv")?;
    let report_path = bundle.guard("report.json")?;
    bundle.guard("manifest.json")?;

    let prep = prepare(cfg)?;
    let ode = run_ode(&prep.state, &cfg.ode_config(), &prep.stats)?;
    write_run_csv(&ode_path, &ode)?;
    let baseline = baseline_stats(cfg, &ode, &bundle.dir)?;
    let hash = format!("{:016x}", config_hash(cfg)?);

    let report = match run_sgd_multi(cfg, &prep, false) {
        Ok(runs) => {
            let avg = average_runs(&runs)?;
            write_run_csv(&sgd_path, &avg)?;
            let report = build_report(
                &cfg.label,
                &hash,
                cfg.tau_steps,
                cfg.tau_time(),
                &avg,
                &ode,
                baseline.e_base,
                baseline.sigma_base,
                &sgd_path.display().to_string(),
                &ode_path.display().to_string(),
            )?;
            if let Some(tag) = figure {
                let records = [("sgd".to_string(), &avg), ("ode".to_string(), &ode)];
                emit_plot_data(&bundle, tag, &PlotInput::Dynamics(&records))?;
            }
            report
        }
        Err(Error::Divergence { .. }) => {
            let inf = format_float(f64::INFINITY);
            let errors_at_tau: BTreeMap<String, String> = ["eps_g", "q", "r", "v"]
                .into_iter()
                .map(|k| (k.to_string(), inf.clone()))
                .collect();
            ComparisonReport {
                label: cfg.label.clone(),
                config_hash: hash,
                tau_steps: cfg.tau_steps,
                tau_time: cfg.tau_time(),
                errors_at_tau,
                eps_g_error_curve: Vec::new(),
                e_base: format_float(baseline.e_base),
                sigma_base: format_float(baseline.sigma_base),
                verdict: "diverged".into(),
                sgd_csv: String::new(),
                ode_csv: ode_path.display().to_string(),
            }
        }
        Err(e) => return Err(e),
    };
    write_report(&report_path, &report)?;
    bundle.finish(
        &cfg.label,
        cfg,
        &cfg.seeds.sgd,
        vec![
            ("command".into(), "compare".into()),
            ("verdict".into(), report.verdict.clone()),
            ("e_base".into(), report.e_base.clone()),
            ("sigma_base".into(), report.sigma_base.clone()),
            ("baseline_key".into(), baseline.key_hash.clone()),
        ],
    )?;
    Ok((report, vec![sgd_path, ode_path, report_path]))
}

/// `compare` in direct mode: judge two already-recorded trajectory CSVs at
/// `tau_time` against explicit thresholds (defaulting to zero, under which
/// only exactly matching trajectories converge).
pub fn cmd_compare_direct(
    sgd_csv: &Path,
    ode_csv: &Path,
    tau_time: f64,
    e_base: f64,
    sigma_base: f64,
    out: Option<&Path>,
    overwrite: bool,
) -> Result<ComparisonReport> {
    let sgd = read_run_csv(sgd_csv)?;
    let ode = read_run_csv(ode_csv)?;
    let hash = config_hash(&(
        sgd_csv.display().to_string(),
        ode_csv.display().to_string(),
        format_float(tau_time),
    ))?;
    let report = build_report(
        "compare-direct",
        &format!("{hash:016x}"),
        0,
        tau_time,
        &sgd,
        &ode,
        e_base,
        sigma_base,
        &sgd_csv.display().to_string(),
        &ode_csv.display().to_string(),
    )?;
    if let Some(dir) = out {
        let bundle = Bundle::new(dir, overwrite)?;
        let path = bundle.guard("report.json")?;
        write_report(&path, &report)?;
    }
    Ok(report)
}
