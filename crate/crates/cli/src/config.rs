//! On-disk experiment configuration (TOML) and its translation into the core
//! engine types.
//!
//! The file mirrors one full experiment: network dimensions, SGD and ODE
//! integration parameters, the input-law spec, the standardization mode, the
//! seed set, and the output directory. Optional fields default to the
//! desk-scale profile (N = 1024, δ = 1/2) so a minimal file stays small;
//! [`template_toml`] renders a fully commented template at either the
//! full-scale or the desk-scale profile.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gelab::inputs::{
    build_input_model, fit_streaming_record, InputModel, InputSpec, StandardizationRecord,
    StandardizeMode,
};
use gelab::network::NetworkConfig;
use gelab::ode::OdeConfig;
use gelab::sgd::SgdConfig;
use gelab::{Act, Error, Result};

/// Network dimensions and nonlinearities, plus the feature-matrix column
/// normalization switch used by the idealized diagnostic design.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Lifted input dimension N.
    pub n: usize,
    /// Latent dimension D.
    pub d: usize,
    /// Student hidden width K.
    #[serde(default = "two")]
    pub k: usize,
    /// Teacher hidden width M.
    #[serde(default = "two")]
    pub m: usize,
    /// Hidden activation shared by student and teacher.
    #[serde(default = "relu")]
    pub g: Act,
    /// Feature function applied to the projected latent.
    #[serde(default = "tanh")]
    pub f: Act,
    /// Rescale every feature-matrix column to ‖F_{·,i}‖² = D.
    #[serde(default)]
    pub normalize_f: bool,
}

fn two() -> usize {
    2
}
fn relu() -> Act {
    Act::Relu
}
fn tanh() -> Act {
    Act::Tanh
}

impl NetworkSection {
    pub fn to_core(&self) -> NetworkConfig {
        NetworkConfig {
            n: self.n,
            d: self.d,
            k: self.k,
            m: self.m,
            g: self.g,
            f: self.f,
        }
    }
}

/// SGD hyperparameters; omitted step counts derive from N (10·N steps,
/// N/20 snapshot stride).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Total online steps; default 10·N.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Steps between snapshots; default max(N/20, 1).
    #[serde(default)]
    pub stride: Option<usize>,
    /// Held-out samples for the ε_g estimate.
    #[serde(default = "default_p_eval")]
    pub p_eval: usize,
}

fn default_eta() -> f64 {
    0.2
}
fn default_p_eval() -> usize {
    10_000
}

impl Default for SgdSection {
    fn default() -> Self {
        SgdSection {
            eta: default_eta(),
            steps: None,
            stride: None,
            p_eval: default_p_eval(),
        }
    }
}

/// ODE integration parameters; the end time defaults to the SGD horizon
/// steps/N so the two trajectories cover the same normalized-time window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Final normalized time; default = SGD steps / N.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    /// ODE steps between snapshots.
    #[serde(default = "default_ode_stride")]
    pub stride: usize,
}

fn default_dt() -> f64 {
    0.01
}
fn default_bins() -> usize {
    64
}
fn default_ode_stride() -> usize {
    5
}

impl Default for OdeSection {
    fn default() -> Self {
        OdeSection {
            dt: default_dt(),
            t_end: None,
            n_bins: default_bins(),
            stride: default_ode_stride(),
        }
    }
}

/// How the latent rows are standardized before entering the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// Feed raw draws.
    #[default]
    None,
    /// Closed-form per-dimension mean/sd of the input law.
    Analytic,
    /// Mean/sd fitted from a dedicated sample stream, then applied to the
    /// training and evaluation streams.
    Empirical,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardizeSection {
    #[serde(default)]
    pub mode: StdMode,
    /// Rows used to fit the empirical record.
    #[serde(default = "default_fit_rows")]
    pub fit_rows: usize,
    /// Seed of the fitting stream (disjoint from training/eval streams).
    #[serde(default = "default_fit_seed")]
    pub fit_seed: u64,
}

fn default_fit_rows() -> usize {
    10_000
}
fn default_fit_seed() -> u64 {
    4242
}

impl Default for StandardizeSection {
    fn default() -> Self {
        StandardizeSection {
            mode: StdMode::None,
            fit_rows: default_fit_rows(),
            fit_seed: default_fit_seed(),
        }
    }
}

/// Every RNG stream of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    /// Teacher/student/feature-matrix initialization.
    #[serde(default = "default_model_seed")]
    pub model: u64,
    /// One SGD run per entry; the comparison uses their average.
    #[serde(default = "default_sgd_seeds")]
    pub sgd: Vec<u64>,
    /// Held-out evaluation stream.
    #[serde(default = "default_eval_seed")]
    pub eval: u64,
}

fn default_model_seed() -> u64 {
    1
}
fn default_sgd_seeds() -> Vec<u64> {
    vec![101, 102, 103, 104, 105]
}
fn default_eval_seed() -> u64 {
    7001
}

impl Default for SeedsSection {
    fn default() -> Self {
        SeedsSection {
            model: default_model_seed(),
            sgd: default_sgd_seeds(),
            eval: default_eval_seed(),
        }
    }
}

/// One complete experiment: everything a subcommand needs to reproduce its
/// artifacts byte-for-byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label recorded in manifests and reports.
    #[serde(default = "default_label")]
    pub label: String,
    /// Artifact directory (the `--out` flag overrides it).
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Evaluation time for dynamic-error comparisons, in raw SGD steps
    /// (normalized time τ = tau_steps/N).
    #[serde(default = "default_tau_steps")]
    pub tau_steps: usize,
    pub network: NetworkSection,
    #[serde(default)]
    pub sgd: SgdSection,
    #[serde(default)]
    pub ode: OdeSection,
    pub input: InputSpec,
    #[serde(default)]
    pub standardize: StandardizeSection,
    #[serde(default)]
    pub seeds: SeedsSection,
}

fn default_label() -> String {
    "experiment".into()
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/experiment")
}
fn default_tau_steps() -> usize {
    1000
}

/// Latent dimension declared by an input spec.
pub fn input_dim(spec: &InputSpec) -> usize {
    match spec {
        InputSpec::Gaussian { d } => *d,
        InputSpec::Mixture { d, .. } => *d,
        InputSpec::Block { params, .. } => params.d,
        InputSpec::Scalar { d, .. } => *d,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {path:?}: {e}")))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let net = self.network.to_core();
        net.validate()?;
        let din = input_dim(&self.input);
        if din != net.d {
            return Err(Error::Config(format!(
                "input law has latent dimension {din}, network declares D = {}",
                net.d
            )));
        }
        if self.seeds.sgd.is_empty() {
            return Err(Error::Config("seed list for SGD runs cannot be empty".into()));
        }
        if self.tau_steps == 0 {
            return Err(Error::Config("tau_steps must be ≥ 1".into()));
        }
        if self.tau_steps > self.sgd_steps() {
            return Err(Error::Config(format!(
                "tau_steps = {} exceeds the SGD horizon of {} steps",
                self.tau_steps,
                self.sgd_steps()
            )));
        }
        self.sgd_config(self.seeds.sgd[0]).validate()?;
        self.ode_config().validate()?;
        Ok(())
    }

    pub fn network_core(&self) -> NetworkConfig {
        self.network.to_core()
    }

    /// Total SGD steps (10·N when unset).
    pub fn sgd_steps(&self) -> usize {
        self.sgd.steps.unwrap_or(10 * self.network.n)
    }

    /// Snapshot stride (N/20 when unset).
    pub fn sgd_stride(&self) -> usize {
        self.sgd.stride.unwrap_or((self.network.n / 20).max(1))
    }

    pub fn sgd_config(&self, sample_seed: u64) -> SgdConfig {
        SgdConfig {
            eta: self.sgd.eta,
            steps: self.sgd_steps(),
            stride: self.sgd_stride(),
            p_eval: self.sgd.p_eval,
            sample_seed,
            eval_seed: self.seeds.eval,
        }
    }

    /// SGD config truncated to the first snapshot boundary at or after the
    /// comparison time τ — used when only e_𝒟(τ) is needed.
    pub fn sgd_config_truncated(&self, sample_seed: u64) -> SgdConfig {
        let stride = self.sgd_stride();
        let steps = self.tau_steps.div_ceil(stride) * stride;
        SgdConfig {
            steps: steps.min(self.sgd_steps().max(steps)),
            ..self.sgd_config(sample_seed)
        }
    }

    pub fn ode_config(&self) -> OdeConfig {
        OdeConfig {
            dt: self.ode.dt,
            t_end: self
                .ode
                .t_end
                .unwrap_or(self.sgd_steps() as f64 / self.network.n as f64),
            n_bins: self.ode.n_bins,
            eta: self.sgd.eta,
            stride: self.ode.stride,
        }
    }

    /// Normalized comparison time τ = tau_steps/N.
    pub fn tau_time(&self) -> f64 {
        self.tau_steps as f64 / self.network.n as f64
    }

    /// Build the input sampler declared by the config.
    pub fn build_model(&self) -> Result<Box<dyn InputModel>> {
        build_input_model(&self.input)
    }

    /// Build the standardization record for `model` per the configured mode;
    /// `None` means raw draws.
    pub fn build_record(&self, model: &dyn InputModel) -> Result<Option<StandardizationRecord>> {
        match self.standardize.mode {
            StdMode::None => Ok(None),
            StdMode::Analytic => {
                let (mu, sigma) = model.analytic_moments().ok_or_else(|| {
                    Error::Model(format!(
                        "law '{}' has no finite analytic moments; use empirical standardization",
                        model.name()
                    ))
                })?;
                let rec = StandardizationRecord {
                    mode: StandardizeMode::Analytic,
                    mu,
                    sigma,
                };
                rec.validate()?;
                Ok(Some(rec))
            }
            StdMode::Empirical => Ok(Some(fit_streaming_record(
                model,
                self.standardize.fit_rows,
                self.standardize.fit_seed,
            )?)),
        }
    }

    /// The desk-scale reference experiment: N = 1024, δ = 1/2, Gaussian
    /// inputs — the configuration whose SGD-vs-ODE agreement defines the
    /// tracking baseline.
    pub fn desk_default() -> Self {
        ExperimentConfig {
            label: default_label(),
            out_dir: default_out_dir(),
            tau_steps: default_tau_steps(),
            network: NetworkSection {
                n: 1024,
                d: 512,
                k: 2,
                m: 2,
                g: Act::Relu,
                f: Act::Tanh,
                normalize_f: false,
            },
            sgd: SgdSection::default(),
            ode: OdeSection::default(),
            input: InputSpec::Gaussian { d: 512 },
            standardize: StandardizeSection::default(),
            seeds: SeedsSection::default(),
        }
    }
}

/// Which scale a generated template targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// N = 4096, δ = 1/2 — the full-scale figure profile.
    Full,
    /// N = 1024, δ = 1/2 — fast runs with the same physics.
    Desk,
}

impl Profile {
    pub fn from_name(name: &str) -> Result<Profile> {
        match name {
            "full" => Ok(Profile::Full),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Parameter(format!(
                "unknown profile '{other}' (expected full | desk)"
            ))),
        }
    }
}

/// Render a fully commented configuration template.
pub fn template_toml(profile: Profile) -> String {
    let (n, d) = match profile {
        Profile::Full => (4096usize, 2048usize),
        Profile::Desk => (1024usize, 512usize),
    };
    format!(
        r#"# Experiment configuration.
#
# Profiles: the full-scale figure profile uses N = 4096, D = 2048; the
# desk-scale profile (same physics, ~1/16 the work) uses N = 1024, D = 512.
# Every omitted optional field falls back to the defaults shown here.

# Label recorded in manifests and reports.
label = "mixture-standardized"
# Artifact directory; `--out` overrides.
out_dir = "runs/mixture-standardized"
# Evaluation time for dynamic-error comparisons, in raw SGD steps
# (normalized time tau = tau_steps / n).
tau_steps = 1000

[network]
n = {n}            # lifted input dimension N
d = {d}            # latent dimension D (delta = D/N = 1/2)
k = 2              # student hidden width
m = 2              # teacher hidden width
g = "relu"         # hidden activation (relu | hardtanh | identity)
f = "tanh"         # feature function (tanh | hardtanh | relu | identity)
normalize_f = false # rescale feature columns to ||F_col||^2 = D

[sgd]
eta = 0.2          # learning rate
steps = {steps}      # total online steps (default 10*n)
stride = {stride}        # steps between snapshots (default n/20)
p_eval = 10000     # held-out samples for the eps_g estimate

[ode]
dt = 0.01          # Euler step in normalized time
t_end = 10.0       # final normalized time (default steps/n)
n_bins = 64        # spectral bins
stride = 5         # ODE steps between snapshots

# Input law. One of:
#   kind = "gaussian"   with d
#   kind = "mixture"    with d, q, alpha, beta, spec_seed
#   kind = "block"      with spec_seed and an [input.params] table
#   kind = "scalar"     with d and an [input.law] table
[input]
kind = "mixture"
d = {d}
q = 2              # mixture components per dimension
alpha = 1.0        # component means ~ U[-alpha, alpha)
beta = 10.0        # component standard deviations ~ U(0, beta)
spec_seed = 7      # seed of the per-dimension parameter draw

# Block-mixture example (replace the [input] table above):
# [input]
# kind = "block"
# spec_seed = 7
# [input.params]
# d = {d}
# m = 8                  # block size
# q = 2                  # components per block
# level_half_width = 0.5 # component levels ~ U[-w, w)
# shift_max = 0.5        # mean shifts along u_b ~ U[0, w)
# equicorr_max = 0.5     # equicorrelation ~ U[0, w)
# rank1_max = 0.3        # rank-one strength ~ U[0, w)
# sd_lo = 0.5            # coordinate sd ~ U[sd_lo, sd_hi)
# sd_hi = 1.5

# Scalar-law example (replace the [input] table above):
# [input]
# kind = "scalar"
# d = {d}
# [input.law]
# law = "lorentz"        # uniform | beta | poisson | laplace | pareto |
# x0 = 0.0               # lorentz | gaussian | gaussian_mixture | affine_proxy
# gamma = 1.0

[standardize]
mode = "analytic"  # none | analytic | empirical
fit_rows = 10000   # rows for the empirical fit
fit_seed = 4242    # seed of the fitting stream

[seeds]
model = 1                        # teacher/student/feature-matrix init
sgd = [101, 102, 103, 104, 105]  # one SGD run per entry; compared as the average
eval = 7001                      # held-out evaluation stream
"#,
        n = n,
        d = d,
        steps = 10 * n,
        stride = (n / 20).max(1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_round_trips_through_the_parser() {
        for profile in [Profile::Full, Profile::Desk] {
            let text = template_toml(profile);
            let cfg = ExperimentConfig::from_toml_str(&text).expect("template parses");
            assert_eq!(cfg.sgd_steps(), 10 * cfg.network.n);
            assert_eq!(cfg.network.d * 2, cfg.network.n);
            assert_eq!(cfg.tau_steps, 1000);
            assert_eq!(cfg.standardize.mode, StdMode::Analytic);
        }
    }

    #[test]
    fn minimal_config_gets_desk_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [network]
            n = 256
            d = 128
            [input]
            kind = "gaussian"
            d = 128
            "#,
        )
        .unwrap();
        assert_eq!(cfg.sgd.eta, 0.2);
        assert_eq!(cfg.sgd_steps(), 2560);
        assert_eq!(cfg.sgd_stride(), 12);
        assert_eq!(cfg.seeds.sgd.len(), 5);
        assert_eq!(cfg.standardize.mode, StdMode::None);
        let ode = cfg.ode_config();
        assert!((ode.t_end - 10.0).abs() < 1e-12);
        // τ-truncated runs stop at the first snapshot boundary ≥ τ.
        let trunc = cfg.sgd_config_truncated(1);
        assert_eq!(trunc.steps % trunc.stride, 0);
        assert!(trunc.steps >= cfg.tau_steps);
        assert!(trunc.steps < cfg.tau_steps + trunc.stride);
    }

    #[test]
    fn config_validation_errors() {
        // Input dimension must match the network's D.
        let err = ExperimentConfig::from_toml_str(
            r#"
            [network]
            n = 256
            d = 128
            [input]
            kind = "gaussian"
            d = 64
            "#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);

        // Unknown fields are config errors, not silent typos.
        let err = ExperimentConfig::from_toml_str(
            r#"
            [network]
            n = 256
            d = 128
            learning_rate = 0.2
            [input]
            kind = "gaussian"
            d = 128
            "#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);

        // Empty seed list is rejected.
        let err = ExperimentConfig::from_toml_str(
            r#"
            [network]
            n = 256
            d = 128
            [input]
            kind = "gaussian"
            d = 128
            [seeds]
            sgd = []
            "#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn scalar_and_block_specs_parse() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [network]
            n = 256
            d = 128
            [input]
            kind = "scalar"
            d = 128
            [input.law]
            law = "lorentz"
            x0 = 0.0
            gamma = 1.0
            [standardize]
            mode = "empirical"
            "#,
        )
        .unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.latent_dim(), 128);
        // Lorentz has no analytic moments — analytic standardization errors.
        let analytic = ExperimentConfig {
            standardize: StandardizeSection {
                mode: StdMode::Analytic,
                ..cfg.standardize.clone()
            },
            ..cfg.clone()
        };
        assert!(analytic.build_record(model.as_ref()).is_err());
        // Empirical mode fits per-column constants.
        let rec = cfg.build_record(model.as_ref()).unwrap().unwrap();
        assert_eq!(rec.mu.len(), 128);

        let cfg = ExperimentConfig::from_toml_str(
            r#"
            [network]
            n = 128
            d = 64
            [input]
            kind = "block"
            spec_seed = 3
            [input.params]
            d = 64
            m = 8
            q = 2
            level_half_width = 0.5
            shift_max = 0.5
            equicorr_max = 0.5
            rank1_max = 0.3
            sd_lo = 0.5
            sd_hi = 1.5
            "#,
        )
        .unwrap();
        assert_eq!(input_dim(&cfg.input), 64);
        assert!(cfg.build_model().is_ok());
    }
}
