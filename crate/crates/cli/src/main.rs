//! `gelab` — experiment harness for two-layer teacher–student learning
//! dynamics on structured low-dimensional data.
//!
//! Exit codes: 0 success (including "diverged" verdicts — those are
//! findings), 2 configuration/parameter errors, 3 numerical divergence in a
//! context where it is a failure, 4 I/O errors.

use std::path::PathBuf;
use std::process;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use gelab::{Error, Result};
use gelab_cli::config::{template_toml, ExperimentConfig, Profile};
use gelab_cli::experiment::{
    cmd_diag_corr, cmd_diag_scaling, cmd_diag_w1, cmd_ode, cmd_sgd, cmd_sweep_alpha, cmd_sweep_m,
    cmd_sweep_q, guard_overwrite, ScalingSweepSpec,
};
use gelab_cli::plots::FigureTag;
use gelab_cli::report::{cmd_compare, cmd_compare_direct};

#[derive(Parser)]
#[command(
    name = "gelab",
    version,
    about = "SGD vs order-parameter-ODE laboratory for structured-input learning dynamics"
)]
struct Cli {
    /// Worker threads for seed-parallel runs and sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every config-driven subcommand.
#[derive(Args)]
struct ConfigOpts {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's SGD seed list (comma-separated).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Replace existing artifacts instead of refusing to clobber them.
    #[arg(long)]
    overwrite: bool,
}

impl ConfigOpts {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds.sgd = seeds.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured SGD seeds; write per-seed and averaged trajectories.
    Sgd(ConfigOpts),
    /// Integrate the order-parameter ODE from the configured network.
    Ode(ConfigOpts),
    /// Judge SGD-vs-ODE tracking at τ against the Gaussian-input baseline,
    /// or compare two existing trajectory CSVs directly.
    Compare {
        /// Experiment config (config mode).
        #[arg(long, conflicts_with = "sgd_csv")]
        config: Option<PathBuf>,
        /// Override the config's output directory (also used for the direct
        /// mode's report).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's SGD seed list (comma-separated).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Also emit a dynamics figure bundle (fig3 | fig4 | fig5).
        #[arg(long)]
        figure: Option<String>,
        /// Direct mode: recorded SGD trajectory CSV.
        #[arg(long, requires = "ode_csv", requires = "tau_time")]
        sgd_csv: Option<PathBuf>,
        /// Direct mode: recorded ODE trajectory CSV.
        #[arg(long)]
        ode_csv: Option<PathBuf>,
        /// Direct mode: evaluation time (normalized).
        #[arg(long)]
        tau_time: Option<f64>,
        /// Direct mode: baseline mean (default 0 — only exact matches pass).
        #[arg(long, default_value_t = 0.0)]
        e_base: f64,
        /// Direct mode: baseline standard deviation.
        #[arg(long, default_value_t = 0.0)]
        sigma_base: f64,
        #[arg(long)]
        overwrite: bool,
    },
    /// Distributional and covariance diagnostics.
    #[command(subcommand)]
    Diag(DiagCommand),
    /// Dynamic-error sweeps over one input-law knob.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Print (or write) a fully commented experiment-config template.
    GenConfig {
        /// Template scale: `full` (N=4096) or `desk` (N=1024).
        #[arg(long, default_value = "full")]
        profile: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        overwrite: bool,
    },
}

/// Flags shared by the block-statistic scaling diagnostics.
#[derive(Args)]
struct ScalingOpts {
    /// Output directory for the per-D CSVs.
    #[arg(long)]
    out: PathBuf,
    /// Latent dimensions, one curve per value (defaults per diagnostic).
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    /// Samples per point (defaults per diagnostic).
    #[arg(long)]
    p: Option<usize>,
    /// Master seed for network, block specs, and sample streams.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    overwrite: bool,
}

impl ScalingOpts {
    fn spec(&self, mut spec: ScalingSweepSpec) -> ScalingSweepSpec {
        if let Some(d) = &self.d {
            spec.d_list = d.clone();
        }
        if let Some(p) = self.p {
            spec.p = p;
        }
        spec
    }
}

#[derive(Subcommand)]
enum DiagCommand {
    /// Closed-form W1 distances of standardized spread mixtures to the
    /// standard normal over a (q, α) grid.
    W1 {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 8, 16])]
        q: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.5, 1.0, 2.0, 5.0])]
        alpha: Vec<f64>,
        /// Seed of the per-q component draws (coupled across α).
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        overwrite: bool,
    },
    /// Summed-third-moment scaling vs m/D on the idealized square design.
    ThirdMoment(ScalingOpts),
    /// KS-distance scaling vs m/D.
    KsScaling(ScalingOpts),
    /// Covariance-consistency residual scaling vs m/D.
    Residuals(ScalingOpts),
    /// Covariance mismatch of the configured ensemble against Gaussian
    /// latents on the same network.
    Corr {
        #[command(flatten)]
        cfg: ConfigOpts,
        /// Samples per ensemble.
        #[arg(long, default_value_t = 10_000)]
        p: usize,
        /// Seed of the two sample streams.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Block-size sweep of e_{ε_g}(τ); needs a block-mixture input law.
    M {
        #[command(flatten)]
        cfg: ConfigOpts,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4, 8, 16, 32, 64])]
        m: Vec<usize>,
    },
    /// Mean-spread sweep of e_{ε_g}(τ); needs a dimension-wise mixture law.
    Alpha {
        #[command(flatten)]
        cfg: ConfigOpts,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.1, 1.0])]
        alpha: Vec<f64>,
    },
    /// Component-count sweep of e_{ε_g}(τ); needs a dimension-wise mixture law.
    Q {
        #[command(flatten)]
        cfg: ConfigOpts,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 8, 16])]
        q: Vec<usize>,
    },
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Sgd(opts) => {
            let cfg = opts.load()?;
            print_paths(&cmd_sgd(&cfg, opts.overwrite)?);
        }
        Command::Ode(opts) => {
            let cfg = opts.load()?;
            print_paths(&cmd_ode(&cfg, opts.overwrite)?);
        }
        Command::Compare {
            config,
            out,
            seeds,
            figure,
            sgd_csv,
            ode_csv,
            tau_time,
            e_base,
            sigma_base,
            overwrite,
        } => {
            let figure = figure.map(|f| FigureTag::from_str(&f)).transpose()?;
            let report = match (config, sgd_csv) {
                (Some(config), None) => {
                    let opts = ConfigOpts {
                        config,
                        out,
                        seeds,
                        overwrite,
                    };
                    let cfg = opts.load()?;
                    let (report, paths) = cmd_compare(&cfg, figure, overwrite)?;
                    print_paths(&paths);
                    report
                }
                (None, Some(sgd_csv)) => {
                    let ode_csv = ode_csv.expect("clap enforces --ode-csv");
                    let tau_time = tau_time.expect("clap enforces --tau-time");
                    cmd_compare_direct(
                        &sgd_csv,
                        &ode_csv,
                        tau_time,
                        e_base,
                        sigma_base,
                        out.as_deref(),
                        overwrite,
                    )?
                }
                _ => {
                    return Err(Error::Parameter(
                        "compare needs either --config or --sgd-csv/--ode-csv/--tau-time".into(),
                    ))
                }
            };
            println!(
                "verdict: {} (eps_g error at tau = {}, threshold = e_base + sigma_base = {} + {})",
                report.verdict,
                report.errors_at_tau["eps_g"],
                report.e_base,
                report.sigma_base
            );
        }
        Command::Diag(diag) => match diag {
            DiagCommand::W1 {
                out,
                q,
                alpha,
                seed,
                overwrite,
            } => {
                print_paths(&cmd_diag_w1(&out, &q, &alpha, seed, overwrite)?);
            }
            DiagCommand::ThirdMoment(opts) => {
                let spec = opts.spec(ScalingSweepSpec::third_moment_default(opts.seed));
                print_paths(&cmd_diag_scaling(&opts.out, &spec, FigureTag::Fig6, opts.overwrite)?);
            }
            DiagCommand::KsScaling(opts) => {
                let spec = opts.spec(ScalingSweepSpec::ks_default(opts.seed));
                print_paths(&cmd_diag_scaling(&opts.out, &spec, FigureTag::Fig7, opts.overwrite)?);
            }
            DiagCommand::Residuals(opts) => {
                let spec = opts.spec(ScalingSweepSpec::residual_default(opts.seed));
                print_paths(&cmd_diag_scaling(&opts.out, &spec, FigureTag::Fig8, opts.overwrite)?);
            }
            DiagCommand::Corr { cfg, p, seed } => {
                let overwrite = cfg.overwrite;
                let cfg = cfg.load()?;
                print_paths(&cmd_diag_corr(&cfg, p, seed, overwrite)?);
            }
        },
        Command::Sweep(sweep) => match sweep {
            SweepCommand::M { cfg, m } => {
                let overwrite = cfg.overwrite;
                let cfg = cfg.load()?;
                print_paths(&cmd_sweep_m(&cfg, &m, overwrite)?);
            }
            SweepCommand::Alpha { cfg, alpha } => {
                let overwrite = cfg.overwrite;
                let cfg = cfg.load()?;
                print_paths(&cmd_sweep_alpha(&cfg, &alpha, overwrite)?);
            }
            SweepCommand::Q { cfg, q } => {
                let overwrite = cfg.overwrite;
                let cfg = cfg.load()?;
                print_paths(&cmd_sweep_q(&cfg, &q, overwrite)?);
            }
        },
        Command::GenConfig {
            profile,
            out,
            overwrite,
        } => {
            let text = template_toml(Profile::from_name(&profile)?);
            match out {
                Some(path) => {
                    guard_overwrite(&path, overwrite)?;
                    if let Some(parent) = path.parent() {
                        if !parent.as_os_str().is_empty() {
                            std::fs::create_dir_all(parent)?;
                        }
                    }
                    std::fs::write(&path, text)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            process::exit(2);
        }
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        process::exit(e.exit_code());
    }
}
