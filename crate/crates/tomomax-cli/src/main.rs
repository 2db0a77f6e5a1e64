//! `tomomax`: minimax estimators and exact risk evaluation for two-level
//! tomography, from the command line.
//!
//! Subcommands: `compute-lfp`, `estimator-grid`, `risk-profile`,
//! `bounds-table`, `compare`, and `noisy-coin {lfp, scaling, bimodal-risk}`.
//! Flag values take precedence over the optional `--config` JSON file, which
//! takes precedence over built-in defaults. `TOMOMAX_THREADS` bounds the
//! worker pool when `--threads` is not given.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use commands::{
    cmd_bounds_table, cmd_coin_bimodal, cmd_coin_lfp, cmd_coin_scaling, cmd_compare,
    cmd_compute_lfp, cmd_estimator_grid, cmd_risk_profile, BoundsTableOpts, CoinBimodalOpts,
    CoinLfpOpts, CoinScalingOpts, CompareOpts, ComputeLfpOpts, EstimatorGridOpts, EstimatorSpec,
    RiskProfileOpts,
};
use tomomax::lfp::LfpConfig;
use tomomax::model::SearchConfig;
use tomomax::noisycoin::CoinLfpConfig;
use tomomax::qstate::Kind;

/// Failure modes with dedicated exit codes: 2 for configuration errors,
/// 3 for non-convergence (artifacts are still written), 1 otherwise.
pub enum Failure {
    Config(String),
    NonConvergence(String),
    Other(anyhow::Error),
}

#[derive(Parser)]
#[command(
    name = "tomomax",
    version,
    about = "Minimax estimators, exact risk evaluation, and least-favorable-prior solvers for rebit/qubit Pauli tomography"
)]
struct Cli {
    /// Worker threads (overrides TOMOMAX_THREADS; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file supplying defaults for omitted numeric flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Rebit,
    Qubit,
}

impl From<KindArg> for Kind {
    fn from(k: KindArg) -> Kind {
        match k {
            KindArg::Rebit => Kind::Rebit,
            KindArg::Qubit => Kind::Qubit,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgArg {
    Kempthorne,
    Mc,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for a least favorable prior and its minimax estimator.
    ComputeLfp(ComputeLfpArgs),
    /// Draw a rebit estimator as a distortion of the linear-inversion grid.
    EstimatorGrid(EstimatorGridArgs),
    /// Pointwise risk along a ray, for one or more estimators.
    RiskProfile(RiskProfileArgs),
    /// Analytic lower-bound table over a list of sample counts.
    BoundsTable(BoundsTableArgs),
    /// Maximum risk per estimator per sample count.
    Compare(CompareArgs),
    /// Classical noisy-coin operations.
    #[command(subcommand)]
    NoisyCoin(NoisyCoinCommand),
}

#[derive(Args)]
struct LfpFlags {
    /// Relative certificate gap for convergence.
    #[arg(long)]
    tol: Option<f64>,
    /// Prune supports below this weight (Monte Carlo).
    #[arg(long)]
    weight_tol: Option<f64>,
    /// Weight of a freshly added support (deterministic solver).
    #[arg(long)]
    mixing_alpha: Option<f64>,
    /// New samples per surviving support per expansion (Monte Carlo).
    #[arg(long)]
    m_per_point: Option<usize>,
    /// Resampling scale (default 0.5/sqrt(N)).
    #[arg(long)]
    sigma: Option<f64>,
    /// Initial support count (Monte Carlo).
    #[arg(long)]
    n_init: Option<usize>,
    /// Outer iteration cap.
    #[arg(long)]
    max_outer: Option<usize>,
    /// Inner weight-solver relative optimality gap.
    #[arg(long)]
    weight_rel_tol: Option<f64>,
    /// Inner weight-solver iteration cap.
    #[arg(long)]
    max_weight_iters: Option<usize>,
}

#[derive(Args)]
struct SearchFlags {
    /// Radial grid divisions for the max-risk search.
    #[arg(long)]
    radial: Option<usize>,
    /// Angular grid divisions (rebit).
    #[arg(long)]
    angular: Option<usize>,
    /// Fibonacci-sphere directions (qubit).
    #[arg(long)]
    sphere_points: Option<usize>,
    /// Grid points on [0,1] for coin models.
    #[arg(long)]
    line_points: Option<usize>,
    /// Grid maxima refined by coordinate ascent.
    #[arg(long)]
    refine_top: Option<usize>,
}

#[derive(Args)]
struct ComputeLfpArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Total number of samples N (split evenly over the Pauli bases).
    #[arg(long = "N", visible_alias = "n")]
    total_samples: u64,
    #[arg(long, value_enum)]
    alg: AlgArg,
    /// RNG seed; mandatory for the Monte Carlo solver.
    #[arg(long)]
    seed: Option<u64>,
    /// Resume from a previous run's .lfp.json checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Output prefix; writes <prefix>.lfp.json, <prefix>.estimator.json,
    /// <prefix>.summary.txt.
    #[arg(long, default_value = "lfp")]
    out_prefix: PathBuf,
    /// Embed the estimator table in the .lfp.json instead of a side file.
    #[arg(long)]
    embed_table: bool,
    #[command(flatten)]
    lfp: LfpFlags,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Args)]
struct EstimatorGridArgs {
    /// li | mle | hml:<beta> | table:<path> | lfp:<path>
    #[arg(long)]
    estimator: String,
    /// Shots per basis M for built-in estimators (rebit design).
    #[arg(long = "M", visible_alias = "m")]
    shots_per_basis: Option<u32>,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Also dump the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RiskProfileArgs {
    /// Comma-separated estimator specs.
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<String>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long = "N", visible_alias = "n")]
    total_samples: Option<u64>,
    /// Ray direction in degrees from the X axis (in the X-Y plane).
    #[arg(long, default_value_t = 45.0)]
    axis_deg: f64,
    /// Number of radii sampled on [0, 1].
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG overlay plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsTableArgs {
    /// Comma-separated sample counts (each >= 2).
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<u64>,
    /// Mean resolution for the noisy-coin column.
    #[arg(long, default_value_t = 4.0)]
    beta_bar: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated estimator specs.
    #[arg(long, value_delimiter = ',')]
    estimators: Vec<String>,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Comma-separated sample counts.
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<u64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    search: SearchFlags,
}

#[derive(Subcommand)]
enum NoisyCoinCommand {
    /// Monte Carlo LFP for a uniform-noise coin.
    Lfp(CoinLfpArgs),
    /// Minimax-certificate scaling study over a list of N.
    Scaling(CoinScalingArgs),
    /// Exact risks of the two-point prior construction.
    BimodalRisk(CoinBimodalArgs),
}

#[derive(Args)]
struct CoinLfpArgs {
    /// Per-trial error probability in [0, 1/2).
    #[arg(long)]
    alpha: f64,
    #[arg(long = "N", visible_alias = "n")]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    lfp: LfpFlags,
}

#[derive(Args)]
struct CoinScalingArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_delimiter = ',')]
    n_list: Vec<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    lfp: LfpFlags,
}

#[derive(Args)]
struct CoinBimodalArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long = "N", visible_alias = "n")]
    trials: usize,
    /// Second mode of the prior (default 1/sqrt(beta_bar N)).
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Optional defaults loaded from `--config`; any flag overrides its field.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    threads: Option<usize>,
    tol: Option<f64>,
    weight_tol: Option<f64>,
    mixing_alpha: Option<f64>,
    m_per_point: Option<usize>,
    sigma: Option<f64>,
    n_init: Option<usize>,
    max_outer: Option<usize>,
    weight_rel_tol: Option<f64>,
    max_weight_iters: Option<usize>,
    radial: Option<usize>,
    angular: Option<usize>,
    sphere_points: Option<usize>,
    line_points: Option<usize>,
    refine_top: Option<usize>,
    points: Option<usize>,
}

/// Fully resolved numeric options: flags > config file > defaults.
pub struct Resolved {
    lfp: LfpConfig,
    search: SearchConfig,
    profile_points: usize,
}

impl Resolved {
    pub fn lfp_config(&self) -> LfpConfig {
        let mut c = self.lfp.clone();
        c.search = self.search.clone();
        c
    }

    pub fn search_config(&self) -> SearchConfig {
        self.search.clone()
    }

    pub fn coin_config(&self) -> CoinLfpConfig {
        CoinLfpConfig {
            tol: self.lfp.tol,
            weight_tol: self.lfp.weight_tol,
            m_per_point: self.lfp.m_per_point,
            sigma: self.lfp.sigma,
            n_init: self.lfp.n_init,
            seed: self.lfp.seed,
            max_outer: self.lfp.max_outer,
            weight_rel_tol: self.lfp.weight_rel_tol,
            max_weight_iters: self.lfp.max_weight_iters,
        }
    }

    pub fn profile_points(&self) -> usize {
        self.profile_points
    }
}

fn resolve(
    file: &FileConfig,
    lfp_flags: Option<&LfpFlags>,
    search_flags: Option<&SearchFlags>,
    points_flag: Option<usize>,
) -> Resolved {
    let defaults = LfpConfig::default();
    let pick = |flag: Option<f64>, file_v: Option<f64>, def: f64| flag.or(file_v).unwrap_or(def);
    let pick_u =
        |flag: Option<usize>, file_v: Option<usize>, def: usize| flag.or(file_v).unwrap_or(def);

    let lfp = LfpConfig {
        tol: pick(lfp_flags.and_then(|f| f.tol), file.tol, defaults.tol),
        weight_tol: pick(
            lfp_flags.and_then(|f| f.weight_tol),
            file.weight_tol,
            defaults.weight_tol,
        ),
        mixing_alpha: lfp_flags.and_then(|f| f.mixing_alpha).or(file.mixing_alpha),
        m_per_point: pick_u(
            lfp_flags.and_then(|f| f.m_per_point),
            file.m_per_point,
            defaults.m_per_point,
        ),
        sigma: lfp_flags.and_then(|f| f.sigma).or(file.sigma),
        n_init: pick_u(lfp_flags.and_then(|f| f.n_init), file.n_init, defaults.n_init),
        seed: defaults.seed,
        max_outer: pick_u(
            lfp_flags.and_then(|f| f.max_outer),
            file.max_outer,
            defaults.max_outer,
        ),
        weight_rel_tol: pick(
            lfp_flags.and_then(|f| f.weight_rel_tol),
            file.weight_rel_tol,
            defaults.weight_rel_tol,
        ),
        max_weight_iters: pick_u(
            lfp_flags.and_then(|f| f.max_weight_iters),
            file.max_weight_iters,
            defaults.max_weight_iters,
        ),
        location_rounds: defaults.location_rounds,
        search: SearchConfig::default(),
    };
    let sd = SearchConfig::default();
    let search = SearchConfig {
        radial: pick_u(search_flags.and_then(|f| f.radial), file.radial, sd.radial),
        angular: pick_u(search_flags.and_then(|f| f.angular), file.angular, sd.angular),
        sphere_points: pick_u(
            search_flags.and_then(|f| f.sphere_points),
            file.sphere_points,
            sd.sphere_points,
        ),
        line_points: pick_u(
            search_flags.and_then(|f| f.line_points),
            file.line_points,
            sd.line_points,
        ),
        refine_top: pick_u(
            search_flags.and_then(|f| f.refine_top),
            file.refine_top,
            sd.refine_top,
        ),
        refine_rounds: sd.refine_rounds,
    };
    Resolved {
        lfp,
        search,
        profile_points: points_flag.or(file.points).unwrap_or(200),
    }
}

fn init_threads(flag: Option<usize>, file: Option<usize>) -> Result<(), Failure> {
    let from_env = std::env::var("TOMOMAX_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(threads) = flag.or(file).or(from_env) {
        if threads == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Other(anyhow::anyhow!(e)))?;
    }
    Ok(())
}

fn run() -> Result<(), Failure> {
    let cli = Cli::parse();
    let file_config: FileConfig = match &cli.config {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| {
                Failure::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            serde_json::from_slice(&bytes)
                .map_err(|e| Failure::Config(format!("bad config file: {e}")))?
        }
        None => FileConfig::default(),
    };
    init_threads(cli.threads, file_config.threads)?;

    match &cli.command {
        Command::ComputeLfp(args) => {
            let resolved = resolve(&file_config, Some(&args.lfp), Some(&args.search), None);
            cmd_compute_lfp(
                &ComputeLfpOpts {
                    kind: args.kind.into(),
                    total_samples: args.total_samples,
                    algorithm: match args.alg {
                        AlgArg::Kempthorne => "kempthorne".into(),
                        AlgArg::Mc => "mc".into(),
                    },
                    seed: args.seed,
                    resume: args.resume.clone(),
                    out_prefix: args.out_prefix.clone(),
                    embed_table: args.embed_table,
                },
                &resolved,
            )
        }
        Command::EstimatorGrid(args) => cmd_estimator_grid(&EstimatorGridOpts {
            spec: EstimatorSpec::parse(&args.estimator)?,
            shots_per_basis: args.shots_per_basis,
            out: args.out.clone(),
            csv: args.csv.clone(),
        }),
        Command::RiskProfile(args) => {
            let resolved = resolve(&file_config, None, None, args.points);
            let specs = args
                .estimators
                .iter()
                .map(|s| EstimatorSpec::parse(s))
                .collect::<Result<Vec<_>, _>>()?;
            cmd_risk_profile(&RiskProfileOpts {
                specs,
                kind: args.kind.map(Into::into),
                total_samples: args.total_samples,
                axis_degrees: args.axis_deg,
                points: resolved.profile_points(),
                out: args.out.clone(),
                svg: args.svg.clone(),
            })
        }
        Command::BoundsTable(args) => cmd_bounds_table(&BoundsTableOpts {
            n_list: args.n_list.clone(),
            beta_bar: args.beta_bar,
            out: args.out.clone(),
        }),
        Command::Compare(args) => {
            let resolved = resolve(&file_config, None, Some(&args.search), None);
            let specs = args
                .estimators
                .iter()
                .map(|s| EstimatorSpec::parse(s))
                .collect::<Result<Vec<_>, _>>()?;
            cmd_compare(&CompareOpts {
                specs,
                kind: args.kind.into(),
                n_list: args.n_list.clone(),
                out: args.out.clone(),
                search: resolved.search_config(),
            })
        }
        Command::NoisyCoin(sub) => match sub {
            NoisyCoinCommand::Lfp(args) => {
                let resolved = resolve(&file_config, Some(&args.lfp), None, None);
                cmd_coin_lfp(
                    &CoinLfpOpts {
                        alpha: args.alpha,
                        trials: args.trials,
                        seed: args.seed,
                        out: args.out.clone(),
                    },
                    &resolved,
                )
            }
            NoisyCoinCommand::Scaling(args) => {
                let resolved = resolve(&file_config, Some(&args.lfp), None, None);
                cmd_coin_scaling(
                    &CoinScalingOpts {
                        alpha: args.alpha,
                        n_list: args.n_list.clone(),
                        seed: args.seed,
                        out: args.out.clone(),
                    },
                    &resolved,
                )
            }
            NoisyCoinCommand::BimodalRisk(args) => cmd_coin_bimodal(&CoinBimodalOpts {
                alpha: args.alpha,
                trials: args.trials,
                p1: args.p1,
                out: args.out.clone(),
            }),
        },
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NonConvergence(msg)) => {
            eprintln!("not converged: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
