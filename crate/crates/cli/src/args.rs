use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vmet::ReorderMethod;

#[derive(Parser, Debug)]
#[command(name = "vmet", version, about = "MVN probabilities and truncated-normal sampling with Vecchia-approximated exponential tilting")]
pub struct Cli {
    /// Worker threads for the Monte Carlo stage (results do not depend on it).
    #[arg(long, global = true, env = "VMET_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate P(a ≤ X ≤ b) for X ~ N(0, Σ); prints JSON.
    Mvnprob(MvnprobArgs),
    /// Draw from a truncated MVN (or the censored posterior with --data); CSV samples plus JSON summary.
    Tmvn(TmvnArgs),
    /// Censored-GP likelihood, fitting and prediction.
    #[command(subcommand)]
    Censored(CensoredCommand),
    /// Replicate sweeps emitting long-format CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BuiltinScenario {
    /// Grid, a = −∞, b = 0.
    #[value(name = "1")]
    One,
    /// Latin hypercube, a = −∞, b ~ U(−2, 0).
    #[value(name = "2")]
    Two,
    /// Grid, a = −1, b = 1.
    #[value(name = "3")]
    Three,
    /// Exchangeable correlation --rho (orthant probability 1/(n+1) at ρ = 0.5, b = 0).
    ConstCorr,
}

/// Where Σ and the limits come from.
#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long, value_enum, conflicts_with_all = ["identity", "locations", "covariance"])]
    pub scenario: Option<BuiltinScenario>,

    /// Σ = I.
    #[arg(long, conflicts_with_all = ["locations", "covariance"])]
    pub identity: bool,

    /// Location CSV (one row per point, optional header); Σ from --kernel.
    #[arg(long, conflicts_with = "covariance")]
    pub locations: Option<PathBuf>,

    /// Dense covariance CSV (n rows × n columns).
    #[arg(long)]
    pub covariance: Option<PathBuf>,

    /// Dimension for --scenario and --identity.
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,

    #[command(flatten)]
    pub kernel: KernelArgs,

    /// Lower limit: a number (−inf allowed) applied to every coordinate, or a CSV/text file with n values.
    #[arg(long, allow_hyphen_values = true)]
    pub lower: Option<String>,

    /// Upper limit, as for --lower.
    #[arg(long, allow_hyphen_values = true)]
    pub upper: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct KernelArgs {
    #[arg(long, default_value = "matern15")]
    pub kernel: String,

    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,

    /// Range; repeat once per range group with --range-groups.
    #[arg(long, num_args = 1, default_values_t = [0.1])]
    pub range: Vec<f64>,

    /// Range group of each coordinate, e.g. 0,0,1.
    #[arg(long, value_delimiter = ',')]
    pub range_groups: Option<Vec<usize>>,

    /// Defaults to the scenario nugget for builtin scenarios and 0 otherwise.
    #[arg(long)]
    pub nugget: Option<f64>,

    /// euclidean, or chordal for (longitude, latitude, ...) in degrees.
    #[arg(long, default_value = "euclidean")]
    pub metric: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbOracle {
    /// Dense Cholesky separation of variables (no Vecchia, no tilting).
    Sov,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SampleOracle {
    /// Dense naive rejection sampler.
    Rejection,
}

#[derive(Args, Debug, Clone)]
pub struct MethodArgs {
    /// Conditioning-set size.
    #[arg(long, default_value_t = 30)]
    pub m: usize,

    #[arg(long, default_value = "vecchia", value_parser = parse_reorder)]
    pub reorder: ReorderMethod,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Skip the saddle-point solve (plain separation of variables).
    #[arg(long)]
    pub no_tilt: bool,
}

#[derive(Args, Debug)]
pub struct MvnprobArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[command(flatten)]
    pub method: MethodArgs,

    /// Monte Carlo sample size.
    #[arg(long = "N", default_value_t = 10_000)]
    pub n_samples: usize,

    /// Randomized Sobol points instead of pseudo-random ones.
    #[arg(long)]
    pub qmc: bool,

    #[arg(long, default_value_t = 10)]
    pub qmc_shifts: usize,

    /// Second (larger) conditioning size for the two-level estimator.
    #[arg(long)]
    pub m2: Option<usize>,

    /// Paired sample size for the two-level correction.
    #[arg(long = "N2", requires = "m2")]
    pub n2: Option<usize>,

    #[arg(long, value_enum)]
    pub oracle: Option<ProbOracle>,
}

#[derive(Args, Debug)]
pub struct TmvnArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[command(flatten)]
    pub method: MethodArgs,

    /// Censored dataset CSV; draws the censored values given the observed ones.
    #[arg(long, conflicts_with_all = ["scenario", "identity", "covariance", "oracle"])]
    pub data: Option<PathBuf>,

    /// Region of interest lo1,..,lod,hi1,..,hid (with --data).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "data")]
    pub region: Option<Vec<f64>>,

    /// Region growth in coordinate units (default 20% of each side).
    #[arg(long, requires = "region")]
    pub buffer: Option<f64>,

    /// Accepted draws wanted.
    #[arg(long, default_value_t = 1000)]
    pub k: usize,

    #[arg(long, default_value_t = 10_000_000)]
    pub max_attempts: usize,

    /// Samples CSV path; without it samples go to stdout and the summary to stderr.
    #[arg(long)]
    pub output: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub oracle: Option<SampleOracle>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodArg {
    Censored,
    Lod,
}

impl From<LikelihoodArg> for vmet::censored::Likelihood {
    fn from(l: LikelihoodArg) -> Self {
        match l {
            LikelihoodArg::Censored => vmet::censored::Likelihood::Censored,
            LikelihoodArg::Lod => vmet::censored::Likelihood::Lod,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset CSV: x1..xd, value (empty = censored), threshold.
    #[arg(long)]
    pub data: PathBuf,

    #[command(flatten)]
    pub kernel: KernelArgs,

    #[arg(long, default_value_t = 30)]
    pub m: usize,

    #[arg(long = "N", default_value_t = 10_000)]
    pub n_samples: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value = "censored")]
    pub likelihood: LikelihoodArg,
}

#[derive(Subcommand, Debug)]
pub enum CensoredCommand {
    /// Log-likelihood at the given parameters, or a range profile with --profile.
    Loglik {
        #[command(flatten)]
        data: DataArgs,

        /// Range values for a profile of range group --group.
        #[arg(long, value_delimiter = ',')]
        profile: Option<Vec<f64>>,

        #[arg(long, default_value_t = 0)]
        group: usize,
    },
    /// Nelder–Mead fit of variance, ranges and nugget.
    Fit {
        #[command(flatten)]
        data: DataArgs,

        /// Lower bounds variance,range1,..,nugget (equal bounds fix a parameter).
        #[arg(long, value_delimiter = ',')]
        lower_bounds: Option<Vec<f64>>,

        #[arg(long, value_delimiter = ',')]
        upper_bounds: Option<Vec<f64>>,

        #[arg(long, default_value_t = 400)]
        max_evals: usize,

        /// CSV of the best log-likelihood per simplex iteration.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Kriging from imputed draws (and the LOD baseline) on a grid or test locations; CSV.
    Predict {
        #[command(flatten)]
        data: DataArgs,

        /// Region lo1,..,lod,hi1,..,hid to impute over; all censored values when absent.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        region: Option<Vec<f64>>,

        #[arg(long, requires = "region")]
        buffer: Option<f64>,

        /// Prediction locations CSV.
        #[arg(long, conflicts_with = "grid")]
        test: Option<PathBuf>,

        /// Points per side of a regular grid over --region (2-D).
        #[arg(long, requires = "region")]
        grid: Option<usize>,

        #[arg(long, default_value_t = 1000)]
        k: usize,

        #[arg(long, default_value_t = 100_000_000)]
        max_attempts: usize,

        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    /// Exchangeable ρ = 0.5 orthant, m over --ms, error against 1/(n+1).
    ConstCorr,
    /// Scenario 1 at each --ns, timing of the whole estimate.
    Scaling,
    /// One small run.
    Smoke,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "smoke")]
    pub sweep: Sweep,

    #[arg(long, default_value_t = 5)]
    pub replicates: usize,

    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 30, 50, 70, 90])]
    pub ms: Vec<usize>,

    #[arg(long, value_delimiter = ',', default_values_t = [400usize, 1600, 6400])]
    pub ns: Vec<usize>,

    /// Dimension for the const-corr sweep.
    #[arg(long, default_value_t = 900)]
    pub n: usize,

    #[arg(long, default_value_t = 30)]
    pub m: usize,

    #[arg(long = "N", default_value_t = 10_000)]
    pub n_samples: usize,

    #[arg(long, default_value = "vecchia", value_parser = parse_reorder)]
    pub reorder: ReorderMethod,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_reorder(s: &str) -> Result<ReorderMethod, String> {
    s.parse().map_err(|e: vmet::Error| e.to_string())
}
