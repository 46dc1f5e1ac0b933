use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use obspart::maximize::{Rounding, Solver, SolverConfig};
use obspart::measures::{Metric, MetricKind, DEFAULT_LOGDET_EPSILON, DEFAULT_RANK_REL_TOL};
use obspart::placement::ObjectiveMode;
use obspart::sysmodel::Horizon;

#[derive(Debug, Parser)]
#[command(name = "obspart", version, about = "Observability-driven system partitioning and sensor placement")]
pub struct Cli {
    /// Worker threads; 0 uses all cores. Results do not depend on this value.
    #[arg(long, global = true, env = "OBSPART_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Report destination; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Also write the plottable series of the command as CSV to this path.
    #[arg(long, global = true)]
    pub emit_csv: Option<PathBuf>,

    /// Include wall-clock timings in the report (makes reports non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summarize a system file.
    Sysinfo(SysinfoArgs),
    /// Observability Gramian of a sensor selection and its metric values.
    Gramian(GramianArgs),
    /// Partition the measurable states into subsystems.
    Partition(PartitionArgs),
    /// Place sensors under per-subsystem budgets.
    Place(PlaceArgs),
    /// Partition the interaction graph by spectral clustering.
    BaselineSpectral(SpectralArgs),
    /// Modularity of a partition of the interaction graph.
    Modularity(ModularityArgs),
    /// Score a sensor set by Monte Carlo Kalman filtering.
    VerifyKf(VerifyKfArgs),
    /// Exhaustive baselines for small instances.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Run partitioning and the spectral baseline over a range of subsystem counts.
    SweepKappa(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Best partition by enumeration.
    Partition(PartitionArgs),
    /// Best sensor placement by enumeration.
    Place(PlaceArgs),
    /// Exhaustive submodularity and monotonicity check.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// System JSON file.
    #[arg(long)]
    pub system: PathBuf,

    /// Gramian horizon in steps, or `infinite`.
    #[arg(long, default_value = "1000")]
    pub horizon: Horizon,
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    #[arg(long, default_value = "logdet")]
    pub metric: MetricKind,

    /// Regularization added to the Gramian before taking the log-determinant.
    #[arg(long, default_value_t = DEFAULT_LOGDET_EPSILON)]
    pub epsilon: f64,

    /// Eigenvalues below this fraction of the largest one count as zero for rank.
    #[arg(long, default_value_t = DEFAULT_RANK_REL_TOL)]
    pub rank_tol: f64,
}

impl MetricArgs {
    pub fn metric(&self) -> obspart::Result<Metric> {
        Metric::new(self.metric, self.epsilon, self.rank_tol)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value = "greedy")]
    pub solver: Solver,

    /// Continuous-greedy step count.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,

    /// Monte Carlo samples per estimate.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "pipage")]
    pub rounding: Rounding,

    /// Lazy (priority-queue) greedy.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub lazy: bool,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            steps: self.steps,
            samples: self.samples,
            seed: self.seed,
            rounding: self.rounding,
            lazy: self.lazy,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SysinfoArgs {
    #[arg(long)]
    pub system: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GramianArgs {
    #[command(flatten)]
    pub system: SystemArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    /// Sensor indices (rows of C); all outputs when omitted.
    #[arg(long, value_delimiter = ',')]
    pub select: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Args)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub system: SystemArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Number of subsystems.
    #[arg(long)]
    pub kappa: usize,

    /// Also write the partition as `{"blocks": ...}` to this path.
    #[arg(long)]
    pub partition_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("budget").required(true).args(["sensors", "budgets"])))]
pub struct PlaceArgs {
    #[command(flatten)]
    pub system: SystemArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    /// Partition file `{"blocks": [[indices]]}`; a single subsystem when omitted.
    #[arg(long)]
    pub partition: Option<PathBuf>,

    /// Total sensor count, split across subsystems in proportion to their size.
    #[arg(long, conflicts_with = "budgets")]
    pub sensors: Option<usize>,

    /// Explicit per-subsystem budgets, e.g. `2,1,0`.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,

    #[arg(long, default_value = "global")]
    pub mode: ObjectiveMode,
}

#[derive(Debug, Clone, Args)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub system: SystemArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    #[arg(long)]
    pub kappa: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Also write the partition as `{"blocks": ...}` to this path.
    #[arg(long)]
    pub partition_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModularityArgs {
    #[arg(long)]
    pub system: PathBuf,

    /// Partition file; a single block when omitted.
    #[arg(long)]
    pub partition: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(group(ArgGroup::new("sensor_source").required(true).args(["sensors_file", "select"])))]
pub struct VerifyKfArgs {
    #[arg(long)]
    pub system: PathBuf,

    /// JSON file holding the sensor set: a list of indices, or any object with a
    /// `selected` list such as a `place` report.
    #[arg(long)]
    pub sensors_file: Option<PathBuf>,

    /// Sensor indices given inline.
    #[arg(long, value_delimiter = ',')]
    pub select: Option<Vec<usize>>,

    #[arg(long, default_value_t = 50)]
    pub trials: usize,

    /// Simulation length in steps.
    #[arg(long, default_value_t = 1000)]
    pub horizon: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 1e-4)]
    pub process_noise: f64,

    #[arg(long, default_value_t = 1e-4)]
    pub measurement_noise: f64,

    #[arg(long, default_value_t = 1e-1)]
    pub initial_covariance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckObjective {
    /// The sensor-set function over the outputs.
    Plain,
    /// The partitioning objective over the extended ground set.
    Extended,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub system: SystemArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    #[arg(long, value_enum, default_value_t = CheckObjective::Plain)]
    pub objective: CheckObjective,

    /// Subsystem count for the extended objective.
    #[arg(long, default_value_t = 2)]
    pub kappa: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub system: SystemArgs,

    #[command(flatten)]
    pub metric: MetricArgs,

    #[command(flatten)]
    pub solver: SolverArgs,

    #[arg(long)]
    pub from: usize,

    #[arg(long)]
    pub to: usize,

    /// Also place this many sensors on each partition, global objective.
    #[arg(long)]
    pub sensors: Option<usize>,
}
