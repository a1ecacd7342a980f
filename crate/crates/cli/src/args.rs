use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rtcp::estimation::QuadratureMode;
use rtcp::simulation::GridKind;
use rtcp::{FitOptions, Reduction};
use serde::{Deserialize, Serialize};

/// Change-point model for log response times.
#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "rtcp", version, about)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Fit the model to a response-time matrix and write result tables.
    Fit(FitArgs),
    /// Simulate one dataset and its generating values.
    Simulate(SimulateArgs),
    /// Run a parameter-recovery study over a grid of conditions.
    Study(StudyArgs),
    /// Compare candidate boundaries by AIC, BIC and ICL.
    Select(SelectArgs),
    /// Emit plot-ready group means from a result bundle.
    Plotdata(PlotArgs),
    /// Re-execute a saved run_config.json.
    Rerun {
        /// Path to a run_config.json written by an earlier command.
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    Primary,
    Secondary,
}

impl From<Grid> for GridKind {
    fn from(g: Grid) -> Self {
        match g {
            Grid::Primary => GridKind::Primary,
            Grid::Secondary => GridKind::Secondary,
        }
    }
}

/// Optimizer and quadrature settings shared by every fitting command.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimationArgs {
    /// Quadrature nodes.
    #[arg(long = "K", default_value_t = 21)]
    pub nodes: usize,

    /// Seed for jittered multistarts and simulation streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value_t = Quadrature::Adaptive)]
    pub quadrature: Quadrature,

    /// Start only from the default initializer, not also its sign-flipped
    /// mirror.
    #[arg(long)]
    pub no_mirror_start: bool,

    /// Extra jittered starts.
    #[arg(long, default_value_t = 0)]
    pub multistart: usize,

    /// Iteration cap per optimization stage.
    #[arg(long, default_value_t = 2000)]
    pub max_iterations: usize,

    /// Score sup-norm at convergence.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,

    /// Sum respondent contributions in a fixed order (bit-reproducible).
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    pub deterministic_reduction: bool,
}

impl EstimationArgs {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.tolerance,
            quadrature_nodes: self.nodes,
            quadrature: match self.quadrature {
                Quadrature::Fixed => QuadratureMode::Fixed,
                Quadrature::Adaptive => QuadratureMode::Adaptive,
            },
            mirror_start: !self.no_mirror_start,
            multistart: self.multistart,
            seed: self.seed,
            reduction: if self.deterministic_reduction {
                Reduction::Ordered
            } else {
                Reduction::Unordered
            },
            ..FitOptions::default()
        }
    }
}

/// Input matrix location and scale.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    /// Headerless CSV, respondents in rows, items in columns.
    #[arg(long)]
    pub input: PathBuf,

    /// Values are raw times; take natural logs at ingest.
    #[arg(long)]
    pub raw_seconds: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("boundary").required(true).args(["c", "candidates"])))]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, default_value = "rtcp-out")]
    pub output_dir: PathBuf,

    /// Boundary: the earliest admissible change-point is item c + 1.
    #[arg(long)]
    pub c: Option<usize>,

    /// Choose c by ICL among these values first.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Option<Vec<usize>>,

    /// Classify as changed when P(tau < J | y) reaches this value.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,

    /// Credible sets cover at least 1 - alpha; intervals have level 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha_level: f64,

    /// Skip the likelihood-ratio tests for psi1 and psi3.
    #[arg(long)]
    pub no_lrt: bool,

    #[command(flatten)]
    pub estimation: EstimationArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long = "N")]
    pub n_respondents: usize,

    #[arg(long = "J")]
    pub n_items: usize,

    #[arg(long)]
    pub c: usize,

    /// Expected share of respondents with a change-point.
    #[arg(long)]
    pub pi: f64,

    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub psi1: f64,

    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub psi3: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Replication index within the seed's streams.
    #[arg(long, default_value_t = 0)]
    pub replication: usize,

    #[arg(long, default_value = "rtcp-out")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[command(group(ArgGroup::new("design").required(true).args(["grid", "conditions"])))]
pub struct StudyArgs {
    #[arg(long, value_enum)]
    pub grid: Option<Grid>,

    /// JSON array of conditions: {"n_respondents", "n_items", "boundary",
    /// "prevalence"} with optional "psi1" and "psi3".
    #[arg(long)]
    pub conditions: Option<PathBuf>,

    #[arg(long, default_value_t = 50)]
    pub replications: usize,

    #[arg(long, default_value = "rtcp-out")]
    pub output_dir: PathBuf,

    #[command(flatten)]
    pub estimation: EstimationArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, value_delimiter = ',', required = true)]
    pub candidates: Vec<usize>,

    #[arg(long, default_value = "rtcp-out")]
    pub output_dir: PathBuf,

    #[command(flatten)]
    pub estimation: EstimationArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PlotArgs {
    /// bundle.json written by `fit`.
    #[arg(long)]
    pub bundle: PathBuf,

    /// The data the bundle was fitted to.
    #[command(flatten)]
    pub input: InputArgs,

    #[arg(long, default_value = "rtcp-out")]
    pub output_dir: PathBuf,
}
