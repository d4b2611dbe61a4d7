use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cobra_core::backend::ReasoningMode;
use cobra_core::contagion::Preset;
use cobra_core::metrics::Direction;
use cobra_core::report::ControlPoint;

#[derive(Debug, Parser)]
#[command(name = "cobra", version, about = "Measure and regulate cognitive bias in language-model agents")]
pub struct Cli {
    /// Directory holding run records.
    #[arg(long, global = true, default_value = "runs")]
    pub runs_dir: PathBuf,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure CBI on one or more paradigms, optionally under a control.
    Measure {
        #[command(flatten)]
        common: Common,
        /// Control as `method:coefficient`, e.g. `pn:0.6` or `linear:-0.4`.
        #[arg(long)]
        control: Option<ControlPoint>,
    },
    /// Sweep control coefficients and score the resulting curves.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Coefficient grid `start:stop:step`, inclusive.
        #[arg(long, default_value = "0:1:0.125")]
        grid: String,
        #[arg(long, value_enum, default_value_t = DirectionArg::Increasing)]
        direction: DirectionArg,
        /// Cross-paradigm transfer pair `source:target` (repeatable).
        #[arg(long = "transfer")]
        transfers: Vec<String>,
    },
    /// Search the coefficient that reaches a target CBI.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Target CBI (repeatable).
        #[arg(long = "target", required = true)]
        targets: Vec<f64>,
        #[arg(long = "tol", default_value_t = 0.05)]
        tolerance: f64,
        /// Maximum measurements per search.
        #[arg(long, default_value_t = 20)]
        budget: usize,
        /// Also measure the calibrated coefficient on this paradigm.
        #[arg(long)]
        transfer: Option<String>,
    },
    /// Show a stored run and export its tables and figures.
    Eval {
        /// Run id (or path to a run directory or summary file).
        #[arg(long)]
        run: String,
        /// Table to print as CSV: metrics, curves, calibrations, dose_response,
        /// measurements, transfers or gaps.
        #[arg(long)]
        export: Option<String>,
        /// Write the exported table here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Render SVG figures into this directory.
        #[arg(long)]
        plots: Option<PathBuf>,
        /// Re-run the stored config as a new run.
        #[arg(long)]
        rerun: bool,
    },
    /// Emotional-contagion dose-response experiment.
    Contagion {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        /// JSON-lines post corpus (id, text, valence); bundled corpus if omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Execute an experiment described by a JSON config.
    Run {
        config: PathBuf,
    },
    /// Testbed document tools.
    Testbed {
        #[command(subcommand)]
        command: TestbedCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum TestbedCommand {
    /// Check a testbed document and list its paradigms.
    Validate { file: PathBuf },
    /// List the bundled paradigms.
    List,
}

#[derive(Debug, Args)]
pub struct BackendArgs {
    /// Backend: `mock`, `api`, `sidecar`, an http(s) base URL, or a JSON file
    /// with a full backend config (repeatable).
    #[arg(long = "backend", default_value = "mock")]
    pub backends: Vec<String>,
    /// Model name for API and sidecar backends.
    #[arg(long)]
    pub model: Option<String>,
    /// Temperature (repeatable to sweep a set).
    #[arg(long = "temperature")]
    pub temperatures: Vec<f64>,
    #[arg(long = "reasoning", value_enum)]
    pub reasoning: Vec<ReasoningArg>,
    /// Samples per question when exact probabilities are unavailable.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Read label probabilities from API logprobs.
    #[arg(long)]
    pub logprobs: bool,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    /// Control method (repeatable): pn, linear, projection, task_vector.
    #[arg(long = "method")]
    pub methods: Vec<String>,
    /// Coefficient range `min:max` for steering methods.
    #[arg(long)]
    pub lambda_range: Option<String>,
    #[arg(long)]
    pub vector_id: Option<String>,
    #[arg(long)]
    pub task_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct Common {
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Paradigm id (repeatable).
    #[arg(long = "paradigm", required = true)]
    pub paradigms: Vec<String>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Extra testbed document (repeatable).
    #[arg(long = "testbed")]
    pub testbeds: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Soft-NDCG temperature.
    #[arg(long, default_value_t = cobra_core::metrics::DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    Increasing,
    Decreasing,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Increasing => Direction::Increasing,
            DirectionArg::Decreasing => Direction::Decreasing,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReasoningArg {
    Direct,
    Reasoning,
}

impl From<ReasoningArg> for ReasoningMode {
    fn from(r: ReasoningArg) -> Self {
        match r {
            ReasoningArg::Direct => ReasoningMode::Direct,
            ReasoningArg::Reasoning => ReasoningMode::Reasoning,
        }
    }
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse()
}
