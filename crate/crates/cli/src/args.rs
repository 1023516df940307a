use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smp_control::stability::CertificateFamily;

#[derive(Debug, Parser)]
#[command(name = "smpctl", version, about = "Mean-square stability analysis and state-feedback synthesis for SMP systems")]
pub struct Cli {
    /// Directory for outputs and the run manifest.
    #[arg(long, global = true, env = "SMPCTL_OUT_DIR", default_value = "smpctl-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file: dimensions, symmetry and PSD vertices.
    Validate {
        model: PathBuf,
    },
    /// Certify a feedback gain at a given expanded rate.
    Certify(CertifyArgs),
    /// Design a feedback gain with the rank-one SDP iteration.
    Synthesize(SynthesizeArgs),
    /// Monte Carlo simulation of the closed loop.
    Simulate(SimulateArgs),
    /// Run the full benchmark pipeline into a directory.
    Reproduce(ReproduceArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    PerVertex,
    Identical,
}

impl From<FamilyArg> for CertificateFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::PerVertex => CertificateFamily::PerVertex,
            FamilyArg::Identical => CertificateFamily::Identical,
        }
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    pub model: PathBuf,
    /// Gain file (`{"k": [[...]]}`).
    #[arg(long)]
    pub gain: PathBuf,
    /// Expanded rate β̃ in (0, 1].
    #[arg(long, default_value_t = 0.97)]
    pub beta: f64,
    /// Required eigenvalue margin.
    #[arg(long, default_value_t = smp_control::stability::DEFAULT_CERT_ETA)]
    pub eta: f64,
    #[arg(long, value_enum, default_value = "per-vertex")]
    pub family: FamilyArg,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.97)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = 10.0)]
    pub zub: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "per-vertex")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub model: PathBuf,
    /// Gaussian family file; defaults to the law implied by the model when it has one.
    pub distribution: Option<PathBuf>,
    /// Gain file; open loop when absent.
    #[arg(long)]
    pub gain: Option<PathBuf>,
    /// Initial state, comma separated; all ones when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Horizon T.
    #[arg(short = 'T', long = "steps", default_value_t = 30)]
    pub steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `const:θ1,θ2,…`, `random:SEED`, `corners`, or a JSON schedule file.
    #[arg(long, default_value = "uniform")]
    pub theta: String,
    /// Skip the per-path state CSV.
    #[arg(long)]
    pub no_paths: bool,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    pub outdir: PathBuf,
    /// Use this model instead of the built-in benchmark.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 30)]
    pub steps: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}
