use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "evobot", version, about = "Evolve, test and diagnose neural controllers for a two-wheeled robot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command that reads a config. Precedence is
/// flags, then the config file, then built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML config file; missing sections use defaults.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Seed for worlds, evolution and trials.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluation threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub pop_size: Option<usize>,
    #[arg(long)]
    pub generations: Option<usize>,
    /// Print the effective config and exit.
    #[arg(long)]
    pub dump_config: bool,
    /// Output directory; the effective config is echoed into it.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvolveMode {
    Standard,
    Coevolution,
    Ecology,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a genotype file (one genotype per line, `#` comments).
    Parse { file: PathBuf },
    /// Standard, co-evolution or virtual-ecology run.
    Evolve {
        #[command(flatten)]
        common: Common,
        /// Overrides `evolution.mode`.
        #[arg(long, value_enum)]
        mode: Option<EvolveMode>,
        /// Resume from and keep updating this checkpoint (standard mode).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// One trial; writes the trajectory CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Controller TOML; a seeded random controller when omitted.
        #[arg(long)]
        controller: Option<PathBuf>,
        /// Start corner index (taken modulo 4).
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Failure case to inject, e.g. `LeftWheelDamage`.
        #[arg(long)]
        failure: Option<String>,
        #[arg(long)]
        severity: Option<f64>,
        #[arg(long, default_value_t = 0)]
        onset: usize,
        /// Picks the affected sensor or neuron.
        #[arg(long, default_value_t = 0)]
        failure_seed: u64,
        /// Run all `fitness.max_steps` steps even after reaching the target.
        #[arg(long)]
        full_length: bool,
    },
    /// Rank failure hypotheses against recorded traces.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Controller file per trace, or one shared by all traces.
        #[arg(long, required = true)]
        controller: Vec<PathBuf>,
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Environment matrix, fitness curves and failure distribution.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Also write long-format curve data for plotting.
        #[arg(long)]
        plot_data: bool,
    },
    /// User-guided evolution session server.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8787)]
        port: u16,
        /// Idle seconds before a session waiting for a selection is paused.
        #[arg(long, default_value_t = 600.0)]
        timeout_secs: f64,
    },
}
