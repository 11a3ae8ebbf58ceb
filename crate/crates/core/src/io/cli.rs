use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Robot-gated imitation learning laboratory.
#[derive(Debug, Parser)]
#[command(name = "dagger-lab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Each can also be set through a
/// `DAGGER_LAB_*` environment variable.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON). Defaults to the circle task with the diff method.
    #[arg(long, env = "DAGGER_LAB_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, env = "DAGGER_LAB_SEED")]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, env = "DAGGER_LAB_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record scripted expert demonstrations.
    Demos {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of demonstrations (default: the final demonstration budget).
        #[arg(long, env = "DAGGER_LAB_EPISODES")]
        episodes: Option<usize>,
    },
    /// Behavior cloning on a fixed demonstration set.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset file; when absent, fresh scripted demonstrations are used.
        #[arg(long, env = "DAGGER_LAB_DATASET")]
        dataset: Option<PathBuf>,
    },
    /// Run the interactive gated loop with scripted experts.
    Dagger {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Success rate and shadow-gate query quality of a trained policy.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, env = "DAGGER_LAB_CHECKPOINT")]
        checkpoint: Option<PathBuf>,
        #[arg(long, env = "DAGGER_LAB_EPISODES")]
        episodes: Option<usize>,
        /// Training data for the gate (default: dataset.jsonl beside the checkpoint directory).
        #[arg(long, env = "DAGGER_LAB_DATASET")]
        dataset: Option<PathBuf>,
    },
    /// Per-region uncertainty of the diffusion loss and the ensemble.
    Regions {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Wall-clock cost of training, threshold setting and inference.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Interactive session service for a human expert.
    Serve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, env = "DAGGER_LAB_PORT", default_value_t = 8765)]
        port: u16,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_shared_flags() {
        let cli = Cli::try_parse_from(["dagger-lab", "dagger", "--config", "c.json", "--seed", "7"]).unwrap();
        let Command::Dagger { common } = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(common.seed, Some(7));
        assert_eq!(common.config, Some(PathBuf::from("c.json")));
    }

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        let err = Cli::try_parse_from(["dagger-lab", "fly"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
