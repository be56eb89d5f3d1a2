use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use evograph_cli::{cmd_run, cmd_scenario, cmd_validate, ConfigArgs, PromptApprover};

#[derive(Parser)]
#[command(name = "evograph", version, about = "Evolve synthetic software estates under a safety gate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigOpts {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Overrides engine.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// `key.path=value`, repeatable; the value is read as a TOML scalar.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl From<ConfigOpts> for ConfigArgs {
    fn from(o: ConfigOpts) -> Self {
        ConfigArgs { config: o.config, seed: o.seed, overrides: o.overrides }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the engine and write metrics.csv, events.jsonl, archive.json.
    Run {
        #[command(flatten)]
        opts: ConfigOpts,
        /// Output directory (default: output.dir from the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ask on the terminal before each rollout that needs approval.
        #[arg(long)]
        approve: bool,
    },
    /// Run a canned experiment: adaptation, ablation-wm, ablation-cp,
    /// ablation-novelty, bandit-convergence.
    Scenario {
        name: String,
        /// Comma-separated seeds instead of the scenario's defaults.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Parse and validate a config, then print the effective configuration.
    Validate {
        #[command(flatten)]
        opts: ConfigOpts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    let mut stderr = io::stderr();
    let code = match cli.command {
        Command::Run { opts, out, approve } => {
            let args = ConfigArgs::from(opts);
            if approve {
                let mut prompt = PromptApprover::new(io::stdin().lock(), io::stderr());
                cmd_run(&args, out.as_deref(), Some(&mut prompt), &mut stdout, &mut stderr)
            } else {
                cmd_run(&args, out.as_deref(), None, &mut stdout, &mut stderr)
            }
        }
        Command::Scenario { name, seeds } => cmd_scenario(&name, seeds, &mut stdout, &mut stderr),
        Command::Validate { opts } => cmd_validate(&ConfigArgs::from(opts), &mut stdout, &mut stderr),
    };
    ExitCode::from(code as u8)
}
