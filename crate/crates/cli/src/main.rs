mod commands;
mod config;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

/// Dynamic link prediction with supra-Laplacian encodings.
///
/// Every command takes `--key value` options (hyphens and underscores are
/// interchangeable) and `--config <file>` with `key = value` lines; flags
/// override the file. The resolved configuration is written to `<out>/config.txt`.
#[derive(Parser, Debug)]
#[command(name = "slate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dynamic graph (`--kind sbm|er`) as an edge list plus metadata.
    Generate(Options),
    /// Dump supra-graph, spectrum and projections with and without the connectivity transformation.
    Inspect(Options),
    /// Train a model and write its checkpoint and loss/validation trace.
    Train(Options),
    /// Score the test snapshots of a trained model for each negative sampling strategy.
    Eval(Options),
    /// Run a grid of encodings, edge-module flags, poolings and windows over several seeds.
    Ablate(Options),
}

#[derive(clap::Args, Debug)]
struct Options {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    args: Vec<String>,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (run, opts): (fn(&RunConfig) -> anyhow::Result<()>, &Options) = match &cli.command {
        Command::Generate(o) => (commands::generate, o),
        Command::Inspect(o) => (commands::inspect, o),
        Command::Train(o) => (commands::train, o),
        Command::Eval(o) => (commands::eval, o),
        Command::Ablate(o) => (commands::ablate, o),
    };
    let cfg = RunConfig::from_args(&opts.args)?;
    cfg.write_echo(&cfg.out_dir())?;
    run(&cfg)
}
