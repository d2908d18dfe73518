use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod args;
mod commands;
mod config;
mod error;

use args::{Cli, Command};
use config::RunConfig;
use error::{CliError, Result};

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let run = RunConfig::load(cli.run_config.as_deref())?;
    match &cli.command {
        Command::Dilate(a) => commands::dilate_cmd(a),
        Command::Graph(a) => commands::graph_cmd(a, &run),
        Command::Loss(a) => commands::loss_cmd(a, &run),
        Command::Metrics(a) => commands::metrics_cmd(a, &run),
        Command::TrainToy(a) => commands::train_cmd(a, &run),
        Command::Synth(a) => commands::synth_cmd(a, &run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{}", e.render());
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("partseg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
