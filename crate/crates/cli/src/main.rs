mod args;
mod commands;
mod error;
mod problem;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, EXIT_USAGE};

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Mvnprob(a) => println!("{}", commands::mvnprob(a)?),
        Command::Tmvn(a) => {
            let (to_file, summary) = commands::tmvn(a)?;
            if to_file {
                println!("{summary}");
            } else {
                eprintln!("{summary}");
            }
        }
        Command::Censored(c) => {
            let out = commands::censored(c)?;
            // predict writes its CSV to stdout unless --output is given
            match c {
                args::CensoredCommand::Predict { output: None, .. } => eprintln!("{out}"),
                _ => println!("{out}"),
            }
        }
        Command::Bench(a) => commands::bench(a)?,
    }
    Ok(())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            e.exit();
        }
        Err(e) => {
            eprintln!("{e}");
            println!("{}", CliError::usage(e.kind().to_string()).to_json());
            std::process::exit(EXIT_USAGE);
        }
    };
    if let Err(e) = run(&cli) {
        println!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
