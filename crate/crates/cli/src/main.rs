mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::{Cli, Command};
use commands::Failure;
use output::OutDir;

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage(wconv_core::Error::Parameter("--threads must be >= 1".into())));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Domain(wconv_core::Error::Config(e.to_string())))?;
    }
    let mut cfg = commands::base_config(cli)?;
    let out = OutDir::create(&cli.out_dir)?;
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::GenData(a) => commands::gen_data(&mut cfg, a, &out),
        Command::Train(a) => commands::train(&mut cfg, a, &out),
        Command::OptimizeDensity(a) => commands::optimize(&mut cfg, a, &out),
        Command::Sweep(a) => commands::sweep(&mut cfg, a, &out),
        Command::CompareDensities(a) => commands::compare(&mut cfg, a, &out),
        Command::Bench(a) => commands::bench(a, &out, seed),
        Command::Verify => commands::verify(&out, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            let mut cmd = Cli::command();
            cmd.build();
            let usage = match cmd.find_subcommand_mut(cli.command.name()) {
                Some(sub) => sub.render_usage(),
                None => cmd.render_usage(),
            };
            eprintln!("\n{usage}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
