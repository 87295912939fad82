use clap::Parser;

use rootcensus::cli::{self, Cli, Command};

fn main() {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{err}");
                    std::process::exit(0);
                }
                _ => {
                    eprint!("{err}");
                    std::process::exit(cli::EXIT_USAGE);
                }
            }
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be positive");
            std::process::exit(cli::EXIT_USAGE);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let code = match &cli.command {
        Command::Estimate(args) => cli::cmd_estimate(args),
        Command::Trace(args) => cli::cmd_trace(args),
        Command::Simulate(args) => cli::cmd_simulate(args),
    };
    std::process::exit(code);
}
