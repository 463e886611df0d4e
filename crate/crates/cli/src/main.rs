use clap::Parser;
use log::LevelFilter;
use nrba_cli::{logger, run, Cli};

fn main() {
    let cli = Cli::parse();
    logger::init(if cli.verbose { LevelFilter::Info } else { LevelFilter::Warn });
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            std::process::exit(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            std::process::exit(2);
        }
    }
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
