use besovlab::cli::{configure_threads, run, Cli, EXIT_USAGE};
use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(EXIT_USAGE);
    }
    std::process::exit(run(cli));
}
