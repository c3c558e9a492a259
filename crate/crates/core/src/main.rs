use clap::Parser;

use robust_sched::cli::{execute, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ROBUST_SCHED_LOG", "error"))
        .init();
    std::process::exit(execute(Cli::parse()));
}
