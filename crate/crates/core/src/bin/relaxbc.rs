use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RELAXBC_LOG", "warn")).init();
    let cli = relaxbc::cli::Cli::parse();
    std::process::exit(relaxbc::cli::run(cli));
}
