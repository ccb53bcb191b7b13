use clap::Parser;
use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter("KERRPARAMP_LOG")).init();
    let cli = jpc_kerr::cli::Cli::parse();
    std::process::exit(jpc_kerr::cli::run(cli));
}
