use clap::Parser;

fn main() {
    let cli = dnrr::cli::Cli::parse();
    std::process::exit(dnrr::cli::run(cli));
}
