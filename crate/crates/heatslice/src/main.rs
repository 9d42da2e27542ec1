use clap::Parser;

fn main() {
    std::process::exit(heatslice::cli::run(heatslice::cli::Cli::parse()));
}
