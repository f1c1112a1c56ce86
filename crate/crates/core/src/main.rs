use clap::Parser;

fn main() {
    let cli = beacon_sync::cli::Cli::parse();
    std::process::exit(beacon_sync::cli::main_with(cli));
}
