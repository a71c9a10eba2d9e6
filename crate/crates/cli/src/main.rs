use clap::Parser;

fn main() {
    let cli = synbench_cli::Cli::parse();
    std::process::exit(synbench_cli::run(cli));
}
