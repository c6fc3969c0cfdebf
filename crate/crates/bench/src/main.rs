use clap::Parser;

fn main() {
    let cli = amci_bench::cli::Cli::parse();
    if let Err(e) = amci_bench::cli::execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
