use clap::Parser;

fn main() {
    let cli = slabtest::cli::Cli::parse();
    if let Err(e) = slabtest::cli::run(cli) {
        eprintln!("slabtest: {e}");
        std::process::exit(1);
    }
}
