use clap::Parser;

fn main() {
    let cli = xtts::cli::Cli::parse();
    if let Err(e) = xtts::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
