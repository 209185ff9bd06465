use clap::Parser;
use labdx::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("labdx: {e}");
        std::process::exit(e.exit_code());
    }
}
