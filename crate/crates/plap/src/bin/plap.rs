use clap::Parser;
use plap::runner::{run, Cli};

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}
