use clap::Parser;
use surveyplan::cli::{run, Cli};

fn main() {
    // Clap prints usage errors itself and exits 2 (0 for --help/--version).
    let cli = Cli::parse();
    std::process::exit(run(cli));
}
