use clap::Parser;
use hcg_lab::cli::{run_command, Cli};
use hcg_lab::exit_code;

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run_command(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
