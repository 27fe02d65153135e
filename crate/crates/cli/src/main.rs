use clap::Parser;
use enf_cli::app::{run, Cli};

fn main() -> anyhow::Result<()> {
    run(Cli::parse())
}
