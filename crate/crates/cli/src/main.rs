use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = angler_cli::Cli::parse();
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("angler: cannot start runtime: {e}");
            return angler_cli::ExitStatus::Remote.into();
        }
    };
    runtime.block_on(angler_cli::run(cli)).into()
}
