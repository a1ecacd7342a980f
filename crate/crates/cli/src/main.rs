mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use rtcp::Error;

use crate::args::Cli;

/// Exit status for each error class.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => 3,
        Error::Config(_) | Error::Domain(_) => 4,
        Error::Data(_) | Error::DegenerateData(_) => 5,
        Error::Estimation { .. }
        | Error::Initialization(_)
        | Error::Numerical(_)
        | Error::ConstrainedRefit(_)
        | Error::Simulation(_) => 6,
        Error::Io(_) => 7,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(4);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
