use std::process::ExitCode;

use clap::Parser;

use hypogen_core::error::ErrorClass;

/// Exit codes: 0 success, 2 usage (clap), then one per failure class.
fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 3,
        ErrorClass::Input => 4,
        ErrorClass::Gateway => 5,
        ErrorClass::Parse => 6,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = hypogen_cli::args::Cli::parse();
    match hypogen_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(exit_code(err.class()))
        }
    }
}
