use std::process::ExitCode;

use clap::Parser;

mod commands;
mod config;

use commands::Cli;

/// Exit status per error class.
fn exit_code(e: &chromabci::Error) -> u8 {
    match e.kind() {
        chromabci::ErrorKind::Usage => 1,
        chromabci::ErrorKind::Data => 2,
        chromabci::ErrorKind::Numeric => 3,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage tag=args msg={:?}", one_line(first));
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.kind() {
                chromabci::ErrorKind::Usage => "usage",
                chromabci::ErrorKind::Data => "data",
                chromabci::ErrorKind::Numeric => "numeric",
            };
            eprintln!("error kind={kind} tag={} msg={:?}", e.tag(), one_line(&e.to_string()));
            ExitCode::from(exit_code(&e))
        }
    }
}
