//! `panelgwas` command-line entry point.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};

use args::{Cli, Command};

/// Exit status when validation runs but a concordance threshold is not met.
pub const EXIT_VALIDATION_FAILED: u8 = 3;

/// Required inputs that clap cannot express because the argument groups are shared.
fn check_required(cli: &Cli) {
    let missing = match &cli.command {
        Command::Run(a) if !a.genotypes.is_given() => {
            Some("a genotype input (--bfile, --bed/--bim/--fam, --bgen or --dense)")
        }
        Command::Run(a) if a.samples.pheno.is_none() => Some("--pheno <PHENO>"),
        Command::Convert(a) if !a.genotypes.is_given() => {
            Some("a genotype input (--bfile, --bed/--bim/--fam, --bgen or --dense)")
        }
        Command::Validate(a) if a.genotypes.is_given() && a.samples.pheno.is_none() => Some("--pheno <PHENO>"),
        _ => None,
    };
    if let Some(what) = missing {
        Cli::command().error(ErrorKind::MissingRequiredArgument, format!("missing required argument: {what}")).exit();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    check_required(&cli);
    env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp_millis()
        .target(env_logger::Target::Stderr)
        .init();

    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Validate(a) => commands::validate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Convert(a) => commands::convert(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
