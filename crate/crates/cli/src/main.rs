//! Command-line interface for normal forms of second-order equations
//! y_xx = J(x, y, y_x) under fibre-preserving changes of variables.

mod commands;
mod doc;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fibrenorm", version, about = "Normal forms, invariants, and symmetries of second-order equations under fibre-preserving maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Weight-by-weight staged normalization.
    Formal,
    /// Four-step normalization through explicit equation solving.
    Ck,
    /// Run both and cross-check the results.
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum What {
    /// Verify the four normal-form conditions.
    Normal,
    /// Compute the three relative invariants.
    Invariants,
    /// Decide whether the equation is equivalent to y_xx = 0.
    Flat,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Kind {
    /// A flat equation: a random map applied to y_xx = 0, with the witness map.
    Flat,
    /// A random polynomial right-hand side.
    Random,
    /// A random right-hand side already in normal form.
    Normal,
}

#[derive(Subcommand)]
enum Command {
    /// Bring an equation to normal form and report the maps that realize it.
    Normalize {
        /// Equation document to read.
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        /// Truncation order to work at.
        #[arg(long, default_value_t = 10)]
        order: i64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write the normal form here; maps go to <PATH>.formal.map.json
        /// and <PATH>.ck.map.json.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check normal-form conditions, invariants, or flatness.
    Check {
        /// Equation document to read.
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = What::Normal)]
        what: What,
        #[arg(long, default_value_t = 10)]
        order: i64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Transform an equation by a fibre-preserving map.
    Apply {
        /// Equation document to read.
        input: PathBuf,
        /// Map document to apply.
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 10)]
        order: i64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write the transformed equation here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compute the symmetry algebra of y_xx = 0 at the given order.
    Symmetries {
        #[arg(long, default_value_t = 10)]
        order: i64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Produce a seeded random equation document on stdout.
    Generate {
        #[arg(long, value_enum, default_value_t = Kind::Random)]
        kind: Kind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        order: i64,
        /// Write the equation here; a witness map goes to <PATH>.map.json.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    commands::write_stdout(&e.to_string());
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    let result = match cli.command {
        Command::Normalize {
            input,
            method,
            order,
            format,
            output,
        } => commands::normalize(&input, method, order, format, output.as_deref()),
        Command::Check {
            input,
            what,
            order,
            format,
        } => commands::check(&input, what, order, format),
        Command::Apply {
            input,
            map,
            order,
            format,
            output,
        } => commands::apply(&input, &map, order, format, output.as_deref()),
        Command::Symmetries { order, format } => commands::symmetries(order, format),
        Command::Generate {
            kind,
            seed,
            order,
            output,
        } => commands::generate(kind, seed, order, output.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
