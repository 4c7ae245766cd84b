//! Command-line driver for `sna-core`: dataset generation, fitting,
//! inversion, PDE solves, scaling studies and the reference benchmarks.
//!
//! Every run writes `report.json` (metrics, parameters and a separate
//! `volatile` section with timings), `summary.txt` and the plot data files
//! described in [`plot`] into its output directory.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod report;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use commands::{run, Outcome, REPORT_FILE, SUMMARY_FILE};
pub use error::{CliError, CliResult};
pub use report::Report;

/// Parse `args`, run, print the summary or the error and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(o) => {
            print!("{}", o.summary);
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
