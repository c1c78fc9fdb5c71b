//! Command-line front end of tfnorm.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod commands;
pub mod config;
pub mod report;
pub mod verify;

use std::ffi::OsString;

use clap::Parser;
use tfnorm_core::Error;

/// Exit status for a run that completed but failed a check.
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::Io(_) | Error::Csv(_) => EXIT_PARSE,
        _ => EXIT_INVARIANT,
    }
}

/// Size the global thread pool from `TFNORM_THREADS`.
fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("TFNORM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Parse(format!("TFNORM_THREADS must be a positive integer, got {v:?}")))?;
    // a pool built earlier in the same process wins
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { 0 };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match commands::dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => EXIT_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
