//! `trimix` command line: simulations, exact distances, bound checks,
//! observable analyses and scaling studies, each run recorded in a
//! `manifest.json` that `trimix rerun` can replay.

mod args;
mod commands;
mod error;
mod output;

use std::ffi::OsString;
use std::path::Path;

use clap::Parser;

pub use args::{Check, Cli, Command, Lemma};
pub use error::{CliError, CliResult};
pub use output::{fmt_f64, sha256_hex, OutputFile, RunManifest, MANIFEST_NAME};

pub const SEED_ENV: &str = "TRIMIX_SEED";

/// Parse `argv` (program name first), run the command and return the exit
/// code: 0 success, 1 assertion failure, 2 usage or input error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<String> = match argv
        .into_iter()
        .map(|a| a.into().into_string())
        .collect::<Result<_, _>>()
    {
        Ok(v) => v,
        Err(bad) => {
            eprintln!("error: argument is not valid UTF-8: {bad:?}");
            return 2;
        }
    };
    let (expanded, config) = match args::expand_config(&raw) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&expanded) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cli, &expanded, config) {
        Ok(failures) if failures.is_empty() => 0,
        Ok(failures) => {
            for f in &failures {
                eprintln!("assertion failed: {f}");
            }
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Re-run the command recorded in `manifest` into `out` and compare every
/// output digest. Returns the mismatching paths.
pub fn rerun_manifest(manifest: &Path, out: &Path) -> CliResult<Vec<String>> {
    commands::rerun(manifest, out, None)
}
