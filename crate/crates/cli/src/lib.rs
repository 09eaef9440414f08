//! Command-line front end for the scheduling toolkit.

pub mod args;
pub mod error;
pub mod manifest;
pub mod run;

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub use error::CliError;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Results go to `out`, errors to `err`.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = write!(out, "{e}");
            return 0;
        }
        Err(e) => {
            let _ = write!(err, "{}", usage_text(&e.to_string()));
            return 2;
        }
    };
    match run::dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.line());
            e.exit_code()
        }
    }
}

/// Rewrites clap's `error: ...` header as `error[usage]: ...`, keeping the usage lines.
fn usage_text(rendered: &str) -> String {
    let mut lines = rendered.lines();
    let first = lines.next().unwrap_or_default();
    let first = first.strip_prefix("error: ").unwrap_or(first);
    let mut text = format!("error[usage]: {first}\n");
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    text
}
