//! Answers one backend request on stdin with the deterministic mocks.

use std::io::{stdin, stdout};
use std::process::ExitCode;

use forge_clients::subprocess::serve_one;
use forge_clients::Backends;

fn main() -> ExitCode {
    match serve_one(&Backends::mock(), stdin().lock(), stdout().lock()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("forge-mock-backend: {e}");
            ExitCode::FAILURE
        }
    }
}
