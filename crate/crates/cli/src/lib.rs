//! Command implementations behind the `avfield` binary.

pub mod commands;
pub mod config;
pub mod lock;
pub mod pipeline;

use avfield::error::Error;

/// Process exit status for an error: 2 for problems with the invocation,
/// its configuration or its input files, 1 for failures while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Usage(_)
        | Error::Schema(_)
        | Error::MissingFile(_)
        | Error::DuplicateId(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}
