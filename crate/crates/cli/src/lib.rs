//! Problem files, run artifacts and the audit behind the `reachmesh` binary.

pub mod artifact;
pub mod config;
pub mod envelope_cmd;
pub mod verify;

pub use artifact::{Mode, RunArtifact, Termination};
pub use config::Config;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INVALID: u8 = 1;
    pub const NON_CONVERGED: u8 = 2;
    pub const BUDGET_EXCEEDED: u8 = 3;
    pub const VIOLATION: u8 = 4;
}
