//! Config-driven runner behind the `bergcurv` binary.

pub mod config;
pub mod run;

pub use config::{Overrides, RunConfig, Task};
pub use run::{execute, exit_code_for, write_outputs, RunOutcome, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PASS, EXIT_VERDICT_FAIL};
