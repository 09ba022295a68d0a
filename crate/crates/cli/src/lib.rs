//! Library side of the `bsretract` command: run manifests, JSON/CSV writers,
//! one function per subcommand, and the batch suite.

pub mod commands;
pub mod manifest;
pub mod output;
pub mod suite;

use bsretract_core::{Error, Stage};

pub use manifest::{artifact_hash, Outcome, Parameters, RunManifest};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exit {
    Ok,
    /// A hard invariant failed somewhere in a suite run.
    InvariantViolation,
    /// Unreadable input, invalid `(p, q)`, or a representation off the variety.
    BadInput,
    /// The flow ran out of iterations or stalled.
    FlowBudget,
    /// The flow converged but the expected structure was not found.
    Structural,
}

impl Exit {
    pub fn code(self) -> i32 {
        match self {
            Exit::Ok => 0,
            Exit::InvariantViolation => 1,
            Exit::BadInput => 2,
            Exit::FlowBudget => 3,
            Exit::Structural => 4,
        }
    }

    pub fn from_error(e: &Error) -> Exit {
        if e.stage() == Some(Stage::Input) {
            return Exit::BadInput;
        }
        match e.root() {
            Error::FlowNotConverged { .. } => Exit::FlowBudget,
            Error::InvalidGroup { .. }
            | Error::InvalidMatrix(_)
            | Error::DimensionMismatch { .. }
            | Error::NotInVariety { .. }
            | Error::NotSpecialLinear(_)
                if e.stage().is_none() =>
            {
                Exit::BadInput
            }
            _ => Exit::Structural,
        }
    }
}
