//! Hierarchical push-sum over clustered networks with unreliable links,
//! plus the estimation and tracking algorithms built on it and a dense
//! matrix oracle for checking them.

pub mod error;
pub mod estimation;
pub mod faults;
pub mod harness;
pub mod hps;
pub mod oracle;
pub mod topology;
pub mod tracking;

pub use error::{Error, Result};
pub use faults::LinkSchedule;
pub use hps::{AgentState, PushSum};
pub use topology::{Edge, GraphConstants, NetworkSpec};

/// Round-trippable float formatting used by every CSV writer.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
