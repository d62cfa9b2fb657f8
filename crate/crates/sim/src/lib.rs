//! Monte-Carlo harness around `jcesd-core`: configuration, seeded trials,
//! link metrics with MCS link adaptation, resumable CSV sweeps and the
//! validation suites behind the `jcesd` command-line tool.

// Negated comparisons are used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod mcs;
pub mod metrics;
pub mod sweep;
pub mod trial;
pub mod validate;

pub use config::{ReceiverKind, SimConfig};
pub use error::{Result, SimError};
pub use metrics::MetricsRow;
