//! Semi-blind joint channel estimation and signal detection for multi-user
//! MIMO-OFDM with hybrid precoding.
//!
//! The crate is `no_std` (with `alloc`): it holds the numerical pipeline only.
//! File formats, configuration and the command-line tool live in the
//! companion `jcesd-sim` crate.

#![cfg_attr(not(test), no_std)]
// Negated comparisons are used deliberately so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baseline;
pub mod channel;
pub mod error;
pub mod linalg;
pub mod marcum;
pub mod modem;
pub mod optimizer;
pub mod precoding;
pub mod receiver;
pub mod rng;

pub use error::{Error, Result};
