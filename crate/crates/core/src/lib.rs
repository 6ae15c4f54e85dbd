//! Dressed-state shortcut-to-adiabaticity gates on Rydberg atoms under the
//! anti-blockade mechanism.
//!
//! Units: `ħ = 1`, every frequency is an angular frequency in rad/s and every
//! time is in seconds.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamo;
pub mod error;
pub mod gateproto;
pub mod hammodel;
pub mod pulsegen;
pub mod qcore;
pub mod scenario;

pub use error::{Error, Result};
