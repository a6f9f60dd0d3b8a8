//! Markov-chain aggregate models of thermostatically controlled load (TCL) fleets
//! and their reach-and-hold sets: how much demand a fleet can shed through
//! setpoint changes and for how long.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregation;
pub mod error;
pub mod etp;
pub mod lp;
pub mod markov;
mod par;
pub mod reachhold;
pub mod scenario;
pub mod selfcheck;
pub mod validation;

pub use error::{Error, Result};
