//! Longitudinal car-following laboratory.
//!
//! Three collision-avoidance controllers drive an ego vehicle behind a lead
//! whose speed follows a prescribed profile:
//!
//! * [`mpc`]: receding-horizon tracking of the lead with a condensed box QP,
//! * [`safe_ctrl`]: a level automaton that keeps the gap above precomputed
//!   braking bounds, plus the emergency speed bound `√(2·a_max·d)`,
//! * [`hybrid`]: a switch taking the highest candidate that respects the
//!   emergency bound.
//!
//! [`sim`] runs closed-loop scenarios, [`metrics`] scores the traces, and
//! [`experiment`] sweeps a scenario grid and writes CSV artifacts.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod hybrid;
pub mod metrics;
pub mod mpc;
pub mod report;
pub mod safe_ctrl;
pub mod sim;

pub use error::{Error, Result};
