//! Experiment harness: regime classification, rare-event Monte Carlo, the
//! LDP curve, the control-perturbation experiment, configuration and I/O.

pub mod condition2;
pub mod config;
pub mod curve;
pub mod events;
pub mod io;
pub mod parallel;
pub mod regime;
pub mod stats;
