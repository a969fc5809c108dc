//! Simulation of impulsive control systems driven by bounded-variation inputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximation;
pub mod bvpath;
pub mod commands;
pub mod completion;
pub mod expr;
pub mod integrator;
pub mod numeric;
pub mod report;
pub mod scenario;
pub mod verify;
