//! Batch runner over the time-bin QKD model: configuration, sweeps,
//! protocol comparison and report emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod sweep;
