//! Configuration, pipeline orchestration, acceptance checks and reports.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod pipeline;
pub mod report;
