#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benefit;
pub mod completeness;
pub mod config;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod longitudinal;
pub mod pipeline;
pub mod report;
pub mod responder;
pub mod scoring;
pub mod simulator;
