//! Command-line front end for encrypted system identification runs: record
//! synthesis from a benchmark plant, directory-based request/response
//! exchanges, re-validation, per-iteration diagnostics, and report
//! aggregation. All artifacts except wall-clock timing are deterministic in
//! the flags, so runs diff cleanly.

pub mod datagen;
pub mod reporting;
pub mod runner;
