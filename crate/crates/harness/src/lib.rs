//! Scenario runner, built-in scenarios and verification suites.

#![allow(clippy::needless_range_loop)]

pub mod builtin;
pub mod pipeline;
pub mod random;
pub mod scenario;
pub mod suites;
pub mod trace;
