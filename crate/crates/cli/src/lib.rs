//! Scenario runner and operator tooling for the sensing stack.

pub mod commands;
pub mod exit;
pub mod output;
pub mod scenario;
