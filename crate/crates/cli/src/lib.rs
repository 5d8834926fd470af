//! Command-line front end of the `clfqp` controllers.

pub mod check;
pub mod commands;
pub mod config;
pub mod plot;
pub mod presets;
pub mod report;
pub mod telemetry;
