pub mod calibration;
pub mod cli;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod fmt;
pub mod residuals;
pub mod simulation;
