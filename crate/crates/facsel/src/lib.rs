//! File formats, configuration, reports and the integrative workflow on top of
//! `facsel-core`: choose the number of factors with unrestricted fits, check the
//! confirmatory base pattern, then rank competing inequality-constrained models.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

pub use facsel_core as core;
