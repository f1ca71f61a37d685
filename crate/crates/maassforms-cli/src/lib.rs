//! Configuration parsing, coefficient-table persistence, and report emission
//! for the `maassforms` batch CLI.
//!
//! All big numbers cross the file boundary as decimal strings (never binary
//! floats); tables round-trip bit-identically at their recorded precision.

pub mod config;
pub mod persist;
pub mod report;
