//! File formats and command implementations behind the `weakparse` binary.

pub mod commands;
pub mod formats;
