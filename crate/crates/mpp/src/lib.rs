//! File formats and subcommands of the `mpp` tool.

pub mod commands;
pub mod format;
