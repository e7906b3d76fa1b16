//! Study runner, reference oracle and acceptance checks for `netctl-core`.

pub mod acceptance;
pub mod oracle;
pub mod stats;
pub mod studies;
