//! Driver crate: model files, one-knob families, the brute-force oracle,
//! sweep schedules, and report serialization for the `progeny` binary.

pub mod families;
pub mod model_file;
pub mod oracle;
pub mod report;
pub mod sweep;
