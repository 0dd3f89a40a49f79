//! Versioned JSON report envelope.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope shared by every command. Wall time and thread count are left
/// out so that reruns produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command-line settings, without output paths and thread count.
    pub config: Value,
    pub result: Value,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str, config: Value, result: Value, warnings: Vec<String>) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            result,
            warnings,
        }
    }
}
