//! JSON report envelope: every report embeds the schema version, the
//! command configuration, the seed, content hashes of the inputs, and
//! per-module version tags. Identical `(config, seed)` pairs produce
//! bit-identical reports (no timestamps, deterministic key order).

use serde::Serialize;
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct ReportMeta {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, serde_json::Value>,
    /// Hex content hashes of the input files, keyed by role.
    pub input_hashes: BTreeMap<String, String>,
    pub module_versions: BTreeMap<String, String>,
}

impl ReportMeta {
    pub fn new(command: &str, seed: u64) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let module_versions = [
            "linalg", "avg", "transforms", "vcnet", "dp", "median", "walk", "oracles",
        ]
        .iter()
        .map(|m| (m.to_string(), version.clone()))
        .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            config: BTreeMap::new(),
            input_hashes: BTreeMap::new(),
            module_versions,
        }
    }

    pub fn with_config(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.config.insert(key.to_string(), value.into());
        self
    }

    pub fn with_input_hash(mut self, role: &str, hex: String) -> Self {
        self.input_hashes.insert(role.to_string(), hex);
        self
    }
}

/// Wraps a payload with the envelope and serializes deterministically.
pub fn render<T: Serialize>(meta: &ReportMeta, payload: &T) -> serde_json::Result<String> {
    #[derive(Serialize)]
    struct Full<'a, T> {
        #[serde(flatten)]
        meta: &'a ReportMeta,
        report: &'a T,
    }
    serde_json::to_string_pretty(&Full { meta, report: payload })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_identical_for_same_config() {
        let make = || {
            let meta = ReportMeta::new("disc", 7).with_config("n", 5);
            render(&meta, &serde_json::json!({"maxPrefixInf": 1.5})).unwrap()
        };
        assert_eq!(make(), make());
    }
}
