//! JSON experiment reports: `{name, inputs_hash, seed, metrics, criteria}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Result;

/// Lower-case hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Criterion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub name: String,
    pub inputs_hash: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub criteria: Vec<Criterion>,
}

impl Report {
    pub fn new(name: impl Into<String>, inputs_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            name: name.into(),
            inputs_hash: inputs_hash.into(),
            seed,
            metrics: BTreeMap::new(),
            criteria: Vec::new(),
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.metrics.insert(key.to_owned(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn criterion(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.criteria.push(Criterion {
            name: name.to_owned(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
