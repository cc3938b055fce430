use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CacheKey, Completion, CompletionRequest, GatewayError};

/// One recorded exchange, stored as a single JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: CacheKey,
    pub request: CompletionRequest,
    pub response: FixtureResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureResponse {
    pub text: String,
    #[serde(default)]
    pub token_usage: BTreeMap<String, u64>,
}

impl FixtureRecord {
    /// Parses one fixture line and checks that the stored key matches the
    /// request it claims to answer.
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let record: FixtureRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let expected = record.request.cache_key();
        if expected != record.key {
            return Err(format!(
                "stored key {} does not match request hash {}",
                record.key, expected
            ));
        }
        Ok(record)
    }
}

/// Loads a JSONL fixture file. Blank lines are skipped; for duplicate keys
/// the first record wins.
pub fn load_fixtures(path: &Path) -> Result<HashMap<CacheKey, Completion>, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Fixture {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = FixtureRecord::parse_line(line).map_err(|message| GatewayError::Fixture {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        map.entry(record.key).or_insert(Completion {
            text: record.response.text,
            token_usage: record.response.token_usage,
        });
    }
    Ok(map)
}
