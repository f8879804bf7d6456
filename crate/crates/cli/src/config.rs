//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are flag names
//! without the leading dashes; underscores and dashes are interchangeable.

use std::path::Path;

use crate::CliError;

/// Parsed `(key, value)` pairs in file order, keys normalised to dashes.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(CliError::InvalidConfig(format!("line {}: empty key", lineno + 1)));
        }
        let value = value.trim().trim_matches('"').to_string();
        if let Some(slot) = pairs.iter_mut().find(|(k, _)| *k == key) {
            slot.1 = value;
        } else {
            pairs.push((key, value));
        }
    }
    Ok(pairs)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    parse(&crate::read_file(path)?)
}
