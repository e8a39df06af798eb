//! Flat `key=value` files for configs and run manifests. Blank lines and
//! lines starting with `#` are ignored; duplicate keys are rejected.

use std::path::{Path, PathBuf};

use crate::error::{Result, SstError};

/// One setting with the 1-based line it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Setting {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_kv(text: &str, origin: &Path) -> Result<Vec<Setting>> {
    let mut out: Vec<Setting> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| SstError::ConfigLine { path: origin.display().to_string(), line: i + 1, msg };
        let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, found {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err("empty key".into()));
        }
        if let Some(prev) = out.iter().find(|s| s.key == k) {
            return Err(err(format!("duplicate key {k:?} (first on line {})", prev.line)));
        }
        out.push(Setting { line: i + 1, key: k.to_string(), value: v.to_string() });
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<Setting>> {
    parse_kv(&std::fs::read_to_string(path)?, path)
}

/// Parses `key=value` from a command-line override.
pub fn parse_override(s: &str) -> Result<Setting> {
    let settings = parse_kv(s, &PathBuf::from("--set"))?;
    match settings.as_slice() {
        [one] => Ok(one.clone()),
        _ => Err(SstError::Config(format!("expected one key=value override, got {s:?}"))),
    }
}

pub fn format_kv(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    std::fs::write(path, format_kv(pairs))?;
    Ok(())
}
