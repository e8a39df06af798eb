//! Config-file settings plus `--set` overrides. Each command takes the keys
//! it understands; anything left over is rejected with its location.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sst_core::model::ModelConfig;
use sst_core::traceio::{parse_override, read_kv};

use crate::error::CliError;

#[derive(Clone, Debug)]
enum Origin {
    File { path: PathBuf, line: usize },
    Override(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Override(i) => write!(f, "--set #{}", i + 1),
        }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    key: String,
    value: String,
    origin: Origin,
    used: bool,
}

pub struct Settings {
    entries: Vec<Entry>,
    /// Every key read, with the value in force (defaults included).
    resolved: Vec<(String, String)>,
}

impl Settings {
    /// File settings first; overrides replace same-named keys.
    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut entries = Vec::new();
        if let Some(path) = config {
            for s in read_kv(path)? {
                entries.push(Entry {
                    key: s.key,
                    value: s.value,
                    origin: Origin::File { path: path.to_path_buf(), line: s.line },
                    used: false,
                });
            }
        }
        for (i, raw) in overrides.iter().enumerate() {
            let s = parse_override(raw).map_err(|e| CliError::Validation(format!("--set {raw:?}: {e}")))?;
            let e = Entry { key: s.key, value: s.value, origin: Origin::Override(i), used: false };
            match entries.iter_mut().find(|x| x.key == e.key) {
                Some(slot) => *slot = e,
                None => entries.push(e),
            }
        }
        Ok(Self { entries, resolved: Vec::new() })
    }

    fn raw(&mut self, key: &str) -> Option<(String, String)> {
        let e = self.entries.iter_mut().find(|e| e.key == key)?;
        e.used = true;
        Some((e.value.clone(), e.origin.to_string()))
    }

    fn record(&mut self, key: &str, value: String) {
        self.resolved.retain(|(k, _)| k != key);
        self.resolved.push((key.to_string(), value));
    }

    pub fn get<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        let v = match self.raw(key) {
            Some((value, origin)) => value
                .parse()
                .map_err(|_| CliError::Validation(format!("{origin}: cannot parse {key}={value:?}")))?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn optional<T: FromStr + ToString>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.raw(key) {
            Some((value, origin)) => {
                let v: T = value
                    .parse()
                    .map_err(|_| CliError::Validation(format!("{origin}: cannot parse {key}={value:?}")))?;
                self.record(key, v.to_string());
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    pub fn path(&mut self, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(self.optional::<String>(key)?.map(PathBuf::from))
    }

    pub fn required_path(&mut self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key)?.ok_or_else(|| CliError::Validation(format!("missing required setting {key}=PATH")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr + ToString>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError> {
        let v = match self.raw(key) {
            Some((value, origin)) => value
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<T>, _>>()
                .map_err(|_| CliError::Validation(format!("{origin}: cannot parse list {key}={value:?}")))?,
            None => default,
        };
        self.record(key, v.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
        Ok(v)
    }

    /// Applies every model key present on top of the defaults.
    pub fn model(&mut self) -> Result<ModelConfig, CliError> {
        let mut cfg = ModelConfig::default();
        for key in ModelConfig::KEYS {
            if let Some((value, origin)) = self.raw(key) {
                cfg.apply(key, &value).map_err(|e| CliError::Validation(format!("{origin}: {e}")))?;
            }
        }
        Ok(cfg)
    }

    /// Rejects keys nobody consumed.
    pub fn finish(&self) -> Result<(), CliError> {
        let unknown: Vec<String> =
            self.entries.iter().filter(|e| !e.used).map(|e| format!("{}: unknown key {:?}", e.origin, e.key)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(unknown.join("\n")))
        }
    }

    pub fn resolved(&self) -> &[(String, String)] {
        &self.resolved
    }
}
