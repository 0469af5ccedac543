//! Flat `key = value` configuration with typed, field-named accessors.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("missing required field '{0}'")]
    Missing(String),
    #[error("field '{field}': {msg}")]
    Invalid { field: String, msg: String },
    #[error("unknown field '{field}' for this subcommand (allowed: {allowed})")]
    Unknown { field: String, allowed: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            cfg.set(k, v.trim());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: kv.to_string(),
        })?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for k in self.entries.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(ConfigError::Unknown {
                    field: k.clone(),
                    allowed: allowed.join(", "),
                });
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn required(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            field: key.to_string(),
            msg: msg.into(),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Self::invalid(key, format!("cannot parse '{v}'"))),
        }
    }

    pub fn get_required<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let v = self.required(key)?;
        v.parse()
            .map_err(|_| Self::invalid(key, format!("cannot parse '{v}'")))
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some("1" | "true" | "yes" | "on") => Ok(true),
            Some("0" | "false" | "no" | "off") => Ok(false),
            Some(v) => Err(Self::invalid(key, format!("expected a boolean, got '{v}'"))),
        }
    }

    /// Comma or whitespace separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        let Some(v) = self.raw(key) else {
            return Ok(None);
        };
        split_list(v)
            .map(|item| {
                item.parse()
                    .map_err(|_| Self::invalid(key, format!("cannot parse list item '{item}'")))
            })
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    /// Checks `lo <= value <= hi` (open bounds when `open` is set).
    pub fn in_range(
        key: &str,
        value: f64,
        lo: f64,
        hi: f64,
        open: bool,
    ) -> Result<(), ConfigError> {
        let ok = if open {
            value > lo && value < hi
        } else {
            value >= lo && value <= hi
        };
        if ok {
            Ok(())
        } else {
            let (l, r) = if open { ('(', ')') } else { ('[', ']') };
            Err(Self::invalid(
                key,
                format!("{value} outside {l}{lo}, {hi}{r}"),
            ))
        }
    }
}

pub fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}
