//! Plain-text `key = value` files used for configs, scene specs and
//! sidecar metadata.
//!
//! Blank lines and lines starting with `#` are ignored. Keys keep their
//! insertion order so that written files are deterministic.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::FormatError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut kv = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(FormatError::Syntax {
                    line: i + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(FormatError::Syntax {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            kv.set(key, value.trim());
        }
        Ok(kv)
    }

    /// Inserts or replaces `key`.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get_str(key).is_some()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, FormatError>
    where
        T::Err: Display,
    {
        let raw = self
            .get_str(key)
            .ok_or_else(|| FormatError::MissingKey(key.to_string()))?;
        parse_value(key, raw)
    }

    /// Parses `key` if present, otherwise returns `default`.
    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, FormatError>
    where
        T::Err: Display,
    {
        match self.get_str(key) {
            Some(raw) => parse_value(key, raw),
            None => Ok(default),
        }
    }

    /// Parses a comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, FormatError>
    where
        T::Err: Display,
    {
        let Some(raw) = self.get_str(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_value(key, s))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, FormatError>
where
    T::Err: Display,
{
    raw.parse::<T>().map_err(|e| FormatError::Value {
        key: key.to_string(),
        message: format!("`{raw}`: {e}"),
    })
}
