//! Flat `key = value` text documents.
//!
//! Used for configuration files, model files and run manifests. Blank lines
//! and lines starting with `#` are ignored. Keys are unique within a document.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default)]
pub struct Document {
    name: String,
    entries: Vec<Entry>,
}

impl Document {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(format_error(name, line, "expected `key = value`"));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(format_error(name, line, "empty key"));
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(format_error(
                    name,
                    line,
                    &format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            entries.push(Entry { line, key: key.to_string(), value: value.trim().to_string() });
        }
        Ok(Self { name: name.to_string(), entries })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key).ok_or_else(|| format_error(&self.name, 0, &format!("missing key `{key}`")))
    }

    /// Parses the value of `key` with `FromStr`, naming the line on failure.
    pub fn parse_value<T>(&self, key: &str) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        let entry = self.require(key)?;
        entry
            .value
            .parse::<T>()
            .map_err(|e| format_error(&self.name, entry.line, &format!("invalid value for `{key}`: {e}")))
    }

    /// Parses a whitespace-separated list of floats.
    pub fn parse_floats(&self, key: &str) -> Result<Vec<f64>> {
        let entry = self.require(key)?;
        entry
            .value
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| {
                    format_error(&self.name, entry.line, &format!("invalid number in `{key}`: {e}"))
                })
            })
            .collect()
    }

    /// Fails on the first key not in `allowed`.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            Some(e) => Err(format_error(&self.name, e.line, &format!("unknown key `{}`", e.key))),
            None => Ok(()),
        }
    }
}

pub(crate) fn format_error(file: &str, line: usize, message: &str) -> Error {
    Error::Format { file: file.to_string(), line, message: message.to_string() }
}

/// Accumulates `key = value` lines in insertion order.
#[derive(Debug, Default)]
pub struct Writer {
    out: String,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.out.push_str("# ");
        self.out.push_str(text);
        self.out.push('\n');
        self
    }

    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.out.push_str(&format!("{key} = {value}\n"));
        self
    }

    /// Floats use the shortest representation that parses back to the same bits.
    pub fn put_floats(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let joined = values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
        self.put(key, joined)
    }

    pub fn finish(self) -> String {
        self.out
    }
}
