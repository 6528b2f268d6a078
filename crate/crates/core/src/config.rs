//! Flat key-value configuration files with one section per module.
//!
//! Grammar (line oriented):
//!   line    := blank | comment | section | entry
//!   comment := '#' .*
//!   section := '[' name ']'
//!   entry   := key '=' value        (whitespace around tokens ignored)
//!
//! Section and key names are `[A-Za-z0-9_.-]+`. Values run to end of line.
//! Duplicate keys within a section and entries before any section header are
//! rejected. Consumers validate their own section's key set, so unknown keys
//! fail at the typed layer.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

pub type Section = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    sections: BTreeMap<String, Section>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(stripped) = line.strip_prefix('[') {
                let name = stripped.strip_suffix(']').ok_or_else(|| Error::Config(format!(
                    "line {line_no}: unterminated section header"
                )))?;
                let name = name.trim();
                if name.is_empty() || !valid_name(name) {
                    return Err(Error::Config(format!(
                        "line {line_no}: invalid section name '{name}'"
                    )));
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {line_no}: expected 'key = value'"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || !valid_name(key) {
                return Err(Error::Config(format!(
                    "line {line_no}: invalid key '{key}'"
                )));
            }
            let section = current.as_ref().ok_or_else(|| {
                Error::Config(format!("line {line_no}: entry before any [section] header"))
            })?;
            let slot = sections.get_mut(section).unwrap();
            if slot.contains_key(key) {
                return Err(Error::Config(format!(
                    "line {line_no}: duplicate key '{key}' in section [{section}]"
                )));
            }
            slot.insert(key.to_string(), value.to_string());
        }
        Ok(Self { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }

    pub fn sections(&self) -> impl Iterator<Item = (&String, &Section)> {
        self.sections.iter()
    }

    /// Typed read with unknown-key rejection: callers list the keys their
    /// section accepts and everything else is an error.
    pub fn checked_section(&self, name: &str, allowed: &[&str]) -> Result<Section> {
        let Some(section) = self.sections.get(name) else {
            return Ok(Section::new());
        };
        for key in section.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown key '{key}' in section [{name}] (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(section.clone())
    }
}

fn valid_name(s: &str) -> bool {
    s.chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

pub fn parse_f64(section: &Section, key: &str) -> Result<Option<f64>> {
    section
        .get(key)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("key '{key}': not a number: '{v}'")))
        })
        .transpose()
}

pub fn parse_usize(section: &Section, key: &str) -> Result<Option<usize>> {
    section
        .get(key)
        .map(|v| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("key '{key}': not an integer: '{v}'")))
        })
        .transpose()
}

pub fn parse_u64(section: &Section, key: &str) -> Result<Option<u64>> {
    section
        .get(key)
        .map(|v| {
            v.parse::<u64>()
                .map_err(|_| Error::Config(format!("key '{key}': not an integer: '{v}'")))
        })
        .transpose()
}

pub fn parse_bool(section: &Section, key: &str) -> Result<Option<bool>> {
    section
        .get(key)
        .map(|v| match v.as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(Error::Config(format!(
                "key '{key}': expected a boolean, got '{other}'"
            ))),
        })
        .transpose()
}
