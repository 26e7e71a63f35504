//! Flat, typed key-value configuration with `[section]` headers.
//!
//! ```text
//! # comment
//! [tank]
//! c1 = 0.513
//! [controller]
//! kind = proposed, standard-i
//! ki = 1, 10
//! [plant]
//! A = -1 0; 0 -2
//! ```
//!
//! Numbers are plain decimal literals, lists are comma separated, matrices
//! separate rows by `;` and entries by whitespace or commas, booleans are
//! `true`/`false`. Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::fmt;

use ltv_integral::DMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "config error at line {line}, field `{}`: {}", self.field, self.message),
            None => write!(f, "config error, field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Sections and the keys each accepts.
const SCHEMA: &[(&str, &[&str])] = &[
    ("scenario", &["plant", "name"]),
    (
        "tank",
        &["c1", "c2", "c3", "c4", "c5", "c6", "w", "q_sat", "horizon", "alpha", "beta_i"],
    ),
    ("plant", &["A", "B", "F", "C", "A_sin", "B_sin", "frequency"]),
    ("controller", &["kind", "ki", "Ki", "K", "H", "antiwindup"]),
    ("disturbance", &["kind", "value", "amplitude", "frequency", "times", "values"]),
    ("initial", &["x0", "v0"]),
    (
        "simulation",
        &["horizon", "method", "step", "abs_tol", "rel_tol", "sample_interval", "saturation", "plot"],
    ),
    (
        "analysis",
        &["horizon", "grid_points", "windows", "ues_horizon", "ues_starts", "bibs_trials", "bibs_horizon", "bibs_sup"],
    ),
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<(String, String), Entry>,
}

fn field(section: &str, key: &str) -> String {
    format!("{section}.{key}")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section: Option<&str> = None;
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| ConfigError {
                    line: Some(line),
                    field: content.to_string(),
                    message: "section header must end with `]`".into(),
                })?;
                let name = name.trim();
                let Some((known, _)) = SCHEMA.iter().find(|(s, _)| *s == name) else {
                    return Err(ConfigError {
                        line: Some(line),
                        field: name.to_string(),
                        message: "unknown section".into(),
                    });
                };
                section = Some(known);
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError {
                    line: Some(line),
                    field: content.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            let Some(section) = section else {
                return Err(ConfigError {
                    line: Some(line),
                    field: key.to_string(),
                    message: "key outside of any section".into(),
                });
            };
            let keys = SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !keys.contains(&key) {
                return Err(ConfigError {
                    line: Some(line),
                    field: field(section, key),
                    message: format!("unknown key (expected one of: {})", keys.join(", ")),
                });
            }
            let previous = entries.insert(
                (section.to_string(), key.to_string()),
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
            if previous.is_some() {
                return Err(ConfigError {
                    line: Some(line),
                    field: field(section, key),
                    message: "duplicate key".into(),
                });
            }
        }
        Ok(Self { entries })
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.entry(section, key).is_some()
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.entries.keys().any(|(s, _)| s == section)
    }

    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.entry(section, key).map(|e| e.line),
            field: field(section, key),
            message: message.into(),
        }
    }

    pub fn missing(&self, section: &str, key: &str) -> ConfigError {
        self.error(section, key, "required but missing")
    }

    /// Sets or replaces a value, e.g. from a command-line override.
    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.entries.insert(
            (section.to_string(), key.to_string()),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
    }

    pub fn str(&self, section: &str, key: &str) -> Option<&str> {
        self.entry(section, key).map(|e| e.value.as_str())
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.str(section, key)
            .map(|v| parse_number(v).map_err(|m| self.error(section, key, m)))
            .transpose()
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64(section, key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.str(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| self.error(section, key, format!("expected a nonnegative integer, got `{v}`"))),
        }
    }

    pub fn u64_or(&self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        self.usize_or(section, key, default as usize).map(|v| v as u64)
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.str(section, key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(self.error(section, key, format!("expected `true` or `false`, got `{v}`"))),
        }
    }

    pub fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.str(section, key)
            .map(|v| parse_list(v).map_err(|m| self.error(section, key, m)))
            .transpose()
    }

    pub fn words(&self, section: &str, key: &str) -> Option<Vec<String>> {
        self.str(section, key).map(|v| {
            v.split(',')
                .map(|w| w.trim().to_string())
                .filter(|w| !w.is_empty())
                .collect()
        })
    }

    pub fn matrix(&self, section: &str, key: &str) -> Result<Option<DMatrix<f64>>, ConfigError> {
        self.str(section, key)
            .map(|v| parse_matrix(v).map_err(|m| self.error(section, key, m)))
            .transpose()
    }

    pub fn require_matrix(&self, section: &str, key: &str) -> Result<DMatrix<f64>, ConfigError> {
        self.matrix(section, key)?.ok_or_else(|| self.missing(section, key))
    }

    /// A matrix that must have the given shape.
    pub fn matrix_shaped(
        &self,
        section: &str,
        key: &str,
        rows: usize,
        cols: usize,
    ) -> Result<Option<DMatrix<f64>>, ConfigError> {
        match self.matrix(section, key)? {
            Some(m) if m.shape() != (rows, cols) => Err(self.error(
                section,
                key,
                format!("expected a {rows}x{cols} matrix, got {}x{}", m.nrows(), m.ncols()),
            )),
            other => Ok(other),
        }
    }

    /// Error builder for checks performed by callers.
    pub fn invalid(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        self.error(section, key, message)
    }
}

fn parse_number(text: &str) -> Result<f64, String> {
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| format!("expected a number, got `{}`", text.trim()))?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("expected a finite number, got `{}`", text.trim()))
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    let items: Vec<&str> = text.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err("empty entry in list".into());
    }
    items.into_iter().map(parse_number).collect()
}

fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| {
            row.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(parse_number)
                .collect::<Result<Vec<f64>, String>>()
        })
        .collect::<Result<_, _>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 {
        return Err("empty matrix".into());
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(format!("row {} has {} entries, expected {cols}", i + 1, row.len()));
    }
    let data: Vec<f64> = rows.concat();
    Ok(DMatrix::from_row_slice(rows.len(), cols, &data))
}
