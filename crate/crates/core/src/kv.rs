//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Later keys override
//! earlier ones.

use std::path::Path;
use std::str::FromStr;

use crate::error::{io_err, EraError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub pairs: Vec<(String, String)>,
    source: String,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(EraError::Parse {
                    path: source.to_string(),
                    line: i + 1,
                    msg: format!("expected key=value, got {line:?}"),
                });
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self {
            pairs,
            source: source.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Parses one value, naming the key in the error.
pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| EraError::Config(format!("bad value {value:?} for key {key}: {e}")))
}

/// Types that can be configured from and written to key=value pairs.
pub trait KvConfig {
    /// Applies one key; returns `Ok(false)` when the key is not recognized.
    fn apply(&mut self, key: &str, value: &str) -> Result<bool>;

    fn entries(&self) -> Vec<(String, String)>;

    fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

/// Applies every pair, rejecting keys no target recognizes.
pub fn apply_all(kv: &KeyValues, targets: &mut [&mut dyn KvConfig]) -> Result<()> {
    for (k, v) in &kv.pairs {
        let mut taken = false;
        for t in targets.iter_mut() {
            if t.apply(k, v)? {
                taken = true;
                break;
            }
        }
        if !taken {
            return Err(EraError::Config(format!(
                "unknown key {k:?} in {}",
                kv.source()
            )));
        }
    }
    Ok(())
}
