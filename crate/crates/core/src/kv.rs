//! Flat `key = value` text, used for config files and checkpoint config blocks.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are trimmed;
//! values are trimmed and may contain `=`.

use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Record {
            index: n,
            line: n + 1,
            reason: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Record {
                index: n,
                line: n + 1,
                reason: "empty key".into(),
            });
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Param(format!("invalid value {value:?} for {key}")))
}
