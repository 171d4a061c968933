// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` config text. `#` starts a comment; blank lines are
//! ignored. Keys are consumed by the typed config that parses them, and any
//! key left over is an error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct KvDoc {
    entries: BTreeMap<String, String>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected key = value, got {line:?}"),
                ));
            };
            let key = k.trim().to_owned();
            if key.is_empty() {
                return Err(Error::config(format!("line {}", lineno + 1), "empty key"));
            }
            if entries.insert(key.clone(), v.trim().to_owned()).is_some() {
                return Err(Error::config(key, "given more than once"));
            }
        }
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_owned(), value.to_string());
    }

    /// Removes `key` and parses it, or returns `default` when absent.
    pub fn take<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e: T::Err| Error::config(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::config(k, "unknown key")),
        }
    }
}

/// Renders ordered `(key, value)` pairs as config text.
pub fn render<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_consumes() {
        let mut doc = KvDoc::parse("# comment\nlr = 0.5\n\nepochs=3 # trailing\n").unwrap();
        assert_eq!(doc.take("lr", 1.0).unwrap(), 0.5);
        assert_eq!(doc.take("epochs", 1u32).unwrap(), 3);
        assert_eq!(doc.take("seed", 7u64).unwrap(), 7);
        doc.finish().unwrap();
    }

    #[test]
    fn unknown_and_malformed_keys_fail() {
        let doc = KvDoc::parse("bogus = 1").unwrap();
        match doc.finish() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "bogus"),
            other => panic!("{other:?}"),
        }
        assert!(KvDoc::parse("no equals sign").is_err());
        assert!(KvDoc::parse("a = 1\na = 2").is_err());
        let mut doc = KvDoc::parse("lr = fast").unwrap();
        assert!(doc.take("lr", 0.0f64).is_err());
    }
}
