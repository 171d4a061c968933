// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// The shared token set both modalities are scored over.
///
/// Token ids are line numbers of the vocabulary file, starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::invalid(format!(
                "vocabulary needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if ids.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, ids })
    }

    /// Placeholder vocabulary `tok0000 .. tok{V-1}` for synthetic runs.
    pub fn synthetic(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| format!("tok{i:04}")).collect())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::to_owned).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_follow_line_numbers() {
        let v = Vocabulary::from_text("cat\ndog\nbird\n").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("dog"), Some(1));
        assert_eq!(v.token(2), Some("bird"));
        assert_eq!(v.token(3), None);
    }

    #[test]
    fn rejects_duplicates_and_tiny_vocabularies() {
        assert!(Vocabulary::from_text("a\nb\na").is_err());
        assert!(Vocabulary::from_text("only").is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::synthetic(5).unwrap();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }
}
