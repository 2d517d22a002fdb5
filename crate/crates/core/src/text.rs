//! Unicode normalization shared by every stage of the pipeline.

use std::fmt;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// NFC-normalizes `s` and optionally lowercases it.
///
/// Lowercasing happens after composition and the result is re-composed, since
/// a few code points lowercase into decomposed sequences.
pub fn normalize(s: &str, lowercase: bool) -> String {
    let nfc: String = s.nfc().collect();
    if lowercase {
        nfc.to_lowercase().nfc().collect()
    } else {
        nfc
    }
}

/// A single normalized word: non-empty and free of whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(String);

impl Term {
    pub fn new(text: &str, lowercase: bool) -> Result<Self> {
        let text = normalize(text.trim(), lowercase);
        if text.is_empty() {
            return Err(Error::InvalidTerm(text, "empty after normalization"));
        }
        if text.chars().any(char::is_whitespace) {
            return Err(Error::InvalidTerm(text, "contains whitespace"));
        }
        Ok(Term(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl AsRef<str> for Term {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
