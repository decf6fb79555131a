//! Character vocabulary with a reserved CTC blank at class index 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class index of the CTC blank.
pub const BLANK: usize = 0;

/// Spelling of the blank class in serialized vocabulary lists.
pub const BLANK_LABEL: &str = "<blank>";

/// An ordered character vocabulary. Class 0 is the blank; classes `1..C`
/// map to text symbols in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<char>,
    index: [u8; 128],
}

impl Vocab {
    /// Builds a vocabulary from text symbols (blank is implicit at index 0).
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Result<Self> {
        let symbols: Vec<char> = symbols.into_iter().collect();
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("vocabulary has no symbols".into()));
        }
        if symbols.len() > 126 {
            return Err(Error::InvalidArgument(
                "vocabulary larger than supported".into(),
            ));
        }
        let mut index = [0u8; 128];
        for (i, &c) in symbols.iter().enumerate() {
            let code = c as usize;
            if code >= 128 {
                return Err(Error::InvalidArgument(format!(
                    "non-ascii vocabulary symbol {c:?}"
                )));
            }
            if index[code] != 0 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate vocabulary symbol {c:?}"
                )));
            }
            index[code] = (i + 1) as u8;
        }
        Ok(Vocab { symbols, index })
    }

    /// The standard vocabulary: blank + a-z + space + apostrophe (C = 29).
    pub fn default_char_vocab() -> Self {
        let mut symbols: Vec<char> = ('a'..='z').collect();
        symbols.push(' ');
        symbols.push('\'');
        Vocab::new(symbols).expect("default vocabulary is valid")
    }

    /// Total number of classes including the blank.
    pub fn size(&self) -> usize {
        self.symbols.len() + 1
    }

    /// Number of text symbols (excluding the blank).
    pub fn text_size(&self) -> usize {
        self.symbols.len()
    }

    /// Text symbols in class order (class `i + 1` is `symbols()[i]`).
    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Class index for a text character, if present.
    pub fn class_of(&self, c: char) -> Option<usize> {
        let code = c as usize;
        if code < 128 && self.index[code] != 0 {
            Some(self.index[code] as usize)
        } else {
            None
        }
    }

    /// Character for a class index; `None` for the blank or out of range.
    pub fn char_of(&self, class: usize) -> Option<char> {
        if class == BLANK {
            None
        } else {
            self.symbols.get(class - 1).copied()
        }
    }

    pub fn contains(&self, c: char) -> bool {
        self.class_of(c).is_some()
    }

    /// Checks that every character of `text` is a vocabulary symbol.
    pub fn validate_text(&self, text: &str, context: &str) -> Result<()> {
        for ch in text.chars() {
            if !self.contains(ch) {
                return Err(Error::OutOfVocab {
                    ch,
                    context: context.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Serialized class labels: `<blank>` followed by one-character strings.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.size());
        out.push(BLANK_LABEL.to_string());
        out.extend(self.symbols.iter().map(|c| c.to_string()));
        out
    }

    /// Rebuilds a vocabulary from serialized class labels.
    pub fn from_labels(labels: &[String]) -> Result<Self> {
        match labels.first() {
            Some(first) if first == BLANK_LABEL => {}
            _ => {
                return Err(Error::format(
                    "vocabulary",
                    format!("first label must be {BLANK_LABEL:?}"),
                ))
            }
        }
        let mut symbols = Vec::with_capacity(labels.len().saturating_sub(1));
        for label in &labels[1..] {
            let mut chars = label.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => symbols.push(c),
                _ => {
                    return Err(Error::format(
                        "vocabulary",
                        format!("label {label:?} is not a single character"),
                    ))
                }
            }
        }
        Vocab::new(symbols)
    }
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(deserializer)?;
        Vocab::from_labels(&labels).map_err(serde::de::Error::custom)
    }
}
