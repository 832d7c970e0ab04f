use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output alphabet of the recognizer. Index 0 is the CTC blank; symbol `i`
/// of the alphabet has class index `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Vocab {
    symbols: Vec<char>,
}

impl Vocab {
    pub const BLANK: usize = 0;

    pub fn new(symbols: &str) -> Result<Self> {
        let chars: Vec<char> = symbols.chars().collect();
        if chars.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        for (i, c) in chars.iter().enumerate() {
            if c.is_whitespace() || c.is_control() {
                return Err(Error::Config(format!("symbol {c:?} is not transcribable")));
            }
            if chars[..i].contains(c) {
                return Err(Error::Config(format!("duplicate symbol {c:?}")));
            }
        }
        Ok(Self { symbols: chars })
    }

    /// Number of output classes including the blank.
    pub fn classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.symbols
                    .iter()
                    .position(|&s| s == c)
                    .map(|i| i + 1)
                    .ok_or_else(|| Error::invalid(format!("symbol {c:?} is not in the vocabulary")))
            })
            .collect()
    }

    /// Maps class indices to text; blanks are skipped.
    pub fn decode(&self, classes: &[usize]) -> String {
        classes
            .iter()
            .filter(|&&c| c != Self::BLANK)
            .map(|&c| self.symbols[c - 1])
            .collect()
    }
}

impl TryFrom<String> for Vocab {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Vocab::new(&value)
    }
}

impl From<Vocab> for String {
    fn from(v: Vocab) -> String {
        v.as_string()
    }
}
