use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexCategory {
    Joy,
    Trust,
    Anger,
    Fear,
    Sadness,
    Anticipation,
    Positive,
    Negative,
    Help,
    Communication,
    Speaking,
    Listen,
    Strength,
    Healing,
    Nervousness,
}

impl LexCategory {
    pub const ALL: [LexCategory; 15] = [
        LexCategory::Joy,
        LexCategory::Trust,
        LexCategory::Anger,
        LexCategory::Fear,
        LexCategory::Sadness,
        LexCategory::Anticipation,
        LexCategory::Positive,
        LexCategory::Negative,
        LexCategory::Help,
        LexCategory::Communication,
        LexCategory::Speaking,
        LexCategory::Listen,
        LexCategory::Strength,
        LexCategory::Healing,
        LexCategory::Nervousness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LexCategory::Joy => "joy",
            LexCategory::Trust => "trust",
            LexCategory::Anger => "anger",
            LexCategory::Fear => "fear",
            LexCategory::Sadness => "sadness",
            LexCategory::Anticipation => "anticipation",
            LexCategory::Positive => "positive",
            LexCategory::Negative => "negative",
            LexCategory::Help => "help",
            LexCategory::Communication => "communication",
            LexCategory::Speaking => "speaking",
            LexCategory::Listen => "listen",
            LexCategory::Strength => "strength",
            LexCategory::Healing => "healing",
            LexCategory::Nervousness => "nervousness",
        }
    }
}

impl fmt::Display for LexCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LexCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LexCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown lexicon category `{s}`")))
    }
}

/// Word → categories map loaded from `word<TAB>category` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, BTreeSet<LexCategory>>,
}

const DEFAULT_LEXICON: &str = include_str!("../../../../fixtures/lexicon.tsv");

impl Lexicon {
    /// The lexicon shipped with the repository fixtures.
    pub fn builtin() -> Self {
        Self::parse_tsv(DEFAULT_LEXICON).expect("shipped lexicon parses")
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, cat) = line
                .split_once('\t')
                .ok_or_else(|| Error::record(i + 1, "expected word<TAB>category"))?;
            let word = word.trim();
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(Error::record(i + 1, format!("invalid word `{word}`")));
            }
            if word.to_lowercase() != word {
                return Err(Error::record(i + 1, format!("word `{word}` is not lowercase")));
            }
            let cat: LexCategory = cat.trim().parse().map_err(|e: Error| Error::record(i + 1, e.to_string()))?;
            lex.insert(word, cat);
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, word: &str, cat: LexCategory) {
        self.entries.entry(word.to_string()).or_default().insert(cat);
    }

    pub fn categories(&self, word: &str) -> Option<&BTreeSet<LexCategory>> {
        self.entries.get(word)
    }

    pub fn has(&self, word: &str, cat: LexCategory) -> bool {
        self.entries.get(word).is_some_and(|s| s.contains(&cat))
    }

    pub fn words(&self, cat: LexCategory) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(move |(_, c)| c.contains(&cat)).map(|(w, _)| w.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_merges_categories() {
        let lex = Lexicon::parse_tsv("# c\njoy\tjoy\njoy\tpositive\n\nsad\tsadness\n").unwrap();
        assert_eq!(lex.len(), 2);
        assert!(lex.has("joy", LexCategory::Positive));
        assert!(lex.has("sad", LexCategory::Sadness));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(Lexicon::parse_tsv("joy joy"), Err(Error::Record { line: 1, .. })));
        assert!(matches!(Lexicon::parse_tsv("ok\tjoy\nJoy\tjoy"), Err(Error::Record { line: 2, .. })));
        assert!(Lexicon::parse_tsv("joy\tsurprise").is_err());
    }

    #[test]
    fn builtin_covers_every_category() {
        let lex = Lexicon::builtin();
        for c in LexCategory::ALL {
            assert!(lex.words(c).next().is_some(), "{c}");
        }
    }
}
