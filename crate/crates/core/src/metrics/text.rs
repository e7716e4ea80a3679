use std::collections::BTreeMap;

use serde::Serialize;

use super::lexicon::{LexCategory, Lexicon};

/// Lowercased words: maximal runs of alphanumerics and apostrophes, with
/// apostrophes trimmed from both ends. Curly apostrophes become `'`.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
        .map(|w| w.replace('\u{2019}', "'").trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmotionCounts {
    pub word_count: usize,
    pub counts: BTreeMap<LexCategory, usize>,
    /// `counts / word_count`, all zero for empty text.
    pub normalized: BTreeMap<LexCategory, f64>,
}

pub fn emotion_counts(text: &str, lexicon: &Lexicon) -> EmotionCounts {
    let ws = words(text);
    let mut counts: BTreeMap<LexCategory, usize> = LexCategory::ALL.iter().map(|&c| (c, 0)).collect();
    for w in &ws {
        if let Some(cats) = lexicon.categories(w) {
            for c in cats {
                *counts.get_mut(c).expect("all categories present") += 1;
            }
        }
    }
    let n = ws.len();
    let normalized = counts
        .iter()
        .map(|(&c, &k)| (c, if n == 0 { 0.0 } else { k as f64 / n as f64 }))
        .collect();
    EmotionCounts {
        word_count: n,
        counts,
        normalized,
    }
}

pub const FIRST_PERSON: [&str; 5] = ["i", "me", "my", "mine", "myself"];

/// Share of words that are first-person singular pronouns.
pub fn pronoun_ratio(text: &str) -> f64 {
    let ws = words(text);
    if ws.is_empty() {
        return 0.0;
    }
    let hits = ws.iter().filter(|w| FIRST_PERSON.contains(&w.as_str())).count();
    hits as f64 / ws.len() as f64
}

pub const DEFAULT_DISTRESS_KEYWORDS: &str = include_str!("../../../../fixtures/distress_keywords.txt");

/// Keyword list, one word per line.
pub fn parse_keywords(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Distress keyword hits plus raw fear, sadness and anger lexicon hits.
pub fn distress(text: &str, lexicon: &Lexicon, keywords: &[String]) -> f64 {
    let ws = words(text);
    let kw = ws.iter().filter(|w| keywords.iter().any(|k| k == *w)).count();
    let emo = emotion_counts(text, lexicon);
    (kw + emo.counts[&LexCategory::Fear] + emo.counts[&LexCategory::Sadness] + emo.counts[&LexCategory::Anger]) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sentiment {
    Positive,
    Negative,
}

/// Binary sentiment classifier behind a swappable interface.
pub trait SentimentClassifier {
    fn classify(&self, text: &str) -> Sentiment;
}

/// Positive when positive-category hits are at least negative-category hits.
pub struct LexiconSentiment<'a>(pub &'a Lexicon);

impl SentimentClassifier for LexiconSentiment<'_> {
    fn classify(&self, text: &str) -> Sentiment {
        sentiment(text, self.0)
    }
}

pub fn sentiment(text: &str, lexicon: &Lexicon) -> Sentiment {
    let e = emotion_counts(text, lexicon);
    if e.counts[&LexCategory::Positive] >= e.counts[&LexCategory::Negative] {
        Sentiment::Positive
    } else {
        Sentiment::Negative
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicon {
        Lexicon::parse_tsv("joy\tjoy\nsad\tsadness\ngreat\tpositive\nwonderful\tpositive\nterrible\tnegative\nawful\tnegative\nafraid\tfear\n").unwrap()
    }

    #[test]
    fn word_splitting() {
        assert_eq!(words("It is mine-field"), vec!["it", "is", "mine", "field"]);
        assert_eq!(words("I'm  'quoted' so\u{2019}s"), vec!["i'm", "quoted", "so's"]);
        assert!(words("  ...  ").is_empty());
    }

    #[test]
    fn emotion_examples() {
        let e = emotion_counts("joy joy sad bye", &lex());
        assert_eq!(e.normalized[&LexCategory::Joy], 0.5);
        assert_eq!(e.normalized[&LexCategory::Sadness], 0.25);
        let empty = emotion_counts("", &lex());
        assert_eq!(empty.word_count, 0);
        assert!(empty.normalized.values().all(|&v| v == 0.0));
        assert!(emotion_counts("plain words here", &lex()).counts.values().all(|&v| v == 0));
    }

    #[test]
    fn pronoun_examples() {
        assert_eq!(pronoun_ratio("I love my dog"), 0.5);
        assert_eq!(pronoun_ratio("I"), 1.0);
        assert_eq!(pronoun_ratio("It is mine-field"), 0.25);
        assert_eq!(pronoun_ratio(""), 0.0);
    }

    #[test]
    fn sentiment_examples() {
        assert_eq!(sentiment("great wonderful", &lex()), Sentiment::Positive);
        assert_eq!(sentiment("terrible awful", &lex()), Sentiment::Negative);
        assert_eq!(sentiment("", &lex()), Sentiment::Positive);
        assert_eq!(LexiconSentiment(&lex()).classify("awful"), Sentiment::Negative);
    }

    #[test]
    fn distress_examples() {
        let kw = parse_keywords(DEFAULT_DISTRESS_KEYWORDS);
        assert_eq!(distress("", &lex(), &kw), 0.0);
        assert!(distress("anxious and stressed", &lex(), &kw) >= 2.0);
        assert_eq!(distress("I am afraid", &lex(), &kw), 1.0);
    }
}
