//! Lexicon, style and negotiation measures over generated text.

pub mod coherence;
pub mod lexicon;
pub mod negotiation;
pub mod politeness;
pub mod text;

use serde::Serialize;

pub use coherence::{cosine, embed, semantic_coherence};
pub use lexicon::{LexCategory, Lexicon};
pub use negotiation::{
    agreement_offset, bigram_repetition, has_agreement, negotiation_metrics, price_improvement, NegotiationMetrics, Party,
    AGREEMENT_KEYWORDS,
};
pub use politeness::{PolitenessFlags, PolitenessPatterns};
pub use text::{
    distress, emotion_counts, parse_keywords, pronoun_ratio, sentiment, words, EmotionCounts, LexiconSentiment, Sentiment,
    SentimentClassifier, DEFAULT_DISTRESS_KEYWORDS,
};

/// Lexicon, patterns and keyword list used to score utterances.
#[derive(Clone, Debug)]
pub struct MetricSuite {
    pub lexicon: Lexicon,
    pub politeness: PolitenessPatterns,
    pub distress_keywords: Vec<String>,
}

impl Default for MetricSuite {
    fn default() -> Self {
        Self {
            lexicon: Lexicon::builtin(),
            politeness: PolitenessPatterns::builtin(),
            distress_keywords: parse_keywords(DEFAULT_DISTRESS_KEYWORDS),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtteranceMetrics {
    pub word_count: usize,
    pub emotions: Vec<(LexCategory, f64)>,
    pub pronoun_ratio: f64,
    pub politeness: PolitenessFlags,
    pub sentiment: Sentiment,
    pub distress: f64,
}

impl MetricSuite {
    pub fn utterance(&self, text: &str) -> UtteranceMetrics {
        let e = emotion_counts(text, &self.lexicon);
        UtteranceMetrics {
            word_count: e.word_count,
            emotions: e.normalized.into_iter().collect(),
            pronoun_ratio: pronoun_ratio(text),
            politeness: self.politeness.features(text),
            sentiment: sentiment(text, &self.lexicon),
            distress: distress(text, &self.lexicon, &self.distress_keywords),
        }
    }
}

impl UtteranceMetrics {
    /// Column names matching [`UtteranceMetrics::values`].
    pub fn columns() -> Vec<String> {
        let mut c = vec!["word_count".to_string()];
        c.extend(LexCategory::ALL.iter().map(|k| k.as_str().to_string()));
        c.push("pronoun_ratio".into());
        c.extend(PolitenessFlags::NAMES.iter().map(|s| s.to_string()));
        c.push("positive_sentiment".into());
        c.push("distress".into());
        c
    }

    /// Every measure as a number; flags are 0 or 1.
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![self.word_count as f64];
        v.extend(self.emotions.iter().map(|(_, x)| *x));
        v.push(self.pronoun_ratio);
        v.extend(self.politeness.values().iter().map(|&b| f64::from(u8::from(b))));
        v.push(f64::from(u8::from(self.sentiment == Sentiment::Positive)));
        v.push(self.distress);
        v
    }

    pub fn emotion(&self, cat: LexCategory) -> f64 {
        self.emotions.iter().find(|(c, _)| *c == cat).map_or(0.0, |(_, x)| *x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_match_values() {
        let s = MetricSuite::default();
        let m = s.utterance("Thanks, I am so happy and calm!");
        assert_eq!(UtteranceMetrics::columns().len(), m.values().len());
        assert!(m.politeness.gratitude);
        assert!(m.emotion(LexCategory::Positive) > 0.0);
    }
}
