use std::collections::HashSet;

use serde::Serialize;

use super::text::words;
use crate::corpus::prices::price_mentions;

pub const AGREEMENT_KEYWORDS: [&str; 5] = ["deal", "sold", "agreed", "i accept", "it's yours"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Buyer,
    Seller,
}

/// Byte offset of the first agreement keyword in `text`, matched on whole
/// words and case-insensitively.
pub fn agreement_offset(text: &str) -> Option<usize> {
    let lower = text.to_ascii_lowercase();
    AGREEMENT_KEYWORDS
        .iter()
        .flat_map(|k| [find_word(&lower, k), find_word(&lower, &k.replace('\'', "\u{2019}"))])
        .flatten()
        .min()
}

fn find_word(haystack: &str, needle: &str) -> Option<usize> {
    let is_word = |c: char| c.is_alphanumeric() || c == '\'' || c == '\u{2019}';
    let mut from = 0;
    while let Some(i) = haystack[from..].find(needle) {
        let start = from + i;
        let end = start + needle.len();
        let before = haystack[..start].chars().next_back().map_or(false, is_word);
        let after = haystack[end..].chars().next().map_or(false, is_word);
        if !before && !after {
            return Some(start);
        }
        from = start + needle.chars().next().map_or(1, char::len_utf8);
    }
    None
}

pub fn has_agreement(text: &str) -> bool {
    agreement_offset(text).is_some()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegotiationMetrics {
    pub agreement: bool,
    pub achieved_price: Option<f64>,
    /// Positive when the buyer pays less than the reference price.
    pub price_improvement: Option<f64>,
    /// Why `price_improvement` is absent.
    pub price_reason: Option<String>,
    pub question_rate: f64,
    pub turn_length: f64,
    pub repetition: f64,
}

/// `1 − distinct / total` over word bigrams; 0 with fewer than two bigrams.
pub fn bigram_repetition(words: &[String]) -> f64 {
    if words.len() < 3 {
        return 0.0;
    }
    let bigrams: Vec<(&str, &str)> = words.windows(2).map(|w| (w[0].as_str(), w[1].as_str())).collect();
    let distinct: HashSet<_> = bigrams.iter().collect();
    (bigrams.len() - distinct.len()) as f64 / bigrams.len() as f64
}

pub fn price_improvement(dataset_final_price: f64, achieved: f64) -> f64 {
    100.0 * (dataset_final_price - achieved) / dataset_final_price
}

/// Outcome and buyer-side language measures of one negotiation.
pub fn negotiation_metrics(turns: &[(Party, &str)], dataset_final_price: Option<f64>) -> NegotiationMetrics {
    let final_seller = turns.iter().rposition(|(p, _)| *p == Party::Seller);
    let cut = final_seller.and_then(|i| agreement_offset(turns[i].1).map(|o| (i, o)));
    let agreement = cut.is_some();

    let mut achieved_price = None;
    if let Some((i, offset)) = cut {
        for (j, (_, text)) in turns[..=i].iter().enumerate() {
            let scope = if j == i { &text[..offset.min(text.len())] } else { text };
            if let Some(&p) = price_mentions(scope).last() {
                achieved_price = Some(p);
            }
        }
    }
    let (price_improvement, price_reason) = match (agreement, achieved_price, dataset_final_price) {
        (false, _, _) => (None, Some("no agreement".to_string())),
        (true, None, _) => (None, Some("no parsable achieved price".to_string())),
        (true, Some(_), None) => (None, Some("no reference price".to_string())),
        (true, Some(_), Some(d)) if !(d > 0.0) => (None, Some("reference price is not positive".to_string())),
        (true, Some(a), Some(d)) => (Some(price_improvement(d, a)), None),
    };

    let buyer: Vec<&str> = turns.iter().filter(|(p, _)| *p == Party::Buyer).map(|(_, t)| *t).collect();
    let (question_rate, turn_length) = if buyer.is_empty() {
        (0.0, 0.0)
    } else {
        let n = buyer.len() as f64;
        (
            buyer.iter().filter(|t| t.contains('?')).count() as f64 / n,
            buyer.iter().map(|t| words(t).len()).sum::<usize>() as f64 / n,
        )
    };
    let all_words: Vec<String> = buyer.iter().flat_map(|t| words(t)).collect();
    NegotiationMetrics {
        agreement,
        achieved_price,
        price_improvement,
        price_reason,
        question_rate,
        turn_length,
        repetition: bigram_repetition(&all_words),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<String> {
        words(s)
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(price_improvement(100.0, 100.0), 0.0);
        assert_eq!(price_improvement(100.0, 90.0), 10.0);
    }

    #[test]
    fn question_rate_example() {
        let m = negotiation_metrics(&[(Party::Buyer, "ok."), (Party::Seller, "hm"), (Party::Buyer, "why?")], None);
        assert_eq!(m.question_rate, 0.5);
        assert_eq!(m.turn_length, 1.0);
        assert!(!m.agreement);
    }

    #[test]
    fn repetition_examples() {
        assert_eq!(bigram_repetition(&w("a b c d")), 0.0);
        assert_eq!(bigram_repetition(&w("go go go go")), 2.0 / 3.0);
        assert_eq!(bigram_repetition(&w("go go")), 0.0);
    }

    #[test]
    fn keywords_match_whole_words() {
        assert!(has_agreement("Deal!"));
        assert!(has_agreement("OK, I accept."));
        assert!(has_agreement("fine, it\u{2019}s yours"));
        assert!(!has_agreement("I'm a dealer"));
        assert!(!has_agreement("unsold"));
    }

    #[test]
    fn achieved_price_is_last_mention_before_keyword() {
        let turns = [
            (Party::Seller, "It's $100."),
            (Party::Buyer, "I can do 80."),
            (Party::Seller, "Make it 90 and it's a deal, not 95."),
        ];
        let m = negotiation_metrics(&turns, Some(100.0));
        assert!(m.agreement);
        assert_eq!(m.achieved_price, Some(90.0));
        assert_eq!(m.price_improvement, Some(10.0));
    }

    #[test]
    fn agreement_without_price_has_reason() {
        let m = negotiation_metrics(&[(Party::Buyer, "please"), (Party::Seller, "Sold.")], Some(50.0));
        assert!(m.agreement);
        assert_eq!(m.price_improvement, None);
        assert_eq!(m.price_reason.as_deref(), Some("no parsable achieved price"));
    }
}
