//! Cloze-style diagnostic prompt pairs and their JSONL format.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::tokenizer::{tokenize, BOS, PAD};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    OfferAcceptance,
    Counteroffer,
    CriticalReasoning,
    Realism,
    Empathy,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::OfferAcceptance,
        Category::Counteroffer,
        Category::CriticalReasoning,
        Category::Realism,
        Category::Empathy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::OfferAcceptance => "offer_acceptance",
            Category::Counteroffer => "counteroffer",
            Category::CriticalReasoning => "critical_reasoning",
            Category::Realism => "realism",
            Category::Empathy => "empathy",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown category `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Aligned,
    Misaligned,
}

/// One suite record. `expected_token` and `undesired_token` must each be a
/// single byte so the answer is exactly one token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticPrompt {
    pub pair_id: String,
    pub category: Category,
    pub variant: Variant,
    pub prompt: String,
    pub expected_token: String,
    pub undesired_token: String,
    /// Full completion word, informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_completion: Option<String>,
}

impl DiagnosticPrompt {
    pub fn expected_id(&self) -> Result<u32> {
        single_token(&self.expected_token, "expected_token")
    }

    pub fn undesired_id(&self) -> Result<u32> {
        single_token(&self.undesired_token, "undesired_token")
    }

    /// BOS followed by the prompt bytes.
    pub fn tokens(&self) -> Vec<u32> {
        let mut t = vec![BOS];
        t.extend(tokenize(&self.prompt));
        t
    }
}

fn single_token(text: &str, field: &str) -> Result<u32> {
    match tokenize(text).as_slice() {
        [id] => Ok(*id),
        other => Err(Error::Invalid(format!(
            "{field} `{text}` encodes to {} tokens, expected exactly one",
            other.len()
        ))),
    }
}

/// An aligned prompt and its misaligned counterpart. The metric always reads
/// `logit(aligned_id) − logit(misaligned_id)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticPair {
    pub pair_id: String,
    pub category: Category,
    pub aligned: DiagnosticPrompt,
    pub misaligned: DiagnosticPrompt,
}

impl DiagnosticPair {
    pub fn new(aligned: DiagnosticPrompt, misaligned: DiagnosticPrompt) -> Result<Self> {
        if aligned.variant != Variant::Aligned || misaligned.variant != Variant::Misaligned {
            return Err(Error::Invalid(format!("pair `{}` needs one record of each variant", aligned.pair_id)));
        }
        if aligned.pair_id != misaligned.pair_id || aligned.category != misaligned.category {
            return Err(Error::Invalid(format!(
                "records `{}` and `{}` disagree on pair id or category",
                aligned.pair_id, misaligned.pair_id
            )));
        }
        let (a, b) = (aligned.expected_id()?, aligned.undesired_id()?);
        if a == b {
            return Err(Error::Invalid(format!("pair `{}` uses the same token for both answers", aligned.pair_id)));
        }
        if misaligned.expected_id()? != b || misaligned.undesired_id()? != a {
            return Err(Error::Invalid(format!(
                "pair `{}`: misaligned answers must mirror the aligned record",
                aligned.pair_id
            )));
        }
        Ok(Self {
            pair_id: aligned.pair_id.clone(),
            category: aligned.category,
            aligned,
            misaligned,
        })
    }

    pub fn aligned_id(&self) -> u32 {
        self.aligned.expected_id().expect("validated at construction")
    }

    pub fn misaligned_id(&self) -> u32 {
        self.aligned.undesired_id().expect("validated at construction")
    }

    /// Token sequences for both variants under `policy`.
    pub fn tokens(&self, policy: LengthPolicy) -> Result<PairTokens> {
        PairTokens::new(self.aligned.tokens(), self.misaligned.tokens(), policy)
    }
}

/// How unequal prompt lengths within a pair are reconciled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LengthPolicy {
    /// Left-pad the shorter prompt with PAD so the final positions line up.
    #[default]
    LeftPad,
    /// Reject pairs of unequal length.
    Strict,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairTokens {
    pub aligned: Vec<u32>,
    pub misaligned: Vec<u32>,
}

impl PairTokens {
    pub fn new(mut aligned: Vec<u32>, mut misaligned: Vec<u32>, policy: LengthPolicy) -> Result<Self> {
        if aligned.is_empty() || misaligned.is_empty() {
            return Err(Error::Precondition("empty prompt in pair".into()));
        }
        if aligned.len() != misaligned.len() {
            if policy == LengthPolicy::Strict {
                return Err(Error::Precondition(format!(
                    "pair lengths differ ({} vs {}) and no alignment policy is set",
                    aligned.len(),
                    misaligned.len()
                )));
            }
            let t = aligned.len().max(misaligned.len());
            for seq in [&mut aligned, &mut misaligned] {
                let pad = t - seq.len();
                seq.splice(0..0, std::iter::repeat(PAD).take(pad));
            }
        }
        Ok(Self { aligned, misaligned })
    }

    pub fn len(&self) -> usize {
        self.aligned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aligned.is_empty()
    }
}

/// Parses JSONL suite records and groups them into pairs in order of first
/// appearance.
pub fn parse_suite(text: &str) -> Result<Vec<DiagnosticPair>> {
    let mut order: Vec<String> = Vec::new();
    let mut halves: BTreeMap<String, (Option<DiagnosticPrompt>, Option<DiagnosticPrompt>)> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DiagnosticPrompt = serde_json::from_str(line).map_err(|e| Error::record(i + 1, e.to_string()))?;
        let named = |e: Error| Error::record(i + 1, format!("prompt `{}`: {e}", rec.pair_id));
        rec.expected_id().map_err(named)?;
        rec.undesired_id().map_err(named)?;
        let entry = halves.entry(rec.pair_id.clone()).or_insert_with(|| {
            order.push(rec.pair_id.clone());
            (None, None)
        });
        let slot = match rec.variant {
            Variant::Aligned => &mut entry.0,
            Variant::Misaligned => &mut entry.1,
        };
        if slot.is_some() {
            return Err(Error::DuplicateId(format!("{} ({:?})", rec.pair_id, rec.variant)));
        }
        *slot = Some(rec);
    }
    order
        .into_iter()
        .map(|id| match halves.remove(&id) {
            Some((Some(a), Some(m))) => DiagnosticPair::new(a, m),
            _ => Err(Error::Invalid(format!("pair `{id}` is missing a variant"))),
        })
        .collect()
}

pub fn load_suite(path: &std::path::Path) -> Result<Vec<DiagnosticPair>> {
    parse_suite(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, variant: &str, prompt: &str, exp: &str, und: &str) -> String {
        format!(
            r#"{{"pair_id":"{id}","category":"empathy","variant":"{variant}","prompt":"{prompt}","expected_token":"{exp}","undesired_token":"{und}"}}"#
        )
    }

    #[test]
    fn parses_pairs_in_order() {
        let text = [
            rec("b", "aligned", "Sad news. That's ", "d", "f"),
            rec("a", "misaligned", "Fine news. That's ", "f", "d"),
            rec("b", "misaligned", "Odd news. That's ", "f", "d"),
            rec("a", "aligned", "Bad news. That's ", "d", "f"),
        ]
        .join("\n");
        let pairs = parse_suite(&text).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].pair_id, "b");
        assert_eq!(pairs[0].aligned_id(), b'd' as u32);
        assert_eq!(pairs[0].misaligned_id(), b'f' as u32);
    }

    #[test]
    fn rejects_multi_token_answers() {
        let text = rec("a", "aligned", "x", "devastating", "f");
        assert!(matches!(parse_suite(&text), Err(Error::Record { line: 1, .. })));
    }

    #[test]
    fn rejects_duplicates_and_orphans() {
        let dup = [rec("a", "aligned", "x", "d", "f"), rec("a", "aligned", "y", "d", "f")].join("\n");
        assert!(matches!(parse_suite(&dup), Err(Error::DuplicateId(_))));
        assert!(parse_suite(&rec("a", "aligned", "x", "d", "f")).is_err());
    }

    #[test]
    fn rejects_unmirrored_answers() {
        let text = [rec("a", "aligned", "x", "d", "f"), rec("a", "misaligned", "y", "d", "f")].join("\n");
        assert!(parse_suite(&text).is_err());
    }

    #[test]
    fn left_pads_shorter_prompt() {
        let p = PairTokens::new(vec![BOS, 1, 2, 3], vec![BOS, 9], LengthPolicy::LeftPad).unwrap();
        assert_eq!(p.misaligned, vec![PAD, PAD, BOS, 9]);
        assert_eq!(p.aligned, vec![BOS, 1, 2, 3]);
        assert!(PairTokens::new(vec![BOS, 1], vec![BOS], LengthPolicy::Strict).is_err());
    }
}
