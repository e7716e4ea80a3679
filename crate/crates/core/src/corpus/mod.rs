//! Dialogue corpora, eligibility filters and fixture loaders.

pub mod prices;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::{parse_suite, DiagnosticPair};
use crate::dialogue::{Role, Scenario, TaskKind, Turn};
use crate::error::{Error, Result};
use crate::steering::ContrastiveSet;
use prices::turn_price;

/// Speaker labels accepted in corpus files. Sellers and support seekers are
/// simulated by the partner; buyers and supporters are the target model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "A")]
    A,
    #[serde(rename = "B")]
    B,
    #[serde(rename = "seller")]
    Seller,
    #[serde(rename = "buyer")]
    Buyer,
    #[serde(rename = "seeker")]
    Seeker,
    #[serde(rename = "supporter")]
    Supporter,
}

impl Speaker {
    pub fn role(self) -> Role {
        match self {
            Speaker::A | Speaker::Seller | Speaker::Seeker => Role::Partner,
            Speaker::B | Speaker::Buyer | Speaker::Supporter => Role::Target,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTurn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDialogue {
    pub id: String,
    pub turns: Vec<RawTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listing_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_final_price: Option<f64>,
}

impl RawDialogue {
    /// Scenario whose history is the first `prefix_len` turns.
    pub fn to_scenario(&self, task: TaskKind, prefix_len: usize) -> Scenario {
        Scenario {
            id: self.id.clone(),
            task,
            history: self.turns[..prefix_len.min(self.turns.len())]
                .iter()
                .map(|t| Turn::history(t.speaker.role(), t.text.clone()))
                .collect(),
            listing_price: self.listing_price,
            dataset_final_price: self.dataset_final_price,
        }
    }

    pub fn history(&self) -> Vec<Turn> {
        self.turns.iter().map(|t| Turn::history(t.speaker.role(), t.text.clone())).collect()
    }
}

pub fn parse_dialogues(text: &str) -> Result<Vec<RawDialogue>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: RawDialogue = serde_json::from_str(line).map_err(|e| Error::record(i + 1, e.to_string()))?;
        if d.turns.is_empty() {
            return Err(Error::record(i + 1, format!("dialogue `{}` has no turns", d.id)));
        }
        if !seen.insert(d.id.clone()) {
            return Err(Error::DuplicateId(d.id));
        }
        out.push(d);
    }
    Ok(out)
}

pub fn load_dialogues(path: &Path) -> Result<Vec<RawDialogue>> {
    parse_dialogues(&std::fs::read_to_string(path)?)
}

pub const SUPPORT_MIN_TURNS: usize = 6;
pub const NEGOTIATION_MIN_TURNS: usize = 5;

pub fn filter_support(dialogues: &[RawDialogue]) -> Vec<RawDialogue> {
    dialogues.iter().filter(|d| d.turns.len() >= SUPPORT_MIN_TURNS).cloned().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    TooFewTurns,
    NoParsablePrices,
    NoConcession,
    /// No buyer turn follows the concession, or it is the final turn.
    NoBuyerContinuation,
}

impl fmt::Display for Exclusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Exclusion::TooFewTurns => "too_few_turns",
            Exclusion::NoParsablePrices => "no_parsable_prices",
            Exclusion::NoConcession => "no_concession",
            Exclusion::NoBuyerContinuation => "no_buyer_continuation",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Eligible {
    pub dialogue: RawDialogue,
    /// Index of the first seller turn undercutting that seller's last quote.
    pub concession_turn: usize,
    /// Turns kept as history; ends with the buyer reply to the concession.
    pub prefix_len: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NegotiationFilter {
    pub eligible: Vec<Eligible>,
    pub excluded: Vec<(String, Exclusion)>,
}

pub fn negotiation_eligibility(d: &RawDialogue) -> std::result::Result<(usize, usize), Exclusion> {
    if d.turns.len() < NEGOTIATION_MIN_TURNS {
        return Err(Exclusion::TooFewTurns);
    }
    let mut last_quote: Option<f64> = None;
    let mut any_price = false;
    let mut concession = None;
    for (i, t) in d.turns.iter().enumerate() {
        let Some(p) = turn_price(&t.text) else { continue };
        any_price = true;
        if t.speaker.role() != Role::Partner {
            continue;
        }
        if last_quote.is_some_and(|q| p < q) {
            concession = Some(i);
            break;
        }
        last_quote = Some(p);
    }
    if !any_price {
        return Err(Exclusion::NoParsablePrices);
    }
    let c = concession.ok_or(Exclusion::NoConcession)?;
    let reply = d.turns[c + 1..]
        .iter()
        .position(|t| t.speaker.role() == Role::Target)
        .map(|j| c + 1 + j)
        .ok_or(Exclusion::NoBuyerContinuation)?;
    if reply + 1 >= d.turns.len() {
        return Err(Exclusion::NoBuyerContinuation);
    }
    Ok((c, reply + 1))
}

pub fn filter_negotiation(dialogues: &[RawDialogue]) -> NegotiationFilter {
    let mut out = NegotiationFilter::default();
    for d in dialogues {
        match negotiation_eligibility(d) {
            Ok((concession_turn, prefix_len)) => out.eligible.push(Eligible {
                dialogue: d.clone(),
                concession_turn,
                prefix_len,
            }),
            Err(reason) => out.excluded.push((d.id.clone(), reason)),
        }
    }
    out
}

/// The last `⌈fraction · n⌉` items in input order.
pub fn tail_fraction<T: Clone>(items: &[T], fraction: f64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let k = ((fraction * items.len() as f64).ceil() as usize).min(items.len());
    Ok(items[items.len() - k..].to_vec())
}

/// Diagnostic suite loader that rejects empty files.
pub fn load_diagnostic_suite(path: &Path) -> Result<Vec<DiagnosticPair>> {
    let pairs = parse_suite(&std::fs::read_to_string(path)?)?;
    if pairs.is_empty() {
        return Err(Error::Invalid(format!("diagnostic suite {} is empty", path.display())));
    }
    Ok(pairs)
}

pub fn load_contrastive_sets(path: &Path, task: Option<&str>) -> Result<ContrastiveSet> {
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::Invalid(format!("contrastive file {} is empty", path.display())));
    }
    ContrastiveSet::parse_jsonl(&text, task)
}

/// Language-model training sequences. Each starts with BOS at a partner
/// turn and holds as many following turns as fit in `max_tokens`; a chunk
/// reaching the end of its dialogue ends with EOS.
pub fn training_sequences(dialogues: &[RawDialogue], max_tokens: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for d in dialogues {
        let turns = d.history();
        for start in (0..turns.len()).filter(|&i| turns[i].role == Role::Partner) {
            let mut seq = vec![crate::model::tokenizer::BOS];
            let mut end = start;
            while end < turns.len() {
                let mut piece = crate::model::tokenizer::tokenize(&crate::dialogue::format_turn(&turns[end]));
                piece.push(crate::model::tokenizer::SEP);
                if seq.len() + piece.len() > max_tokens && end > start {
                    break;
                }
                seq.extend(piece);
                end += 1;
            }
            if end == turns.len() {
                seq.push(crate::model::tokenizer::EOS);
            }
            seq.truncate(max_tokens);
            out.push(seq);
        }
    }
    out
}

#[cfg(test)]
mod tests;
