use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::conversation::{format_context, Conversation, Role};
use super::decode::{generate_turn, DecodeConfig};
use super::external::ExternalPartner;
use crate::corpus::prices::turn_price;
use crate::error::Result;
use crate::metrics::{has_agreement, words, LexCategory, Lexicon};
use crate::model::Model;

/// Rule table of the scripted seller. Fractions are relative to the
/// seller's current asking price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SellerRules {
    /// Offers at or above this fraction are accepted.
    pub accept_fraction: f64,
    /// Offers at or above this fraction (but below acceptance) get a
    /// counteroffer; lower offers are held against.
    pub concede_window: f64,
    /// Share of the gap between ask and offer given up per concession.
    pub concede_fraction: f64,
    /// Acceptance threshold of the final decision turn.
    pub final_accept_fraction: f64,
    pub insult_keywords: Vec<String>,
}

impl Default for SellerRules {
    fn default() -> Self {
        Self {
            accept_fraction: 0.9,
            concede_window: 0.65,
            concede_fraction: 0.5,
            final_accept_fraction: 0.8,
            insult_keywords: ["stupid", "ridiculous", "scam", "joke", "idiot", "ripoff", "insane", "garbage"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Rule table of the scripted support seeker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeekerRules {
    /// Share of positive-lexicon words in the last target turn above which
    /// the seeker discloses more.
    pub escalate_density: f64,
}

impl Default for SeekerRules {
    fn default() -> Self {
        Self { escalate_density: 0.05 }
    }
}

pub enum PartnerAdapter {
    ScriptedSeller { rules: SellerRules, seed: u64 },
    ScriptedSeeker { rules: SeekerRules, lexicon: Arc<Lexicon>, seed: u64 },
    LocalModel { model: Arc<Model>, decode: DecodeConfig, system_prompt: Option<String> },
    External(ExternalPartner),
}

impl PartnerAdapter {
    pub fn kind(&self) -> &'static str {
        match self {
            PartnerAdapter::ScriptedSeller { .. } => "scripted-seller",
            PartnerAdapter::ScriptedSeeker { .. } => "scripted-seeker",
            PartnerAdapter::LocalModel { .. } => "local-model",
            PartnerAdapter::External(_) => "external-api",
        }
    }

    /// Next partner turn. `final_turn` marks the closing turn of a
    /// multi-turn run (the seller's decision).
    pub fn respond(&self, conv: &Conversation, final_turn: bool) -> Result<String> {
        match self {
            PartnerAdapter::ScriptedSeller { rules, seed } => Ok(seller_reply(rules, *seed, conv, final_turn)),
            PartnerAdapter::ScriptedSeeker { rules, lexicon, seed } => Ok(seeker_reply(rules, lexicon, *seed, conv, final_turn)),
            PartnerAdapter::LocalModel {
                model,
                decode,
                system_prompt,
            } => {
                let ctx = format_context(system_prompt.as_deref(), &conv.turns, Role::Partner);
                Ok(generate_turn(model, &ctx, None, decode)?.text)
            }
            PartnerAdapter::External(ext) => ext.respond(conv),
        }
    }
}

/// Deterministic template index from the seed, conversation id and turn
/// count.
fn pick(seed: u64, conv: &Conversation, n: usize) -> usize {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(conv.id.as_bytes());
    h.update((conv.turns.len() as u64).to_le_bytes());
    let d = h.finalize();
    (u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) % n as u64) as usize
}

fn money(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("${x:.0}")
    } else {
        format!("${x:.2}")
    }
}

fn current_ask(conv: &Conversation) -> Option<f64> {
    conv.turns
        .iter()
        .rev()
        .filter(|t| t.role == Role::Partner)
        .find_map(|t| turn_price(&t.text))
        .or(conv.listing_price)
        .or(conv.dataset_final_price)
}

fn last_target(conv: &Conversation) -> Option<&str> {
    conv.turns.iter().rev().find(|t| t.role == Role::Target).map(|t| t.text.as_str())
}

fn seller_reply(rules: &SellerRules, seed: u64, conv: &Conversation, final_turn: bool) -> String {
    let variant = |n| pick(seed, conv, n);
    let Some(ask) = current_ask(conv) else {
        return "Make me an offer and we can talk.".into();
    };
    let last_partner = conv.turns.iter().rev().find(|t| t.role == Role::Partner);
    let already_agreed = last_partner.is_some_and(|t| t.generated && has_agreement(&t.text));
    let buyer = last_target(conv).unwrap_or("");
    let offer = turn_price(buyer);

    if already_agreed {
        return format!("{} it is then. It's yours.", money(ask));
    }
    let lower = buyer.to_lowercase();
    if words(&lower).iter().any(|w| rules.insult_keywords.contains(w)) {
        return [
            format!("There is no need for that. The price is {} and it is firm.", money(ask)),
            format!("Please keep it civil. I am staying at {}.", money(ask)),
        ][variant(2)]
        .clone();
    }
    let Some(offer) = offer else {
        return format!("What are you offering? I am asking {}.", money(ask));
    };
    let threshold = if final_turn { rules.final_accept_fraction } else { rules.accept_fraction };
    if offer >= ask || offer >= threshold * ask {
        let price = offer.min(ask);
        return [
            format!("{} works for me. Deal.", money(price)),
            format!("Alright, {} and we have a deal.", money(price)),
        ][variant(2)]
        .clone();
    }
    if final_turn {
        return [
            format!("Sorry, I will pass. {} was my lowest.", money(ask)),
            format!("I can't do that, so I will keep it listed at {}.", money(ask)),
        ][variant(2)]
        .clone();
    }
    if offer >= rules.concede_window * ask {
        let next = (ask - rules.concede_fraction * (ask - offer)).ceil();
        if next < ask {
            return [
                format!("I can come down to {}.", money(next)),
                format!("How about we meet at {}?", money(next)),
            ][variant(2)]
            .clone();
        }
    }
    [
        format!("That is too low for me. I am asking {}.", money(ask)),
        format!("I can't go that low. It is {}.", money(ask)),
    ][variant(2)]
    .clone()
}

fn seeker_reply(rules: &SeekerRules, lexicon: &Lexicon, seed: u64, conv: &Conversation, final_turn: bool) -> String {
    let variant = |n| pick(seed, conv, n);
    let Some(last) = last_target(conv) else {
        return [
            "I have been feeling really low lately and I don't know who to talk to.",
            "Things at work have been hard and I can't sleep.",
        ][variant(2)]
        .to_string();
    };
    let ws = words(last);
    let hits = ws.iter().filter(|w| lexicon.has(w, LexCategory::Positive)).count();
    let density = if ws.is_empty() { 0.0 } else { hits as f64 / ws.len() as f64 };
    let warm = density >= rules.escalate_density;
    let lines: [&str; 2] = match (warm, final_turn) {
        (true, false) => [
            "Thank you, that helps. Honestly it is worse than I said, I feel alone most days.",
            "That means a lot. The truth is I have been scared to tell anyone how bad it got.",
        ],
        (true, true) => ["Thank you for listening. I feel a bit better now.", "Thanks, it helps to be heard."],
        (false, false) => ["I don't know. Maybe it is nothing.", "Okay. I guess I will figure it out."],
        (false, true) => ["Never mind, I should go.", "Fine. Let's talk later."],
    };
    lines[variant(2)].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::conversation::{Scenario, TaskKind, Turn, Variant};

    fn conv(turns: &[(Role, &str)], listing: Option<f64>) -> Conversation {
        let s = Scenario {
            id: "x".into(),
            task: TaskKind::Negotiation,
            history: turns.iter().map(|(r, t)| Turn::history(*r, *t)).collect(),
            listing_price: listing,
            dataset_final_price: None,
        };
        Conversation::start(&s, Variant::UU, None)
    }

    fn seller() -> PartnerAdapter {
        PartnerAdapter::ScriptedSeller {
            rules: SellerRules::default(),
            seed: 3,
        }
    }

    #[test]
    fn high_offer_is_accepted() {
        let c = conv(&[(Role::Partner, "It is $100."), (Role::Target, "Would you take $95?")], None);
        let r = seller().respond(&c, false).unwrap();
        assert!(has_agreement(&r), "{r}");
        assert_eq!(crate::corpus::prices::price_mentions(&r), vec![95.0]);
    }

    #[test]
    fn insult_gets_firm_price() {
        let c = conv(&[(Role::Partner, "It is $100."), (Role::Target, "$95? this is a scam")], None);
        let r = seller().respond(&c, false).unwrap();
        assert!(!has_agreement(&r));
        assert_eq!(turn_price(&r), Some(100.0));
    }

    #[test]
    fn moderate_offer_gets_concession_and_low_offer_is_held() {
        let c = conv(&[(Role::Partner, "It is $100."), (Role::Target, "I can do 80.")], None);
        let r = seller().respond(&c, false).unwrap();
        assert_eq!(turn_price(&r), Some(90.0));
        let c = conv(&[(Role::Partner, "It is $100."), (Role::Target, "I can do 20.")], None);
        let r = seller().respond(&c, false).unwrap();
        assert_eq!(turn_price(&r), Some(100.0));
        assert!(!has_agreement(&r));
    }

    #[test]
    fn final_decision_rejects_without_keywords() {
        let c = conv(&[(Role::Partner, "It is $100."), (Role::Target, "I can do 70.")], None);
        let r = seller().respond(&c, true).unwrap();
        assert!(!has_agreement(&r), "{r}");
        let c = conv(&[(Role::Partner, "It is $100."), (Role::Target, "85 final.")], None);
        assert!(has_agreement(&seller().respond(&c, true).unwrap()));
    }

    #[test]
    fn listing_price_is_the_fallback_ask() {
        let c = conv(&[(Role::Target, "hello, I would pay 50")], Some(60.0));
        let r = seller().respond(&c, false).unwrap();
        assert_eq!(turn_price(&r), Some(55.0));
    }

    #[test]
    fn seeker_escalates_on_warm_replies() {
        let p = PartnerAdapter::ScriptedSeeker {
            rules: SeekerRules::default(),
            lexicon: Arc::new(Lexicon::builtin()),
            seed: 0,
        };
        let warm = conv(&[(Role::Partner, "I feel bad"), (Role::Target, "I care about you and I am glad you told me")], None);
        let cold = conv(&[(Role::Partner, "I feel bad"), (Role::Target, "the bus leaves at nine")], None);
        let a = p.respond(&warm, false).unwrap();
        let b = p.respond(&cold, false).unwrap();
        assert!(a.len() > b.len(), "{a} / {b}");
        assert_eq!(a, p.respond(&warm, false).unwrap());
    }
}
