use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::tokenizer::{tokenize, BOS, SEP};
use crate::steering::{SteerConfig, SteerMode};

/// Which side of the conversation produced a turn. The target is the model
/// under study; the partner is the simulated interlocutor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Partner,
    Target,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Partner => "A",
            Role::Target => "B",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// The partner seeks support; the target responds.
    Support,
    /// The partner sells; the target buys.
    Negotiation,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Support => "support",
            TaskKind::Negotiation => "negotiation",
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "support" => Ok(TaskKind::Support),
            "negotiation" => Ok(TaskKind::Negotiation),
            _ => Err(Error::Invalid(format!("unknown task `{s}` (expected support or negotiation)"))),
        }
    }
}

/// Steering applied to one generated turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteerMeta {
    pub alpha: f64,
    pub layer: usize,
    pub window_k: usize,
    pub mode: SteerMode,
}

impl From<&SteerConfig> for SteerMeta {
    fn from(c: &SteerConfig) -> Self {
        Self {
            alpha: c.alpha,
            layer: c.layer,
            window_k: c.window_k,
            mode: c.mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    /// False for turns taken from the dataset history.
    #[serde(default)]
    pub generated: bool,
    #[serde(default)]
    pub steered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steering: Option<SteerMeta>,
}

impl Turn {
    pub fn history(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            generated: false,
            steered: false,
            steering: None,
        }
    }

    pub fn generated(role: Role, text: impl Into<String>, steering: Option<SteerMeta>) -> Self {
        Self {
            role,
            text: text.into(),
            generated: true,
            steered: steering.is_some(),
            steering,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    UU,
    US,
    SU,
    SS,
    #[serde(rename = "single_turn")]
    SingleTurn,
    #[serde(rename = "prompt_baseline")]
    PromptBaseline,
}

impl Variant {
    pub const MULTI_TURN: [Variant; 4] = [Variant::UU, Variant::US, Variant::SU, Variant::SS];

    /// Steering flags of the two target turns; `None` for single-turn
    /// variants.
    pub fn schedule(self) -> Option<[bool; 2]> {
        match self {
            Variant::UU => Some([false, false]),
            Variant::US => Some([false, true]),
            Variant::SU => Some([true, false]),
            Variant::SS => Some([true, true]),
            Variant::SingleTurn | Variant::PromptBaseline => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::UU => "UU",
            Variant::US => "US",
            Variant::SU => "SU",
            Variant::SS => "SS",
            Variant::SingleTurn => "single_turn",
            Variant::PromptBaseline => "prompt_baseline",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "UU" | "uu" => Ok(Variant::UU),
            "US" | "us" => Ok(Variant::US),
            "SU" | "su" => Ok(Variant::SU),
            "SS" | "ss" => Ok(Variant::SS),
            "single_turn" => Ok(Variant::SingleTurn),
            "prompt_baseline" => Ok(Variant::PromptBaseline),
            _ => Err(Error::Invalid(format!("unknown variant `{s}`"))),
        }
    }
}

/// Starting point of an experiment: dataset history up to the point where
/// simulation begins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub task: TaskKind,
    pub history: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listing_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_final_price: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub task: TaskKind,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listing_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_final_price: Option<f64>,
}

impl Conversation {
    pub fn start(scenario: &Scenario, variant: Variant, arm: Option<&str>) -> Self {
        Self {
            id: scenario.id.clone(),
            task: scenario.task,
            variant,
            arm: arm.map(str::to_string),
            turns: scenario.history.clone(),
            listing_price: scenario.listing_price,
            dataset_final_price: scenario.dataset_final_price,
        }
    }

    /// Generated target turns, in order.
    pub fn target_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.generated && t.role == Role::Target)
    }

    /// Steering flags of the generated target turns.
    pub fn steer_flags(&self) -> Vec<bool> {
        self.target_turns().map(|t| t.steered).collect()
    }

    pub fn to_jsonl_line(&self) -> String {
        serde_json::to_string(self).expect("conversation serializes")
    }
}

/// Text form of one turn: `"{label}: {text}\n"`.
pub fn format_turn(turn: &Turn) -> String {
    format!("{}: {}\n", turn.role.label(), turn.text)
}

/// BOS, optional system prompt, each turn followed by SEP, then the cue for
/// `next`.
pub fn format_context(system_prompt: Option<&str>, turns: &[Turn], next: Role) -> Vec<u32> {
    let mut toks = vec![BOS];
    if let Some(p) = system_prompt {
        toks.extend(tokenize(p));
        toks.push(SEP);
    }
    for t in turns {
        toks.extend(tokenize(&format_turn(t)));
        toks.push(SEP);
    }
    toks.extend(tokenize(&format!("{}: ", next.label())));
    toks
}

/// Token form of a complete dialogue for language-model training.
pub fn format_dialogue(turns: &[Turn]) -> Vec<u32> {
    let mut toks = vec![BOS];
    for t in turns {
        toks.extend(tokenize(&format_turn(t)));
        toks.push(SEP);
    }
    toks.push(crate::model::tokenizer::EOS);
    toks
}
