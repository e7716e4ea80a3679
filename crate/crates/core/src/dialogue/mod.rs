//! Greedy generation and single- and multi-turn experiment drivers.

mod conversation;
mod decode;
mod external;
mod partner;
mod run;

pub use conversation::{
    format_context, format_dialogue, format_turn, Conversation, Role, Scenario, SteerMeta, TaskKind, Turn, Variant,
};
pub use decode::{generate_turn, DecodeConfig, Generation, Steer, StopReason, DEFAULT_REPETITION_PENALTY};
pub use external::{ExternalConfig, ExternalPartner};
pub use partner::{PartnerAdapter, SeekerRules, SellerRules};
pub use run::{run_multi_turn, run_single_turn, Arm};
