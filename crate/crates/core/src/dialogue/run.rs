use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::conversation::{format_context, Conversation, Role, Scenario, SteerMeta, TaskKind, Turn, Variant};
use super::decode::{generate_turn, DecodeConfig, Steer};
use super::partner::PartnerAdapter;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Unsteered,
    Steered,
    PromptBaseline,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Unsteered => "unsteered",
            Arm::Steered => "steered",
            Arm::PromptBaseline => "prompt_baseline",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unsteered" => Ok(Arm::Unsteered),
            "steered" => Ok(Arm::Steered),
            "prompt_baseline" => Ok(Arm::PromptBaseline),
            _ => Err(Error::Invalid(format!(
                "unknown arm `{s}` (expected unsteered, steered or prompt_baseline)"
            ))),
        }
    }
}

fn target_turn(model: &Model, conv: &Conversation, system_prompt: Option<&str>, steer: Option<Steer<'_>>, decode: &DecodeConfig) -> Result<Turn> {
    let ctx = format_context(system_prompt, &conv.turns, Role::Target);
    let g = generate_turn(model, &ctx, steer, decode)?;
    Ok(Turn::generated(Role::Target, g.text, steer.map(|s| SteerMeta::from(s.config))))
}

fn partner_turn(partner: &PartnerAdapter, conv: &Conversation, final_turn: bool) -> Result<Turn> {
    let text = partner.respond(conv, final_turn)?;
    Ok(Turn::generated(Role::Partner, text, None))
}

/// One conversation per arm, all continuing the same history. When a
/// partner is given it first answers a history that ends on a target turn,
/// and in negotiations it replies once more to each arm's response.
pub fn run_single_turn(
    model: &Model,
    scenario: &Scenario,
    arms: &[Arm],
    steer: Option<Steer<'_>>,
    system_prompt: Option<&str>,
    partner: Option<&PartnerAdapter>,
    decode: &DecodeConfig,
) -> Result<Vec<Conversation>> {
    if arms.is_empty() {
        return Err(Error::Invalid("no arms requested".into()));
    }
    if arms.contains(&Arm::Steered) && steer.is_none() {
        return Err(Error::Invalid("steered arm requested without a steering vector".into()));
    }
    if arms.contains(&Arm::PromptBaseline) && system_prompt.is_none() {
        return Err(Error::Invalid("prompt_baseline arm requested without a system prompt".into()));
    }
    let mut base = Conversation::start(scenario, Variant::SingleTurn, None);
    if let Some(p) = partner {
        if base.turns.last().map_or(true, |t| t.role == Role::Target) {
            let t = partner_turn(p, &base, false)?;
            base.turns.push(t);
        }
    }
    arms.iter()
        .map(|&arm| {
            let mut conv = base.clone();
            conv.arm = Some(arm.as_str().to_string());
            let (prompt, s) = match arm {
                Arm::Unsteered => (None, None),
                Arm::Steered => (None, steer),
                Arm::PromptBaseline => {
                    conv.variant = Variant::PromptBaseline;
                    (system_prompt, None)
                }
            };
            let t = target_turn(model, &conv, prompt, s, decode)?;
            conv.turns.push(t);
            if let (Some(p), TaskKind::Negotiation) = (partner, conv.task) {
                let t = partner_turn(p, &conv, true)?;
                conv.turns.push(t);
            }
            Ok(conv)
        })
        .collect()
}

/// Partner, target, partner, target, final partner turn. The two target
/// turns are steered according to `variant`'s schedule.
pub fn run_multi_turn(
    model: &Model,
    scenario: &Scenario,
    variant: Variant,
    partner: &PartnerAdapter,
    steer: Option<Steer<'_>>,
    decode: &DecodeConfig,
) -> Result<Conversation> {
    let schedule = variant
        .schedule()
        .ok_or_else(|| Error::Invalid(format!("{variant} is not a multi-turn variant")))?;
    if schedule.contains(&true) && steer.is_none() {
        return Err(Error::Invalid(format!("variant {variant} needs a steering vector")));
    }
    let mut conv = Conversation::start(scenario, variant, None);
    let step = |conv: &mut Conversation, i: usize| -> Result<()> {
        let t = match i {
            0 | 2 => partner_turn(partner, conv, false)?,
            1 | 3 => target_turn(model, conv, None, steer.filter(|_| schedule[i / 2]), decode)?,
            _ => partner_turn(partner, conv, true)?,
        };
        conv.turns.push(t);
        Ok(())
    };
    for i in 0..5 {
        if let Err(e) = step(&mut conv, i) {
            return Err(Error::Conversation {
                id: conv.id.clone(),
                partial: Box::new(conv),
                source: Box::new(e),
            });
        }
    }
    Ok(conv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::SellerRules;
    use crate::model::ModelConfig;
    use crate::steering::{SteerConfig, SteerMode, SteeringVector};

    fn model() -> Model {
        Model::new(ModelConfig {
            max_context: 256,
            ..ModelConfig::tiny()
        })
        .unwrap()
    }

    fn scenario() -> Scenario {
        Scenario {
            id: "n1".into(),
            task: TaskKind::Negotiation,
            history: vec![
                Turn::history(Role::Partner, "Selling my desk for $80."),
                Turn::history(Role::Target, "Would you take $60?"),
            ],
            listing_price: Some(80.0),
            dataset_final_price: Some(70.0),
        }
    }

    fn decode() -> DecodeConfig {
        DecodeConfig {
            max_new_tokens: 6,
            ..Default::default()
        }
    }

    fn seller() -> PartnerAdapter {
        PartnerAdapter::ScriptedSeller {
            rules: SellerRules::default(),
            seed: 1,
        }
    }

    fn vector(m: &Model, scale: f64) -> SteeringVector {
        let d = m.config().d_model;
        SteeringVector::from_means(1, "t", m.config().fingerprint(), 4, 1, vec![scale; d], vec![0.0; d])
    }

    #[test]
    fn schedule_flags_follow_variant() {
        let m = model();
        let v = vector(&m, 1.0);
        let c = SteerConfig::new(2.0, 4, 1, SteerMode::SlidingWindow).unwrap();
        for variant in Variant::MULTI_TURN {
            let conv = run_multi_turn(&m, &scenario(), variant, &seller(), Some(Steer { vector: &v, config: &c }), &decode()).unwrap();
            let flags = conv.steer_flags();
            assert_eq!(flags, variant.schedule().unwrap().to_vec(), "{variant}");
            assert_eq!(conv.turns.len(), 7);
            assert_eq!(conv.turns.last().unwrap().role, Role::Partner);
        }
    }

    #[test]
    fn multi_turn_is_deterministic() {
        let m = model();
        let a = run_multi_turn(&m, &scenario(), Variant::UU, &seller(), None, &decode()).unwrap();
        let b = run_multi_turn(&m, &scenario(), Variant::UU, &seller(), None, &decode()).unwrap();
        assert_eq!(a.to_jsonl_line(), b.to_jsonl_line());
    }

    #[test]
    fn zero_vector_arm_equals_unsteered_arm() {
        let m = model();
        let v = vector(&m, 0.0);
        let c = SteerConfig::new(2.0, 4, 1, SteerMode::SlidingWindow).unwrap();
        let out = run_single_turn(
            &m,
            &scenario(),
            &[Arm::Unsteered, Arm::Steered, Arm::PromptBaseline],
            Some(Steer { vector: &v, config: &c }),
            Some("Be polite."),
            Some(&seller()),
            &decode(),
        )
        .unwrap();
        assert_eq!(out.len(), 3);
        let target = |c: &Conversation| c.target_turns().next().unwrap().text.clone();
        assert_eq!(target(&out[0]), target(&out[1]));
        assert!(out[1].target_turns().next().unwrap().steered);
        assert_eq!(out[2].variant, Variant::PromptBaseline);
        let n = scenario().history.len();
        assert!(out.iter().all(|c| c.turns[..n + 1] == out[0].turns[..n + 1]));
    }

    #[test]
    fn unknown_arm_and_missing_inputs_are_errors() {
        assert!("primed".parse::<Arm>().is_err());
        let m = model();
        assert!(run_single_turn(&m, &scenario(), &[Arm::Steered], None, None, None, &decode()).is_err());
        assert!(run_single_turn(&m, &scenario(), &[Arm::PromptBaseline], None, None, None, &decode()).is_err());
        assert!(run_multi_turn(&m, &scenario(), Variant::SingleTurn, &seller(), None, &decode()).is_err());
        assert!(run_multi_turn(&m, &scenario(), Variant::SS, &seller(), None, &decode()).is_err());
    }

    #[test]
    fn context_overflow_carries_partial_transcript() {
        let m = Model::new(ModelConfig {
            max_context: 72,
            ..ModelConfig::tiny()
        })
        .unwrap();
        let err = run_multi_turn(&m, &scenario(), Variant::UU, &seller(), None, &decode()).unwrap_err();
        match err {
            Error::Conversation { partial, .. } => assert!(partial.turns.len() > scenario().history.len()),
            other => panic!("unexpected {other}"),
        }
    }
}
