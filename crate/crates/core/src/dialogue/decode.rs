use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::tokenizer::{detokenize, EOS, SEP};
use crate::model::{Injection, Model};
use crate::steering::{SteerConfig, SteeringVector};

pub const DEFAULT_REPETITION_PENALTY: f64 = 1.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub max_new_tokens: usize,
    /// Divides positive and multiplies negative logits of ids already
    /// generated in this turn. 1.0 disables it.
    pub repetition_penalty: f64,
    pub stop_tokens: Vec<u32>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 48,
            repetition_penalty: DEFAULT_REPETITION_PENALTY,
            stop_tokens: vec![SEP, EOS],
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_penalty >= 1.0 && self.repetition_penalty.is_finite()) {
            return Err(Error::Invalid(format!(
                "repetition_penalty must be finite and at least 1, got {}",
                self.repetition_penalty
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopToken,
    MaxTokens,
    ContextFull,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Generated ids, including the stop token when one was produced.
    pub tokens: Vec<u32>,
    pub text: String,
    pub stop: StopReason,
}

/// A steering vector paired with its injection settings.
#[derive(Clone, Copy, Debug)]
pub struct Steer<'a> {
    pub vector: &'a SteeringVector,
    pub config: &'a SteerConfig,
}

fn penalize(logits: &mut [f64], seen: &[u32], penalty: f64) {
    if penalty == 1.0 {
        return;
    }
    let mut done = vec![false; logits.len()];
    for &id in seen {
        let i = id as usize;
        if i < logits.len() && !done[i] {
            done[i] = true;
            let l = &mut logits[i];
            *l = if *l > 0.0 { *l / penalty } else { *l * penalty };
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding from `context`, optionally steered.
pub fn generate_turn(model: &Model, context: &[u32], steer: Option<Steer<'_>>, decode: &DecodeConfig) -> Result<Generation> {
    if context.is_empty() {
        return Err(Error::Precondition("empty generation context".into()));
    }
    let max_context = model.config().max_context;
    if context.len() > max_context {
        return Err(Error::OutOfRange {
            what: "context length",
            index: context.len(),
            bound: max_context,
        });
    }
    decode.validate()?;
    if let Some(s) = steer {
        s.config.validate()?;
        if s.config.layer != s.vector.layer {
            return Err(Error::Invalid(format!(
                "steer config targets layer {} but the vector was built at layer {}",
                s.config.layer, s.vector.layer
            )));
        }
    }
    let mut seq = context.to_vec();
    let mut out = Vec::new();
    let mut stop = StopReason::MaxTokens;
    for _ in 0..decode.max_new_tokens {
        if seq.len() >= max_context {
            stop = StopReason::ContextFull;
            break;
        }
        let injection = steer.map(|s| Injection {
            layer: s.config.layer,
            vector: &s.vector.vector,
            alpha: s.config.alpha,
            positions: s.config.positions(seq.len(), context.len()),
        });
        let (logits, _) = model.run(&seq, &[], &[], injection.as_ref())?;
        let mut last = logits.row(seq.len() - 1).to_vec();
        penalize(&mut last, &out, decode.repetition_penalty);
        let next = argmax(&last) as u32;
        seq.push(next);
        out.push(next);
        if decode.stop_tokens.contains(&next) {
            stop = StopReason::StopToken;
            break;
        }
    }
    let body: Vec<u32> = out.iter().copied().filter(|t| !decode.stop_tokens.contains(t)).collect();
    let text = detokenize(&body, model.config().vocab_size)?.trim().to_string();
    Ok(Generation { tokens: out, text, stop })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_shrinks_positive_and_grows_negative() {
        let mut l = vec![2.0, -1.0, 3.0];
        penalize(&mut l, &[0, 1, 0], 2.0);
        assert_eq!(l, vec![1.0, -2.0, 3.0]);
        let mut same = vec![2.0, -1.0];
        penalize(&mut same, &[0, 1], 1.0);
        assert_eq!(same, vec![2.0, -1.0]);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
