use crate::error::{Error, Result};
use crate::model::tokenizer::{tokenize, BOS};
use crate::model::{ComponentKind, Model};

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Precondition("cosine of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean final-layer output over the text's positions (BOS excluded).
pub fn embed(model: &Model, text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(Error::Precondition("cannot embed empty text".into()));
    }
    let mut tokens = vec![BOS];
    tokens.extend(tokenize(text));
    let (_, cache) = model.forward(&tokens, &[ComponentKind::LayerOut])?;
    let last = model.config().n_layers - 1;
    let h = cache.get(ComponentKind::LayerOut, last).expect("tapped");
    let d = model.config().d_model;
    let mut mean = vec![0.0; d];
    for p in 1..tokens.len() {
        for (m, x) in mean.iter_mut().zip(h.row(p)) {
            *m += x;
        }
    }
    let n = (tokens.len() - 1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

pub fn semantic_coherence(model: &Model, utterance: &str, previous: &str) -> Result<f64> {
    cosine(&embed(model, utterance)?, &embed(model, previous)?)
}
