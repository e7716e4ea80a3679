//! Contrastive steering vectors: mean layer-output difference between a
//! positive and a negative text set, plus injection settings and the α sweep.

mod file;
mod sweep;

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use file::{load_vector, load_vector_for, save_vector, VECTOR_MAGIC};
pub use sweep::{alpha_sweep, SweepOutcome, SweepPoint, ALPHA_GRID, DEFAULT_GUARD};

use crate::error::{Error, Result};
use crate::model::tokenizer::{tokenize, BOS, PAD};
use crate::model::{ComponentKind, Injection, Model};

pub const DEFAULT_WINDOW: usize = 15;

pub const NORMALIZATION_POLICY: &str = "truncate-to-min;exclude-bos-pad";

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveSet {
    pub task: String,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Deserialize)]
struct SetRecord {
    task: String,
    polarity: Polarity,
    text: String,
}

impl ContrastiveSet {
    /// Parses JSONL `{task, polarity, text}` records, keeping those of `task`
    /// (or of the first task seen when `task` is `None`).
    pub fn parse_jsonl(text: &str, task: Option<&str>) -> Result<Self> {
        let mut set = ContrastiveSet {
            task: task.unwrap_or_default().to_string(),
            positive: Vec::new(),
            negative: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: SetRecord = serde_json::from_str(line).map_err(|e| Error::record(i + 1, e.to_string()))?;
            if set.task.is_empty() {
                set.task = rec.task.clone();
            }
            if rec.task != set.task {
                continue;
            }
            match rec.polarity {
                Polarity::Positive => set.positive.push(rec.text),
                Polarity::Negative => set.negative.push(rec.text),
            }
        }
        if set.positive.is_empty() || set.negative.is_empty() {
            return Err(Error::Invalid(format!("contrastive set `{}` needs texts of both polarities", set.task)));
        }
        Ok(set)
    }

    pub fn load(path: &Path, task: Option<&str>) -> Result<Self> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?, task)
    }

    pub fn swapped(&self) -> Self {
        Self {
            task: self.task.clone(),
            positive: self.negative.clone(),
            negative: self.positive.clone(),
        }
    }
}

/// Token form of a set in which every sequence has the same length.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedSet {
    pub task: String,
    pub positive: Vec<Vec<u32>>,
    pub negative: Vec<Vec<u32>>,
    /// Content tokens per text (excluding the leading BOS).
    pub seq_len: usize,
    /// Pairs kept: both sides are cut to the shorter side's count.
    pub n: usize,
}

/// Pairs texts in order, then truncates every text to the shortest byte
/// length on either side and prefixes BOS.
pub fn length_normalize(set: &ContrastiveSet) -> Result<NormalizedSet> {
    if set.positive.is_empty() || set.negative.is_empty() {
        return Err(Error::Precondition("both sides of a contrastive set must be non-empty".into()));
    }
    let n = set.positive.len().min(set.negative.len());
    let encoded = |side: &[String]| -> Vec<Vec<u32>> { side[..n].iter().map(|s| tokenize(s)).collect() };
    let (pos, neg) = (encoded(&set.positive), encoded(&set.negative));
    let t = pos.iter().chain(&neg).map(Vec::len).min().unwrap_or(0);
    if t == 0 {
        return Err(Error::Precondition("a contrastive text is empty".into()));
    }
    let cut = |side: Vec<Vec<u32>>| -> Vec<Vec<u32>> {
        side.into_iter()
            .map(|s| std::iter::once(BOS).chain(s.into_iter().take(t)).collect())
            .collect()
    };
    Ok(NormalizedSet {
        task: set.task.clone(),
        positive: cut(pos),
        negative: cut(neg),
        seq_len: t,
        n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringVector {
    pub layer: usize,
    pub task: String,
    /// Fingerprint of the model configuration the vector was built with.
    pub config_hash: u64,
    pub seq_len: usize,
    pub n: usize,
    pub policy: String,
    pub mu_positive: Vec<f64>,
    pub mu_negative: Vec<f64>,
    pub vector: Vec<f64>,
}

impl SteeringVector {
    pub fn from_means(layer: usize, task: &str, config_hash: u64, seq_len: usize, n: usize, mu_positive: Vec<f64>, mu_negative: Vec<f64>) -> Self {
        let vector = mu_positive.iter().zip(&mu_negative).map(|(p, q)| p - q).collect();
        Self {
            layer,
            task: task.to_string(),
            config_hash,
            seq_len,
            n,
            policy: NORMALIZATION_POLICY.to_string(),
            mu_positive,
            mu_negative,
            vector,
        }
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn width(&self) -> usize {
        self.vector.len()
    }

    /// Same vector multiplied by `factor`; the stored means are kept.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vector: self.vector.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    pub fn check_model(&self, model: &Model) -> Result<()> {
        let c = model.config();
        if self.width() != c.d_model {
            return Err(Error::Dimension {
                expected: c.d_model,
                found: self.width(),
            });
        }
        if self.layer >= c.n_layers {
            return Err(Error::OutOfRange {
                what: "layer",
                index: self.layer,
                bound: c.n_layers,
            });
        }
        if self.config_hash != c.fingerprint() {
            return Err(Error::Invalid(format!(
                "steering vector built for config {:016x}, model is {:016x}",
                self.config_hash,
                c.fingerprint()
            )));
        }
        Ok(())
    }
}

fn mean_layer_output(model: &Model, seqs: &[Vec<u32>], layer: usize) -> Result<Vec<f64>> {
    let d = model.config().d_model;
    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    for s in seqs {
        let (_, cache) = model.forward(s, &[ComponentKind::LayerOut])?;
        let h = cache.get(ComponentKind::LayerOut, layer).expect("tapped");
        for (p, &tok) in s.iter().enumerate() {
            if tok == PAD || tok == BOS {
                continue;
            }
            for (acc, x) in sum.iter_mut().zip(h.row(p)) {
                *acc += x;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Precondition("no content positions to average".into()));
    }
    Ok(sum.into_iter().map(|x| x / count as f64).collect())
}

/// `mean(h⁺) − mean(h⁻)` at `layer`, averaged over samples and content
/// positions.
pub fn build_steering_vector(model: &Model, set: &NormalizedSet, layer: usize) -> Result<SteeringVector> {
    let n_layers = model.config().n_layers;
    if layer >= n_layers {
        return Err(Error::OutOfRange {
            what: "layer",
            index: layer,
            bound: n_layers,
        });
    }
    let mu_p = mean_layer_output(model, &set.positive, layer)?;
    let mu_n = mean_layer_output(model, &set.negative, layer)?;
    Ok(SteeringVector::from_means(
        layer,
        &set.task,
        model.config().fingerprint(),
        set.seq_len,
        set.n,
        mu_p,
        mu_n,
    ))
}

/// Which positions receive the steering addition during decoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteerMode {
    /// The last `window_k` positions of the sequence at every decode step.
    #[default]
    SlidingWindow,
    /// The last `window_k` positions of the prompt only.
    PromptFinal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteerConfig {
    pub alpha: f64,
    pub window_k: usize,
    pub layer: usize,
    #[serde(default)]
    pub mode: SteerMode,
}

impl SteerConfig {
    pub fn new(alpha: f64, window_k: usize, layer: usize, mode: SteerMode) -> Result<Self> {
        let c = Self {
            alpha,
            window_k,
            layer,
            mode,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!("alpha must be finite and non-negative, got {}", self.alpha)));
        }
        if self.window_k == 0 {
            return Err(Error::Invalid("window_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Positions steered when the sequence has `seq_len` tokens and the
    /// prompt had `prompt_len`.
    pub fn positions(&self, seq_len: usize, prompt_len: usize) -> Range<usize> {
        match self.mode {
            SteerMode::SlidingWindow => Injection::final_window(seq_len, self.window_k),
            SteerMode::PromptFinal => Injection::final_window(prompt_len.min(seq_len), self.window_k),
        }
    }
}
