//! Small next-token training loop (Adam with global-norm clipping).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::numkernel::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    /// Longest training window in tokens (inputs plus the final target).
    pub window: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Sequences used for the before/after loss; 0 means all.
    pub eval_sequences: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 8,
            window: 96,
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.99,
            adam_eps: 1e-8,
            clip_norm: 1.0,
            seed: 0,
            eval_sequences: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean batch loss at each step.
    pub step_losses: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &Model) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Model, grads: &[Vec<f64>], o: &TrainOptions) {
        self.t += 1;
        let bc1 = 1.0 - o.beta1.powi(self.t);
        let bc2 = 1.0 - o.beta2.powi(self.t);
        for (i, g) in grads.iter().enumerate() {
            let p = model.param_mut(i).data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..g.len() {
                m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
                v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
                p[j] -= o.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + o.adam_eps);
            }
        }
    }
}

fn targets(window: &[u32]) -> Vec<Option<usize>> {
    let mut t: Vec<Option<usize>> = window[1..].iter().map(|&x| Some(x as usize)).collect();
    t.push(None);
    t
}

/// Mean next-token loss of one window, optionally accumulating gradients.
fn window_loss(model: &Model, window: &[u32], grads: Option<&mut [Vec<f64>]>) -> Result<f64> {
    let mut graph = model.build_graph(window)?;
    let loss = graph.tape.cross_entropy(graph.logits, targets(window))?;
    let bindings = model.bindings();
    let ev = graph.tape.eval(&bindings)?;
    let value = ev.value(loss).item().expect("scalar loss");
    if let Some(acc) = grads {
        let wanted: Vec<NodeId> = graph.params.clone();
        for (a, g) in acc.iter_mut().zip(ev.backward(loss, 1.0, &wanted)?) {
            for (x, y) in a.iter_mut().zip(g.data()) {
                *x += y;
            }
        }
    }
    Ok(value)
}

fn usable<'a>(sequences: &'a [Vec<u32>], limit: usize) -> impl Iterator<Item = &'a [u32]> + 'a {
    sequences.iter().filter(|s| s.len() >= 2).map(move |s| &s[..s.len().min(limit)])
}

/// Mean per-sequence next-token loss over `sequences`, each truncated to the
/// model context.
pub fn corpus_loss(model: &Model, sequences: &[Vec<u32>]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in usable(sequences, model.config().max_context) {
        total += window_loss(model, s, None)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Precondition("no sequence has two or more tokens".into()));
    }
    Ok(total / n as f64)
}

/// Initializes a model from `config` and trains it on random windows of
/// `sequences`.
pub fn train_toy(config: &ModelConfig, sequences: &[Vec<u32>], opts: &TrainOptions) -> Result<(Model, TrainReport)> {
    let mut model = Model::new(config.clone())?;
    let report = train_model(&mut model, sequences, opts)?;
    Ok((model, report))
}

/// Continues training `model` in place.
pub fn train_model(model: &mut Model, sequences: &[Vec<u32>], opts: &TrainOptions) -> Result<TrainReport> {
    if opts.steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    if opts.batch_size == 0 || opts.window < 2 || !(opts.lr > 0.0) {
        return Err(Error::Precondition("batch_size, window >= 2 and lr > 0 are required".into()));
    }
    let limit = opts.window.min(model.config().max_context);
    let pool: Vec<&[u32]> = sequences.iter().filter(|s| s.len() >= 2).map(|s| s.as_slice()).collect();
    if pool.is_empty() {
        return Err(Error::Precondition("no sequence has two or more tokens".into()));
    }
    let eval_set: Vec<Vec<u32>> = match opts.eval_sequences {
        0 => sequences.to_vec(),
        k => sequences.iter().take(k).cloned().collect(),
    };
    let initial_loss = corpus_loss(model, &eval_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = Adam::new(model);
    let mut step_losses = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let mut grads: Vec<Vec<f64>> = model.params().iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        let mut batch_loss = 0.0;
        for _ in 0..opts.batch_size {
            let s = pool[rng.gen_range(0..pool.len())];
            let len = s.len().min(limit);
            let start = rng.gen_range(0..=s.len() - len);
            let loss = match window_loss(model, &s[start..start + len], Some(&mut grads)) {
                Err(Error::NonFinite { .. }) => f64::NAN,
                other => other?,
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            batch_loss += loss;
        }
        let scale = 1.0 / opts.batch_size as f64;
        let mut norm2 = 0.0;
        for g in grads.iter_mut() {
            for x in g.iter_mut() {
                *x *= scale;
                norm2 += *x * *x;
            }
        }
        let norm = norm2.sqrt();
        if !norm.is_finite() {
            return Err(Error::Diverged {
                step,
                loss: batch_loss * scale,
            });
        }
        if norm > opts.clip_norm {
            let c = opts.clip_norm / norm;
            grads.iter_mut().flatten().for_each(|x| *x *= c);
        }
        adam.step(model, &grads, opts);
        step_losses.push(batch_loss * scale);
    }
    let final_loss = corpus_loss(model, &eval_set)?;
    Ok(TrainReport {
        initial_loss,
        final_loss,
        step_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tokenizer;

    #[test]
    fn loss_decreases_on_repetitive_text() {
        let config = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            max_context: 32,
            seed: 1,
            ..Default::default()
        };
        let seqs = vec![tokenizer::tokenize("abcabcabcabcabcabc"); 4];
        let opts = TrainOptions {
            steps: 30,
            batch_size: 2,
            window: 16,
            lr: 1e-2,
            ..Default::default()
        };
        let (a, report) = train_toy(&config, &seqs, &opts).unwrap();
        assert!(report.final_loss < report.initial_loss * 0.8, "{report:?}");
        let (b, _) = train_toy(&config, &seqs, &opts).unwrap();
        for ((_, x), (_, y)) in a.params().iter().zip(b.params()) {
            assert!(x.bit_eq(y));
        }
    }

    #[test]
    fn rejects_empty_corpus_and_zero_steps() {
        let config = ModelConfig {
            n_layers: 1,
            n_heads: 1,
            d_model: 4,
            d_ff: 4,
            max_context: 8,
            ..Default::default()
        };
        assert!(train_toy(&config, &[vec![1]], &TrainOptions::default()).is_err());
        let zero = TrainOptions { steps: 0, ..Default::default() };
        assert!(matches!(
            train_toy(&config, &[vec![1, 2, 3]], &zero),
            Err(Error::Precondition(_))
        ));
    }
}
