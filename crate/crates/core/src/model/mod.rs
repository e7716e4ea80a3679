//! Pre-norm decoder-only transformer with named activation tap points.
//!
//! Every layer exposes three tap points: the attention output (`attn`), the
//! MLP output (`mlp`) and the residual stream after the layer (`layer_out`).
//! Taps can be observed, overwritten (patching), or shifted (injection)
//! before any downstream computation reads them.

mod checkpoint;
mod config;
pub mod tokenizer;
mod train;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use train::{corpus_loss, train_model, train_toy, TrainOptions, TrainReport};

use crate::error::{Error, Result};
use crate::numkernel::{grad_check, Bindings, GradCheck, NodeId, Tape, Tensor};

const NORM_EPS: f64 = 1e-5;

/// Activation tap kinds available in every layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Attn,
    Mlp,
    LayerOut,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 3] = [ComponentKind::Attn, ComponentKind::Mlp, ComponentKind::LayerOut];

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Attn => "attn",
            ComponentKind::Mlp => "mlp",
            ComponentKind::LayerOut => "layer_out",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "attn" => Ok(ComponentKind::Attn),
            "mlp" => Ok(ComponentKind::Mlp),
            "layer_out" | "layer" => Ok(ComponentKind::LayerOut),
            other => Err(Error::Invalid(format!("unknown component kind `{other}`"))),
        }
    }
}

/// Tapped activations of one run, keyed by (kind, layer); each entry is a
/// `[seq_len, d_model]` tensor whose row `t` is the vector at position `t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivationCache {
    seq_len: usize,
    d_model: usize,
    entries: BTreeMap<(ComponentKind, usize), Tensor>,
    /// Concatenated per-head attention outputs before the output projection.
    head_inputs: BTreeMap<usize, Tensor>,
}

impl ActivationCache {
    pub fn new(seq_len: usize, d_model: usize) -> Self {
        Self {
            seq_len,
            d_model,
            ..Default::default()
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn insert(&mut self, kind: ComponentKind, layer: usize, value: Tensor) -> Result<()> {
        if value.shape() != [self.seq_len, self.d_model] {
            return Err(Error::Dimension {
                expected: self.seq_len * self.d_model,
                found: value.numel(),
            });
        }
        self.entries.insert((kind, layer), value);
        Ok(())
    }

    pub fn get(&self, kind: ComponentKind, layer: usize) -> Option<&Tensor> {
        self.entries.get(&(kind, layer))
    }

    pub fn vector(&self, kind: ComponentKind, layer: usize, position: usize) -> Option<&[f64]> {
        if position >= self.seq_len {
            return None;
        }
        self.get(kind, layer).map(|t| t.row(position))
    }

    pub fn keys(&self) -> impl Iterator<Item = (ComponentKind, usize)> + '_ {
        self.entries.keys().copied()
    }

    pub fn head_inputs(&self, layer: usize) -> Option<&Tensor> {
        self.head_inputs.get(&layer)
    }
}

/// Replacement of one tapped vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub kind: ComponentKind,
    pub layer: usize,
    pub position: usize,
    pub value: Vec<f64>,
}

/// Addition of `alpha · vector` to the layer output at `positions`.
#[derive(Clone, Debug)]
pub struct Injection<'v> {
    pub layer: usize,
    pub vector: &'v [f64],
    pub alpha: f64,
    pub positions: Range<usize>,
}

impl Injection<'_> {
    /// Positions `{T−k+1, …, T}` in 1-based terms, clamped at the start.
    pub fn final_window(seq_len: usize, window_k: usize) -> Range<usize> {
        seq_len.saturating_sub(window_k)..seq_len
    }
}

/// Output of a run that also differentiates the logit difference.
#[derive(Clone, Debug)]
pub struct GradientRun {
    pub logits: Tensor,
    pub logit_diff: f64,
    pub cache: ActivationCache,
    /// d(logit difference)/d(activation) for the same coordinates as `cache`.
    pub grads: ActivationCache,
}

pub(crate) struct Graph {
    pub tape: Tape,
    pub logits: NodeId,
    pub taps: BTreeMap<(ComponentKind, usize), NodeId>,
    pub heads: Vec<NodeId>,
    pub params: Vec<NodeId>,
}

/// Transformer weights. Immutable once built or loaded.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

/// Names and shapes of every weight, in checkpoint order.
pub fn parameter_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (d, f, v) = (config.d_model, config.d_ff, config.vocab_size);
    let mut out = vec![
        ("tok_emb".to_string(), vec![v, d]),
        ("pos_emb".to_string(), vec![config.max_context, d]),
    ];
    for l in 0..config.n_layers {
        out.push((format!("l{l}.attn_norm"), vec![d]));
        for w in ["wq", "wk", "wv", "wo"] {
            out.push((format!("l{l}.{w}"), vec![d, d]));
        }
        out.push((format!("l{l}.mlp_norm"), vec![d]));
        out.push((format!("l{l}.w_in"), vec![d, f]));
        out.push((format!("l{l}.w_out"), vec![f, d]));
    }
    if config.final_norm {
        out.push(("final_norm".to_string(), vec![d]));
    }
    out.push(("unembed".to_string(), vec![d, v]));
    out
}

impl Model {
    /// Randomly initialized model, deterministic in `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let residual_scale = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        let params = parameter_layout(&config)
            .into_iter()
            .map(|(name, shape)| {
                let numel: usize = shape.iter().product();
                let std = if name.ends_with("norm") {
                    0.0
                } else if name == "tok_emb" {
                    0.1
                } else if name == "pos_emb" {
                    0.02
                } else {
                    let base = 1.0 / (shape[0] as f64).sqrt();
                    if name.ends_with(".wo") || name.ends_with(".w_out") {
                        base * residual_scale
                    } else {
                        base
                    }
                };
                let data = if std == 0.0 {
                    vec![1.0; numel]
                } else {
                    let normal = Normal::new(0.0, std).expect("positive std");
                    (0..numel).map(|_| normal.sample(&mut rng)).collect()
                };
                (name, Tensor::new(shape, data).expect("layout shape"))
            })
            .collect();
        Self::from_params(config, params)
    }

    /// Assembles a model from named weights, checking the layout.
    pub fn from_params(config: ModelConfig, params: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let layout = parameter_layout(&config);
        let mut by_name: HashMap<String, Tensor> = params.into_iter().collect();
        let mut ordered = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let t = by_name
                .remove(&name)
                .ok_or_else(|| Error::Format(format!("missing tensor `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Format(format!(
                    "tensor `{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            ordered.push((name, t));
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Format(format!("unexpected tensor `{extra}`")));
        }
        let index = ordered.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();
        Ok(Self {
            config,
            params: ordered,
            index,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].1)
    }

    pub(crate) fn param_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.params[i].1
    }

    pub(crate) fn bindings(&self) -> Bindings<'_> {
        let mut b = Bindings::new();
        for (name, t) in &self.params {
            b.bind(name.clone(), t);
        }
        b
    }

    pub(crate) fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Precondition("empty token list".into()));
        }
        if tokens.len() > self.config.max_context {
            return Err(Error::OutOfRange {
                what: "sequence length",
                index: tokens.len(),
                bound: self.config.max_context,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    pub(crate) fn build_graph(&self, tokens: &[u32]) -> Result<Graph> {
        self.check_tokens(tokens)?;
        let c = &self.config;
        let t = tokens.len();
        let mut tape = Tape::new();
        let mut params = Vec::with_capacity(self.params.len());
        let mut ids = HashMap::new();
        for (name, value) in &self.params {
            let id = tape.input(name.clone(), value.shape());
            params.push(id);
            ids.insert(name.as_str(), id);
        }
        let p = |name: &str| ids[name];

        let tok = tape.gather(p("tok_emb"), tokens.iter().map(|&x| x as usize).collect())?;
        let pos = tape.gather(p("pos_emb"), (0..t).collect())?;
        let mut h = tape.add(tok, pos)?;
        let mut taps = BTreeMap::new();
        let mut heads = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            let n = tape.rms_norm(h, p(&format!("l{l}.attn_norm")), NORM_EPS)?;
            let q = tape.matmul(n, p(&format!("l{l}.wq")))?;
            let k = tape.matmul(n, p(&format!("l{l}.wk")))?;
            let v = tape.matmul(n, p(&format!("l{l}.wv")))?;
            let z = tape.attention(q, k, v, c.n_heads)?;
            heads.push(z);
            let attn = tape.matmul(z, p(&format!("l{l}.wo")))?;
            taps.insert((ComponentKind::Attn, l), attn);
            h = tape.add(h, attn)?;
            let n2 = tape.rms_norm(h, p(&format!("l{l}.mlp_norm")), NORM_EPS)?;
            let up = tape.matmul(n2, p(&format!("l{l}.w_in")))?;
            let act = tape.silu(up)?;
            let mlp = tape.matmul(act, p(&format!("l{l}.w_out")))?;
            taps.insert((ComponentKind::Mlp, l), mlp);
            h = tape.add(h, mlp)?;
            taps.insert((ComponentKind::LayerOut, l), h);
        }
        let f = if c.final_norm {
            tape.rms_norm(h, p("final_norm"), NORM_EPS)?
        } else {
            h
        };
        let logits = tape.matmul(f, p("unembed"))?;
        tape.mark_output("logits", logits);
        Ok(Graph {
            tape,
            logits,
            taps,
            heads,
            params,
        })
    }

    fn check_coordinate(&self, layer: usize, position: usize, seq_len: usize) -> Result<()> {
        if layer >= self.config.n_layers {
            return Err(Error::OutOfRange {
                what: "layer",
                index: layer,
                bound: self.config.n_layers,
            });
        }
        if position >= seq_len {
            return Err(Error::OutOfRange {
                what: "position",
                index: position,
                bound: seq_len,
            });
        }
        Ok(())
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.config.d_model {
            return Err(Error::Dimension {
                expected: self.config.d_model,
                found: width,
            });
        }
        Ok(())
    }

    /// Forward pass with any combination of patches and injections, returning
    /// logits `[T, vocab]` and the requested taps.
    pub fn run(
        &self,
        tokens: &[u32],
        taps: &[ComponentKind],
        patches: &[Patch],
        injection: Option<&Injection<'_>>,
    ) -> Result<(Tensor, ActivationCache)> {
        let graph = self.build_graph(tokens)?;
        let t = tokens.len();
        for p in patches {
            self.check_coordinate(p.layer, p.position, t)?;
            self.check_width(p.value.len())?;
        }
        if let Some(inj) = injection {
            if inj.layer >= self.config.n_layers {
                return Err(Error::OutOfRange {
                    what: "layer",
                    index: inj.layer,
                    bound: self.config.n_layers,
                });
            }
            self.check_width(inj.vector.len())?;
        }
        let bindings = self.bindings();
        let ev = graph
            .tape
            .eval_hooked(&bindings, &mut edit_hook(&graph, patches, injection))?;
        let mut cache = ActivationCache::new(t, self.config.d_model);
        for &kind in taps {
            for l in 0..self.config.n_layers {
                cache.insert(kind, l, ev.value(graph.taps[&(kind, l)]).clone())?;
                if kind == ComponentKind::Attn {
                    cache.head_inputs.insert(l, ev.value(graph.heads[l]).clone());
                }
            }
        }
        Ok((ev.value(graph.logits).clone(), cache))
    }

    pub fn forward(&self, tokens: &[u32], taps: &[ComponentKind]) -> Result<(Tensor, ActivationCache)> {
        self.run(tokens, taps, &[], None)
    }

    pub fn forward_with_patch(&self, tokens: &[u32], patches: &[Patch]) -> Result<Tensor> {
        self.run(tokens, &[], patches, None).map(|(logits, _)| logits)
    }

    /// Shifts the layer output at the final `window_k` positions by
    /// `alpha · vector`. The returned cache holds every layer output.
    pub fn forward_with_injection(
        &self,
        tokens: &[u32],
        layer: usize,
        vector: &[f64],
        alpha: f64,
        window_k: usize,
    ) -> Result<(Tensor, ActivationCache)> {
        if window_k == 0 {
            return Err(Error::Precondition("window_k must be at least 1".into()));
        }
        let inj = Injection {
            layer,
            vector,
            alpha,
            positions: Injection::final_window(tokens.len(), window_k),
        };
        self.run(tokens, &[ComponentKind::LayerOut], &[], Some(&inj))
    }

    /// Graph extended with the scalar `logit[T−1, aligned] − logit[T−1, misaligned]`.
    fn metric_graph(&self, tokens: &[u32], aligned: u32, misaligned: u32) -> Result<(Graph, NodeId)> {
        let v = self.config.vocab_size;
        for id in [aligned, misaligned] {
            if id as usize >= v {
                return Err(Error::TokenOutOfRange { id, vocab: v });
            }
        }
        let mut graph = self.build_graph(tokens)?;
        let t = tokens.len();
        let mut pick_last = Tensor::zeros(&[1, t]);
        pick_last.data_mut()[t - 1] = 1.0;
        let mut contrast = Tensor::zeros(&[v, 1]);
        contrast.data_mut()[aligned as usize] += 1.0;
        contrast.data_mut()[misaligned as usize] -= 1.0;
        let sel = graph.tape.constant(pick_last);
        let last = graph.tape.matmul(sel, graph.logits)?;
        let dir = graph.tape.constant(contrast);
        let metric = graph.tape.matmul(last, dir)?;
        Ok((graph, metric))
    }

    /// Forward pass plus gradients of `logit[T−1, aligned] − logit[T−1, misaligned]`
    /// with respect to every tap of the requested kinds.
    pub fn logit_diff_gradients(
        &self,
        tokens: &[u32],
        aligned: u32,
        misaligned: u32,
        kinds: &[ComponentKind],
    ) -> Result<GradientRun> {
        let (graph, metric) = self.metric_graph(tokens, aligned, misaligned)?;
        let t = tokens.len();
        let bindings = self.bindings();
        let ev = graph.tape.eval(&bindings)?;
        let mut wanted = Vec::new();
        for &kind in kinds {
            for l in 0..self.config.n_layers {
                wanted.push((kind, l, graph.taps[&(kind, l)]));
            }
        }
        let ids: Vec<NodeId> = wanted.iter().map(|w| w.2).collect();
        let grads = ev.backward(metric, 1.0, &ids)?;
        let mut cache = ActivationCache::new(t, self.config.d_model);
        let mut grad_cache = ActivationCache::new(t, self.config.d_model);
        for ((kind, l, id), g) in wanted.into_iter().zip(grads) {
            cache.insert(kind, l, ev.value(id).clone())?;
            grad_cache.insert(kind, l, g)?;
            if kind == ComponentKind::Attn {
                cache.head_inputs.insert(l, ev.value(graph.heads[l]).clone());
            }
        }
        Ok(GradientRun {
            logits: ev.value(graph.logits).clone(),
            logit_diff: ev.value(metric).item().expect("scalar metric"),
            cache,
            grads: grad_cache,
        })
    }

    /// Logit difference of the unpatched run, then of each patch applied on
    /// its own. Only computation downstream of the patched tap is repeated.
    pub fn logit_diff_under_patches(
        &self,
        tokens: &[u32],
        aligned: u32,
        misaligned: u32,
        patches: &[Patch],
    ) -> Result<(f64, Vec<f64>)> {
        for p in patches {
            self.check_coordinate(p.layer, p.position, tokens.len())?;
            self.check_width(p.value.len())?;
        }
        let (graph, metric) = self.metric_graph(tokens, aligned, misaligned)?;
        let bindings = self.bindings();
        let ev = graph.tape.eval(&bindings)?;
        let base = ev.value(metric).item().expect("scalar metric");
        let mut out = Vec::with_capacity(patches.len());
        for p in patches {
            let node = graph.taps[&(p.kind, p.layer)];
            let mut value = ev.value(node).clone();
            value.row_mut(p.position).copy_from_slice(&p.value);
            out.push(ev.replay_with(node, &value, metric)?.item().expect("scalar metric"));
        }
        Ok((base, out))
    }

    /// Central-difference check of the logit-difference gradient with respect
    /// to one tap.
    pub fn grad_check_tap(
        &self,
        tokens: &[u32],
        aligned: u32,
        misaligned: u32,
        kind: ComponentKind,
        layer: usize,
        eps: f64,
    ) -> Result<GradCheck> {
        self.check_coordinate(layer, 0, tokens.len().max(1))?;
        let (graph, metric) = self.metric_graph(tokens, aligned, misaligned)?;
        let bindings = self.bindings();
        grad_check(&graph.tape, &bindings, metric, graph.taps[&(kind, layer)], eps)
    }

    /// Mean negative log-likelihood (nats per token) of `tokens[from..]`
    /// given everything before it.
    pub fn continuation_nll(&self, tokens: &[u32], from: usize) -> Result<f64> {
        if from == 0 || from >= tokens.len() {
            return Err(Error::Precondition(format!(
                "continuation start {from} must lie in 1..{}",
                tokens.len()
            )));
        }
        let (logits, _) = self.forward(&tokens[..tokens.len() - 1], &[])?;
        let mut total = 0.0;
        for pos in from..tokens.len() {
            let row = logits.row(pos - 1);
            total += crate::numkernel::kernels::logsumexp(row) - row[tokens[pos] as usize];
        }
        Ok(total / (tokens.len() - from) as f64)
    }
}

fn edit_hook<'g>(
    graph: &'g Graph,
    patches: &'g [Patch],
    injection: Option<&'g Injection<'g>>,
) -> impl FnMut(NodeId, &mut Tensor) + 'g {
    let mut by_node: HashMap<NodeId, Vec<&'g Patch>> = HashMap::new();
    for p in patches {
        by_node.entry(graph.taps[&(p.kind, p.layer)]).or_default().push(p);
    }
    let inject_at = injection.map(|inj| (graph.taps[&(ComponentKind::LayerOut, inj.layer)], inj));
    move |id, value| {
        if let Some(list) = by_node.get(&id) {
            for p in list {
                value.row_mut(p.position).copy_from_slice(&p.value);
            }
        }
        if let Some((node, inj)) = inject_at {
            // alpha = 0 leaves the run untouched
            if node == id && inj.alpha != 0.0 {
                let rows = value.rows();
                for pos in inj.positions.start.min(rows)..inj.positions.end.min(rows) {
                    for (h, v) in value.row_mut(pos).iter_mut().zip(inj.vector) {
                        *h += inj.alpha * v;
                    }
                }
            }
        }
    }
}
