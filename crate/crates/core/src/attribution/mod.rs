//! Logit-difference metric, exact activation patching, and the linear
//! (gradient × activation difference) attribution approximation.

mod map;
mod suite;

use std::collections::BTreeMap;

pub use map::{AttributionMap, HeadMap};
pub use suite::{
    load_suite, parse_suite, Category, DiagnosticPair, DiagnosticPrompt, LengthPolicy, PairTokens, Variant,
};

use crate::error::{Error, Result};
use crate::model::{ActivationCache, ComponentKind, Model, Patch};
use crate::numkernel::kernels::dot;
use crate::parallel::map_ordered;

/// `logits[aligned] − logits[misaligned]` for one position's logits.
pub fn logit_diff(logits: &[f64], aligned: u32, misaligned: u32) -> Result<f64> {
    if aligned == misaligned {
        return Err(Error::Precondition("aligned and misaligned ids must differ".into()));
    }
    for id in [aligned, misaligned] {
        if id as usize >= logits.len() {
            return Err(Error::TokenOutOfRange {
                id,
                vocab: logits.len(),
            });
        }
    }
    Ok(logits[aligned as usize] - logits[misaligned as usize])
}

fn final_logit_diff(logits: &crate::numkernel::Tensor, aligned: u32, misaligned: u32) -> Result<f64> {
    logit_diff(logits.row(logits.rows() - 1), aligned, misaligned)
}

fn entry<'c>(cache: &'c ActivationCache, which: &str, kind: ComponentKind, layer: usize) -> Result<&'c crate::numkernel::Tensor> {
    cache
        .get(kind, layer)
        .ok_or_else(|| Error::MissingCoordinate(format!("{layer}_{kind} in {which}")))
}

/// `score(c) = (clean(c) − corrupt(c)) · grad(c)` for every coordinate.
pub fn attribute_linear(
    prompt_id: &str,
    clean: &ActivationCache,
    corrupt: &ActivationCache,
    corrupt_grads: &ActivationCache,
    kinds: &[ComponentKind],
    n_layers: usize,
) -> Result<AttributionMap> {
    let t = corrupt.seq_len();
    if clean.seq_len() != t || corrupt_grads.seq_len() != t {
        return Err(Error::Precondition(format!(
            "caches cover {}, {} and {} positions",
            clean.seq_len(),
            t,
            corrupt_grads.seq_len()
        )));
    }
    let mut out = AttributionMap::zeros(prompt_id, kinds, n_layers, t);
    let mut diff = vec![0.0; corrupt.d_model()];
    for &kind in kinds {
        for l in 0..n_layers {
            let (c, m, g) = (
                entry(clean, "clean cache", kind, l)?,
                entry(corrupt, "corrupt cache", kind, l)?,
                entry(corrupt_grads, "gradients", kind, l)?,
            );
            let row = out.row_mut(kind, l)?;
            for (p, score) in row.iter_mut().enumerate() {
                for ((d, a), b) in diff.iter_mut().zip(c.row(p)).zip(m.row(p)) {
                    *d = a - b;
                }
                *score = dot(&diff, g.row(p));
            }
        }
    }
    Ok(out)
}

/// Per-head view: each head's share of the attention output, scored like the
/// layer-level map and averaged over positions.
pub fn attribute_heads(
    model: &Model,
    prompt_id: &str,
    clean: &ActivationCache,
    corrupt: &ActivationCache,
    corrupt_grads: &ActivationCache,
) -> Result<HeadMap> {
    let c = model.config();
    let (d, dh, t) = (c.d_model, c.d_head(), corrupt.seq_len());
    let mut scores = vec![0.0; c.n_layers * c.n_heads];
    for l in 0..c.n_layers {
        let missing = |which| Error::MissingCoordinate(format!("{l}_attn head inputs in {which}"));
        let zc = clean.head_inputs(l).ok_or_else(|| missing("clean cache"))?;
        let zm = corrupt.head_inputs(l).ok_or_else(|| missing("corrupt cache"))?;
        let g = entry(corrupt_grads, "gradients", ComponentKind::Attn, l)?;
        let wo = model.param(&format!("l{l}.wo")).expect("layout").data();
        for p in 0..t {
            // Back-project the output gradient through Wo: gz[i] = Σ_j Wo[i, j] g[j].
            let gz: Vec<f64> = (0..d).map(|i| dot(&wo[i * d..(i + 1) * d], g.row(p))).collect();
            for h in 0..c.n_heads {
                let cols = h * dh..(h + 1) * dh;
                let diff: Vec<f64> = zc.row(p)[cols.clone()]
                    .iter()
                    .zip(&zm.row(p)[cols.clone()])
                    .map(|(a, b)| a - b)
                    .collect();
                scores[l * c.n_heads + h] += dot(&diff, &gz[cols]);
            }
        }
    }
    scores.iter_mut().for_each(|s| *s /= t as f64);
    HeadMap::new(prompt_id, c.n_layers, c.n_heads, scores)
}

/// Attribution of one pair: clean activations from the aligned prompt,
/// activations and gradients from the misaligned prompt.
#[derive(Clone, Debug)]
pub struct PairAttribution {
    pub map: AttributionMap,
    /// Present when attention outputs were requested.
    pub heads: Option<HeadMap>,
}

pub fn attribute_pair(model: &Model, pair: &DiagnosticPair, kinds: &[ComponentKind]) -> Result<PairAttribution> {
    let toks = pair.tokens(LengthPolicy::LeftPad)?;
    attribute_tokens(model, &pair.pair_id, &toks, pair.aligned_id(), pair.misaligned_id(), kinds)
}

pub fn attribute_tokens(
    model: &Model,
    prompt_id: &str,
    toks: &PairTokens,
    aligned: u32,
    misaligned: u32,
    kinds: &[ComponentKind],
) -> Result<PairAttribution> {
    let (clean_logits, clean) = model.forward(&toks.aligned, kinds)?;
    let run = model.logit_diff_gradients(&toks.misaligned, aligned, misaligned, kinds)?;
    let n_layers = model.config().n_layers;
    let mut map = attribute_linear(prompt_id, &clean, &run.cache, &run.grads, kinds, n_layers)?;
    map.metric_clean = final_logit_diff(&clean_logits, aligned, misaligned)?;
    map.metric_corrupt = run.logit_diff;
    if !map.all_finite() {
        return Err(Error::Invalid(format!("non-finite attribution for `{prompt_id}`")));
    }
    let heads = if kinds.contains(&ComponentKind::Attn) {
        Some(attribute_heads(model, prompt_id, &clean, &run.cache, &run.grads)?)
    } else {
        None
    };
    Ok(PairAttribution { map, heads })
}

fn clean_patch(model: &Model, toks: &PairTokens, kind: ComponentKind, layer: usize, position: usize) -> Result<Patch> {
    let (_, clean) = model.forward(&toks.aligned, &[kind])?;
    let value = clean
        .vector(kind, layer, position)
        .ok_or(Error::OutOfRange {
            what: "position",
            index: position,
            bound: toks.len(),
        })?
        .to_vec();
    Ok(Patch {
        kind,
        layer,
        position,
        value,
    })
}

/// Logit difference of the misaligned run with one activation replaced by
/// the aligned run's value at the same coordinate.
pub fn patch_exact(
    model: &Model,
    toks: &PairTokens,
    aligned: u32,
    misaligned: u32,
    kind: ComponentKind,
    layer: usize,
    position: usize,
) -> Result<f64> {
    if layer >= model.config().n_layers {
        return Err(Error::OutOfRange {
            what: "layer",
            index: layer,
            bound: model.config().n_layers,
        });
    }
    let patch = clean_patch(model, toks, kind, layer, position)?;
    let logits = model.forward_with_patch(&toks.misaligned, &[patch])?;
    final_logit_diff(&logits, aligned, misaligned)
}

/// Exact patching effect (patched − unpatched logit difference) at every
/// coordinate of the grid, with the replacement interpolated as
/// `corrupt + fraction · (clean − corrupt)`.
pub fn exact_patch_map(
    model: &Model,
    prompt_id: &str,
    toks: &PairTokens,
    aligned: u32,
    misaligned: u32,
    kinds: &[ComponentKind],
    fraction: f64,
) -> Result<AttributionMap> {
    let n_layers = model.config().n_layers;
    let (clean_logits, clean) = model.forward(&toks.aligned, kinds)?;
    let (_, corrupt) = model.forward(&toks.misaligned, kinds)?;
    let mut patches = Vec::new();
    for &kind in kinds {
        for l in 0..n_layers {
            let (c, m) = (entry(&clean, "clean cache", kind, l)?, entry(&corrupt, "corrupt cache", kind, l)?);
            for p in 0..toks.len() {
                let value = c.row(p).iter().zip(m.row(p)).map(|(a, b)| b + fraction * (a - b)).collect();
                patches.push(Patch {
                    kind,
                    layer: l,
                    position: p,
                    value,
                });
            }
        }
    }
    let (base, patched) = model.logit_diff_under_patches(&toks.misaligned, aligned, misaligned, &patches)?;
    let mut out = AttributionMap::zeros(prompt_id, kinds, n_layers, toks.len());
    for (patch, value) in patches.iter().zip(patched) {
        out.row_mut(patch.kind, patch.layer)?[patch.position] = value - base;
    }
    out.metric_clean = final_logit_diff(&clean_logits, aligned, misaligned)?;
    out.metric_corrupt = base;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    /// Successful per-pair results, in suite order.
    pub results: Vec<(Category, PairAttribution)>,
    pub category_means: BTreeMap<Category, AttributionMap>,
    /// Pair id and message for every pair that failed.
    pub errors: Vec<(String, String)>,
    /// Number of prompts (two per successful pair) processed.
    pub prompts_processed: usize,
    /// Fraction of pairs whose aligned run prefers the aligned token more
    /// than the misaligned run does.
    pub clean_above_corrupt: f64,
}

impl SuiteReport {
    pub fn maps(&self) -> Vec<&AttributionMap> {
        self.results.iter().map(|(_, r)| &r.map).collect()
    }
}

/// Attributes every pair (on up to `jobs` threads) and averages per category.
pub fn run_suite(model: &Model, pairs: &[DiagnosticPair], kinds: &[ComponentKind], jobs: usize) -> Result<SuiteReport> {
    if pairs.is_empty() {
        return Err(Error::Precondition("empty diagnostic suite".into()));
    }
    let outcomes = map_ordered(pairs, jobs, |_, pair| attribute_pair(model, pair, kinds));
    let mut results = Vec::new();
    let mut errors = Vec::new();
    for (pair, outcome) in pairs.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push((pair.category, r)),
            Err(e) => errors.push((pair.pair_id.clone(), e.to_string())),
        }
    }
    let mut category_means = BTreeMap::new();
    for cat in Category::ALL {
        let maps: Vec<&AttributionMap> = results.iter().filter(|(c, _)| *c == cat).map(|(_, r)| &r.map).collect();
        if !maps.is_empty() {
            category_means.insert(cat, AttributionMap::mean(format!("mean_{cat}"), &maps)?);
        }
    }
    let healthy = results.iter().filter(|(_, r)| r.map.metric_clean > r.map.metric_corrupt).count();
    let clean_above_corrupt = if results.is_empty() {
        0.0
    } else {
        healthy as f64 / results.len() as f64
    };
    Ok(SuiteReport {
        prompts_processed: 2 * results.len(),
        results,
        category_means,
        errors,
        clean_above_corrupt,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerChoice {
    pub layer: usize,
    /// (layer, aggregate score), best first.
    pub ranking: Vec<(usize, f64)>,
}

/// Ranks layers by the mean over maps of the largest absolute score of
/// `kind` in that layer. Ties go to the lower layer.
pub fn select_layer(maps: &[&AttributionMap], kind: ComponentKind) -> Result<LayerChoice> {
    let first = maps.first().ok_or_else(|| Error::Precondition("no attribution maps".into()))?;
    let n_layers = first.n_layers;
    let mut agg = vec![0.0; n_layers];
    for m in maps {
        if m.n_layers != n_layers {
            return Err(Error::Invalid("maps disagree on layer count".into()));
        }
        for (l, a) in agg.iter_mut().enumerate() {
            *a += m.row(kind, l)?.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        }
    }
    let mut ranking: Vec<(usize, f64)> = agg.into_iter().map(|s| s / maps.len() as f64).enumerate().collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(LayerChoice {
        layer: ranking[0].0,
        ranking,
    })
}

#[cfg(test)]
mod tests;
