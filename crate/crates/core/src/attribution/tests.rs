use proptest::prelude::*;

use super::*;
use crate::model::tokenizer::{tokenize, BOS};
use crate::model::ModelConfig;
use crate::numkernel::Tensor;

fn model(final_norm: bool, n_layers: usize) -> Model {
    Model::new(ModelConfig {
        n_layers,
        n_heads: 2,
        d_model: 16,
        d_ff: 32,
        max_context: 48,
        seed: 21,
        final_norm,
        ..Default::default()
    })
    .unwrap()
}

fn toks(a: &str, b: &str) -> PairTokens {
    let enc = |s: &str| {
        let mut t = vec![BOS];
        t.extend(tokenize(s));
        t
    };
    PairTokens::new(enc(a), enc(b), LengthPolicy::LeftPad).unwrap()
}

const A: u32 = b'd' as u32;
const M: u32 = b'f' as u32;

fn pair(id: &str, cat: &str) -> DiagnosticPair {
    let text = format!(
        "{{\"pair_id\":\"{id}\",\"category\":\"{cat}\",\"variant\":\"aligned\",\"prompt\":\"Floods hit. That's \",\"expected_token\":\"d\",\"undesired_token\":\"f\"}}\n\
         {{\"pair_id\":\"{id}\",\"category\":\"{cat}\",\"variant\":\"misaligned\",\"prompt\":\"A loss. That's \",\"expected_token\":\"f\",\"undesired_token\":\"d\"}}"
    );
    parse_suite(&text).unwrap().remove(0)
}

#[test]
fn logit_diff_examples() {
    assert_eq!(logit_diff(&[2.0, 0.5], 0, 1).unwrap(), 1.5);
    assert_eq!(logit_diff(&[0.7, 0.7], 0, 1).unwrap(), 0.0);
    assert!(logit_diff(&[1.0, 2.0], 1, 1).is_err());
    assert!(logit_diff(&[1.0, 2.0], 0, 2).is_err());
}

proptest! {
    #[test]
    fn logit_diff_is_antisymmetric(v in prop::collection::vec(-50.0f64..50.0, 2..12), i in 0usize..12, j in 0usize..12) {
        let (i, j) = (i % v.len(), j % v.len());
        prop_assume!(i != j);
        let a = logit_diff(&v, i as u32, j as u32).unwrap();
        let b = logit_diff(&v, j as u32, i as u32).unwrap();
        prop_assert_eq!(a, -b);
    }

    #[test]
    fn scores_are_linear_in_the_difference(scale in -4.0f64..4.0, seed in 0u64..1000) {
        let kinds = [ComponentKind::LayerOut];
        let mk = |s: u64| {
            let mut c = ActivationCache::new(3, 4);
            let vals: Vec<f64> = (0..12).map(|i| (((i as u64 + 1) * (s + 7)) % 13) as f64 - 6.0).collect();
            c.insert(ComponentKind::LayerOut, 0, Tensor::new(vec![3, 4], vals).unwrap()).unwrap();
            c
        };
        let (corrupt, grads) = (mk(seed), mk(seed + 1));
        let clean = mk(seed + 2);
        let base = attribute_linear("p", &clean, &corrupt, &grads, &kinds, 1).unwrap();
        let mut scaled = ActivationCache::new(3, 4);
        let c = clean.get(ComponentKind::LayerOut, 0).unwrap();
        let m = corrupt.get(ComponentKind::LayerOut, 0).unwrap();
        let vals = c.data().iter().zip(m.data()).map(|(a, b)| b + scale * (a - b)).collect();
        scaled.insert(ComponentKind::LayerOut, 0, Tensor::new(vec![3, 4], vals).unwrap()).unwrap();
        let s = attribute_linear("p", &scaled, &corrupt, &grads, &kinds, 1).unwrap();
        for (x, y) in base.scores().iter().zip(s.scores()) {
            prop_assert!((x * scale - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn equal_caches_give_zero_map() {
    let m = model(true, 2);
    let t = toks("Floods hit. That's ", "Floods hit. That's ");
    let r = attribute_tokens(&m, "p", &t, A, M, &ComponentKind::ALL).unwrap();
    assert!(r.map.scores().iter().all(|&s| s == 0.0));
}

#[test]
fn doubling_the_difference_doubles_scores() {
    let m = model(true, 2);
    let t = toks("Floods hit. That's ", "A loss. That's ");
    let (_, clean) = m.forward(&t.aligned, &[ComponentKind::Mlp]).unwrap();
    let run = m.logit_diff_gradients(&t.misaligned, A, M, &[ComponentKind::Mlp]).unwrap();
    let mut doubled = ActivationCache::new(t.len(), 16);
    for l in 0..2 {
        let c = clean.get(ComponentKind::Mlp, l).unwrap();
        let r = run.cache.get(ComponentKind::Mlp, l).unwrap();
        let vals = c.data().iter().zip(r.data()).map(|(a, b)| b + 2.0 * (a - b)).collect();
        doubled.insert(ComponentKind::Mlp, l, Tensor::new(vec![t.len(), 16], vals).unwrap()).unwrap();
    }
    let kinds = [ComponentKind::Mlp];
    let one = attribute_linear("p", &clean, &run.cache, &run.grads, &kinds, 2).unwrap();
    let two = attribute_linear("p", &doubled, &run.cache, &run.grads, &kinds, 2).unwrap();
    for (a, b) in one.scores().iter().zip(two.scores()) {
        assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn missing_coordinate_is_named() {
    let empty = ActivationCache::new(2, 16);
    let err = attribute_linear("p", &empty, &empty, &empty, &[ComponentKind::Mlp], 1).unwrap_err();
    assert!(matches!(&err, Error::MissingCoordinate(s) if s.contains("0_mlp")), "{err}");
}

#[test]
fn self_patch_leaves_metric_unchanged() {
    let m = model(true, 2);
    let t = toks("Floods hit. That's ", "Floods hit. That's ");
    let (logits, _) = m.forward(&t.misaligned, &[]).unwrap();
    let base = logit_diff(logits.row(t.len() - 1), A, M).unwrap();
    for kind in ComponentKind::ALL {
        for l in 0..2 {
            for p in [0, 5, t.len() - 1] {
                assert_eq!(patch_exact(&m, &t, A, M, kind, l, p).unwrap(), base);
            }
        }
    }
}

#[test]
fn patching_final_residual_stream_restores_aligned_metric() {
    let m = model(true, 2);
    let t = toks("Floods hit. That's ", "A loss. That's ");
    let (clean_logits, clean) = m.forward(&t.aligned, &[ComponentKind::LayerOut]).unwrap();
    let patches: Vec<Patch> = (0..t.len())
        .map(|p| Patch {
            kind: ComponentKind::LayerOut,
            layer: 1,
            position: p,
            value: clean.vector(ComponentKind::LayerOut, 1, p).unwrap().to_vec(),
        })
        .collect();
    let patched = m.forward_with_patch(&t.misaligned, &patches).unwrap();
    let want = logit_diff(clean_logits.row(t.len() - 1), A, M).unwrap();
    let got = logit_diff(patched.row(t.len() - 1), A, M).unwrap();
    assert!((want - got).abs() < 1e-9);
}

#[test]
fn patch_outside_grid_is_an_error() {
    let m = model(true, 2);
    let t = toks("ab", "cd");
    assert!(patch_exact(&m, &t, A, M, ComponentKind::Attn, 2, 0).is_err());
    assert!(patch_exact(&m, &t, A, M, ComponentKind::Attn, 0, 3).is_err());
}

#[test]
fn attribution_is_exact_for_a_linear_readout() {
    let m = model(false, 1);
    let t = toks("Floods hit. That's ", "A loss. That's ");
    let kinds = [ComponentKind::LayerOut];
    let approx = attribute_tokens(&m, "p", &t, A, M, &kinds).unwrap().map;
    let exact = exact_patch_map(&m, "p", &t, A, M, &kinds, 1.0).unwrap();
    for (a, e) in approx.scores().iter().zip(exact.scores()) {
        assert!((a - e).abs() <= 1e-10, "{a} vs {e}");
    }
    assert_eq!(approx.metric_corrupt, exact.metric_corrupt);
}

#[test]
fn head_scores_sum_to_attention_scores() {
    let m = model(true, 2);
    let t = toks("Floods hit. That's ", "A loss. That's ");
    let r = attribute_tokens(&m, "p", &t, A, M, &[ComponentKind::Attn]).unwrap();
    let heads = r.heads.unwrap();
    for l in 0..2 {
        let total: f64 = r.map.row(ComponentKind::Attn, l).unwrap().iter().sum();
        let from_heads: f64 = (0..2).map(|h| heads.get(l, h)).sum::<f64>() * t.len() as f64;
        assert!((total - from_heads).abs() < 1e-10 * (1.0 + total.abs()));
    }
}

#[test]
fn suite_means_singleton_and_duplicate() {
    let m = model(true, 2);
    let p = pair("a", "empathy");
    let one = run_suite(&m, std::slice::from_ref(&p), &ComponentKind::ALL, 1).unwrap();
    let two = run_suite(&m, &[p.clone(), p], &ComponentKind::ALL, 2).unwrap();
    assert_eq!(one.prompts_processed, 2);
    assert_eq!(two.prompts_processed, 4);
    let single = &one.results[0].1.map;
    assert_eq!(one.category_means[&Category::Empathy].scores(), single.scores());
    assert_eq!(two.category_means[&Category::Empathy].scores(), single.scores());
}

#[test]
fn suite_collects_failures() {
    let m = Model::new(ModelConfig {
        n_layers: 1,
        n_heads: 1,
        d_model: 4,
        d_ff: 4,
        max_context: 8,
        ..Default::default()
    })
    .unwrap();
    let report = run_suite(&m, &[pair("long", "realism")], &[ComponentKind::LayerOut], 1).unwrap();
    assert!(report.results.is_empty());
    assert_eq!(report.errors.len(), 1);
    assert_eq!(report.errors[0].0, "long");
    assert!(run_suite(&m, &[], &[ComponentKind::LayerOut], 1).is_err());
}

fn planted(layer_peak: usize, n_layers: usize) -> AttributionMap {
    let mut m = AttributionMap::zeros("p", &[ComponentKind::LayerOut], n_layers, 4);
    for l in 0..n_layers {
        let row = m.row_mut(ComponentKind::LayerOut, l).unwrap();
        row[1] = if l == layer_peak { -5.0 } else { 0.5 * l as f64 };
    }
    m
}

#[test]
fn select_layer_finds_planted_dominance() {
    let a = planted(2, 4);
    let b = planted(2, 4);
    let choice = select_layer(&[&a, &b], ComponentKind::LayerOut).unwrap();
    assert_eq!(choice.layer, 2);
    assert_eq!(choice.ranking[0], (2, 5.0));
    assert!(select_layer(&[], ComponentKind::LayerOut).is_err());
}

#[test]
fn select_layer_ties_go_low() {
    let mut m = AttributionMap::zeros("p", &[ComponentKind::LayerOut], 3, 2);
    for l in 0..3 {
        m.row_mut(ComponentKind::LayerOut, l).unwrap()[0] = 1.0;
    }
    let choice = select_layer(&[&m], ComponentKind::LayerOut).unwrap();
    assert_eq!(choice.layer, 0);
    assert_eq!(choice.ranking.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 1, 2]);
}
