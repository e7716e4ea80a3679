use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use star_core::attribution::{load_suite, run_suite, select_layer, AttributionMap};
use star_core::corpus::training_sequences;
use star_core::dialogue::{
    format_context, generate_turn, run_multi_turn, run_single_turn, Arm, Conversation, Role, Steer, Turn,
};
use star_core::metrics::{Lexicon, MetricSuite};
use star_core::model::{save_checkpoint, train_toy, ComponentKind, CHECKPOINT_VERSION};
use star_core::parallel::map_ordered;
use star_core::steering::{save_vector, SweepOutcome};

use crate::config::{file_sha256, ExperimentConfig};
use crate::error::{load, CliError, CliResult};
use crate::pipeline::{self, load_model, load_split};
use crate::report::{self, SummaryHeader};
use crate::svg::heatmap;

fn out_dir(cfg: &ExperimentConfig, sub: &str) -> CliResult<std::path::PathBuf> {
    let d = if sub.is_empty() { cfg.output_dir.clone() } else { cfg.output_dir.join(sub) };
    fs::create_dir_all(&d)?;
    Ok(d)
}

pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<()> {
    let split = load_split(cfg)?;
    // Chunks fit in one training window, so no position embedding used by
    // a chunk goes untrained.
    let len = cfg.train.window.min(cfg.model.architecture.max_context);
    let seqs = training_sequences(&split.train, len);
    if seqs.is_empty() {
        return Err(CliError::Input("the training split is empty".into()));
    }
    let (model, report) = train_toy(&cfg.model.architecture, &seqs, &cfg.train)?;
    let path = cfg.checkpoint()?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    save_checkpoint(&model, path)?;
    println!(
        "trained {} steps on {} sequences: loss {:.4} -> {:.4}; wrote {}",
        cfg.train.steps,
        seqs.len(),
        report.initial_loss,
        report.final_loss,
        path.display()
    );
    Ok(())
}

fn kind_csv(map: &AttributionMap, kind: ComponentKind) -> String {
    let mut s = String::from("layer");
    for p in 0..map.seq_len {
        write!(s, ",{p}").unwrap();
    }
    s.push('\n');
    for l in 0..map.n_layers {
        write!(s, "{l}").unwrap();
        for v in map.row(kind, l).expect("kind present") {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn cmd_attribute(cfg: &ExperimentConfig, kinds: &[ComponentKind]) -> CliResult<()> {
    let path = cfg
        .paths
        .suite
        .as_deref()
        .ok_or_else(|| CliError::Usage("paths.suite is not set".into()))?;
    let model = load_model(cfg)?;
    let suite = load(path, load_suite(path))?;
    let report = run_suite(&model, &suite, kinds, cfg.jobs)?;
    let dir = out_dir(cfg, "attribution")?;
    for (_, r) in &report.results {
        for &k in kinds {
            fs::write(dir.join(format!("{}_{k}.csv", r.map.prompt_id)), kind_csv(&r.map, k))?;
        }
    }
    for (cat, mean) in &report.category_means {
        fs::write(dir.join(format!("{cat}_mean.csv")), mean.to_csv())?;
        fs::write(dir.join(format!("{cat}_mean.svg")), heatmap(mean, &format!("{cat} mean attribution")))?;
    }
    let rank_kind = if kinds.contains(&ComponentKind::LayerOut) { ComponentKind::LayerOut } else { kinds[0] };
    let mut txt = String::new();
    if !report.results.is_empty() {
        let choice = select_layer(&report.maps(), rank_kind)?;
        writeln!(txt, "selected layer: {}", choice.layer).unwrap();
        writeln!(txt, "ranking by mean max |{rank_kind}| score:").unwrap();
        for (l, s) in &choice.ranking {
            writeln!(txt, "  layer {l}: {s:.6e}").unwrap();
        }
    }
    writeln!(txt, "pairs scored: {} of {}", report.results.len(), suite.len()).unwrap();
    writeln!(txt, "pairs with aligned metric above misaligned: {:.3}", report.clean_above_corrupt).unwrap();
    fs::write(dir.join("layers.txt"), &txt)?;
    print!("{txt}");
    for (id, e) in &report.errors {
        eprintln!("pair {id}: {e}");
    }
    if !report.errors.is_empty() {
        return Err(CliError::Partial {
            failed: report.errors.len(),
            total: suite.len(),
            what: "pairs",
        });
    }
    Ok(())
}

pub fn cmd_steer(cfg: &ExperimentConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let (layer, choice) = pipeline::resolve_layer(cfg, &model, cfg.jobs)?;
    if let Some(c) = choice {
        println!("auto layer: {} (ranking {:?})", c.layer, c.ranking);
    }
    let v = pipeline::build_vector(cfg, &model, layer)?;
    let path = cfg.vector_path();
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    save_vector(&v, &path)?;
    println!(
        "vector for `{}` at layer {layer}: n = {}, T = {}, norm {:.6}; wrote {}",
        v.task,
        v.n,
        v.seq_len,
        v.norm(),
        path.display()
    );
    Ok(())
}

fn write_sweep(path: &Path, outcome: &SweepOutcome) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "metric_mean", "nll", "passes_guard", "chosen"])?;
    w.write_record(["0".to_string(), outcome.baseline_metric.to_string(), outcome.baseline_nll.to_string(), "true".into(), "false".into()])?;
    for p in &outcome.table {
        w.write_record([
            p.alpha.to_string(),
            p.metric_mean.to_string(),
            p.nll.to_string(),
            p.passes_guard.to_string(),
            (p.alpha == outcome.chosen_alpha).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let v = pipeline::vector(cfg, &model)?;
    let lexicon = Arc::new(Lexicon::builtin());
    let dir = out_dir(cfg, "")?;
    match pipeline::sweep(cfg, &model, &v, lexicon) {
        Ok(outcome) => {
            write_sweep(&dir.join("sweep.csv"), &outcome)?;
            println!("chosen alpha: {}", outcome.chosen_alpha);
            Ok(())
        }
        Err(CliError::Core(star_core::Error::SweepRejected(table))) => {
            let outcome = SweepOutcome {
                chosen_alpha: f64::NAN,
                baseline_metric: f64::NAN,
                baseline_nll: f64::NAN,
                table: table.clone(),
            };
            write_sweep(&dir.join("sweep.csv"), &outcome)?;
            Err(CliError::Core(star_core::Error::SweepRejected(table)))
        }
        Err(e) => Err(e),
    }
}

pub fn cmd_generate(cfg: &ExperimentConfig, prompt: &str, steered: bool) -> CliResult<()> {
    let model = load_model(cfg)?;
    let ctx = format_context(None, &[Turn::history(Role::Partner, prompt)], Role::Target);
    let g = if steered {
        let v = pipeline::vector(cfg, &model)?;
        let (alpha, _) = pipeline::resolve_alpha(cfg, &model, &v, Arc::new(Lexicon::builtin()))?;
        let sc = pipeline::base_steer(cfg, v.layer, alpha)?;
        generate_turn(&model, &ctx, Some(Steer { vector: &v, config: &sc }), &cfg.decode)?
    } else {
        generate_turn(&model, &ctx, None, &cfg.decode)?
    };
    println!("{}", g.text);
    Ok(())
}

#[derive(Serialize)]
struct Failure<'a> {
    id: &'a str,
    condition: String,
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    partial: Option<&'a Conversation>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: String,
    checkpoint_sha256: String,
    vector_sha256: Option<String>,
    seed: u64,
    tool_version: &'static str,
    checkpoint_format: u32,
    layer: Option<usize>,
    alpha: Option<f64>,
    scenarios: usize,
    conversations: usize,
    failures: usize,
    config: &'a ExperimentConfig,
}

enum Outcome {
    Done(Conversation),
    Failed { id: String, condition: String, error: star_core::Error },
}

/// Runs every arm and variant on the held-out scenarios and writes
/// transcripts, metrics, statistics, summary and manifest.
pub fn cmd_run(cfg: &ExperimentConfig) -> CliResult<()> {
    let model = load_model(cfg)?;
    let arms = &cfg.experiment.arms;
    let variants = &cfg.experiment.variants;
    if arms.is_empty() && variants.is_empty() {
        return Err(CliError::Usage("experiment needs at least one arm or variant".into()));
    }
    let needs_steer = arms.contains(&Arm::Steered) || variants.iter().any(|v| v.schedule().is_some_and(|s| s.contains(&true)));
    let lexicon = Arc::new(Lexicon::builtin());
    let dir = out_dir(cfg, "")?;

    let (vector, alpha) = if needs_steer {
        let v = pipeline::vector(cfg, &model)?;
        let (alpha, sweep) = pipeline::resolve_alpha(cfg, &model, &v, lexicon.clone())?;
        if let Some(s) = &sweep {
            write_sweep(&dir.join("sweep.csv"), s)?;
        }
        (Some(v), Some(alpha))
    } else {
        (None, None)
    };
    let steer_cfg = match (&vector, alpha) {
        (Some(v), Some(a)) => Some(pipeline::base_steer(cfg, v.layer, a)?),
        _ => None,
    };
    let steer = vector
        .as_ref()
        .zip(steer_cfg.as_ref())
        .map(|(vector, config)| Steer { vector, config });
    let system_prompt = pipeline::system_prompt(cfg)?;
    let partner = pipeline::partner(cfg, &model, lexicon)?;
    if !variants.is_empty() && partner.is_none() {
        return Err(CliError::Usage("multi-turn variants need a partner".into()));
    }

    let split = load_split(cfg)?;
    let limit = cfg.experiment.scenarios.unwrap_or(usize::MAX);
    let single: Vec<_> = pipeline::scenarios(cfg.task, &split.held_out, false).into_iter().take(limit).collect();
    let multi: Vec<_> = pipeline::scenarios(cfg.task, &split.held_out, true).into_iter().take(limit).collect();
    if single.is_empty() {
        return Err(CliError::Input("no eligible held-out scenarios".into()));
    }

    let per_scenario = map_ordered(&single, cfg.jobs, |i, s| {
        let mut out = Vec::new();
        if !arms.is_empty() {
            match run_single_turn(&model, s, arms, steer, system_prompt.as_deref(), partner.as_ref(), &cfg.decode) {
                Ok(convs) => out.extend(convs.into_iter().map(Outcome::Done)),
                Err(error) => out.push(Outcome::Failed {
                    id: s.id.clone(),
                    condition: "single_turn".into(),
                    error,
                }),
            }
        }
        if let (Some(p), Some(ms)) = (partner.as_ref(), multi.get(i)) {
            for &v in variants {
                match run_multi_turn(&model, ms, v, p, steer, &cfg.decode) {
                    Ok(c) => out.push(Outcome::Done(c)),
                    Err(error) => out.push(Outcome::Failed {
                        id: ms.id.clone(),
                        condition: v.to_string(),
                        error,
                    }),
                }
            }
        }
        out
    });

    let mut convs = Vec::new();
    let mut failures = String::new();
    let mut n_failed = 0;
    for o in per_scenario.into_iter().flatten() {
        match o {
            Outcome::Done(c) => convs.push(c),
            Outcome::Failed { id, condition, error } => {
                n_failed += 1;
                eprintln!("conversation {id} ({condition}): {error}");
                let partial = match &error {
                    star_core::Error::Conversation { partial, .. } => Some(&**partial),
                    _ => None,
                };
                let f = Failure {
                    id: &id,
                    condition,
                    error: error.to_string(),
                    partial,
                };
                failures.push_str(&serde_json::to_string(&f).expect("serializes"));
                failures.push('\n');
            }
        }
    }
    let mut transcripts = String::new();
    for c in &convs {
        transcripts.push_str(&c.to_jsonl_line());
        transcripts.push('\n');
    }
    fs::write(dir.join("transcripts.jsonl"), transcripts)?;
    fs::write(dir.join("failures.jsonl"), failures)?;
    let total = convs.len() + n_failed;

    write_reports(cfg, &dir, &convs, single.len(), n_failed, steer_cfg.as_ref().map(|s| s.layer), alpha)?;

    let manifest = Manifest {
        config_hash: cfg.hash(),
        checkpoint_sha256: file_sha256(cfg.checkpoint()?)?,
        vector_sha256: match &vector {
            Some(_) => Some(file_sha256(&cfg.vector_path())?),
            None => None,
        },
        seed: cfg.seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        checkpoint_format: CHECKPOINT_VERSION,
        layer: steer_cfg.as_ref().map(|s| s.layer),
        alpha,
        scenarios: single.len(),
        conversations: convs.len(),
        failures: n_failed,
        config: &redacted(cfg),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("serializes") + "\n")?;
    println!("{} conversations ({} failed); outputs in {}", convs.len(), n_failed, dir.display());
    match n_failed {
        0 => Ok(()),
        n => Err(CliError::Partial {
            failed: n,
            total,
            what: "conversations",
        }),
    }
}

fn redacted(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.output_dir = Default::default();
    c.jobs = 0;
    c
}

fn write_reports(
    cfg: &ExperimentConfig,
    dir: &Path,
    convs: &[Conversation],
    scenarios: usize,
    failures: usize,
    layer: Option<usize>,
    alpha: Option<f64>,
) -> CliResult<()> {
    let suite = MetricSuite::default();
    let rows = report::utterance_rows(convs, &suite);
    let negs = report::negotiation_rows(convs);
    report::write_metrics(&dir.join("metrics.csv"), &rows)?;
    if !negs.is_empty() {
        report::write_negotiation(&dir.join("negotiation.csv"), &negs)?;
    }
    let comparisons = report::compare(&rows, &negs, cfg.q_threshold)?;
    report::write_stats(&dir.join("stats.csv"), &comparisons)?;
    let header = SummaryHeader {
        task: cfg.task,
        scenarios,
        conversations: convs.len(),
        failures,
        layer,
        alpha,
        q: cfg.q_threshold,
    };
    fs::write(dir.join("summary.md"), report::summary(&header, &comparisons))?;
    Ok(())
}

/// Recomputes metrics, statistics and summary from `transcripts.jsonl`.
pub fn cmd_report(cfg: &ExperimentConfig) -> CliResult<()> {
    let dir = cfg.output_dir.clone();
    let path = dir.join("transcripts.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| CliError::input(&path, e))?;
    let mut convs = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let c: Conversation = serde_json::from_str(line).map_err(|e| CliError::Input(format!("{}:{}: {e}", path.display(), i + 1)))?;
        convs.push(c);
    }
    let failures = fs::read_to_string(dir.join("failures.jsonl"))
        .map(|s| s.lines().filter(|l| !l.trim().is_empty()).count())
        .unwrap_or(0);
    let mut ids: Vec<&str> = convs.iter().map(|c| c.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    let steering = convs.iter().flat_map(|c| &c.turns).find_map(|t| t.steering.as_ref());
    write_reports(
        cfg,
        &dir,
        &convs,
        ids.len(),
        failures,
        steering.map(|s| s.layer),
        steering.map(|s| s.alpha),
    )?;
    println!("reports rewritten in {}", dir.display());
    Ok(())
}
