//! Input resolution shared by the subcommands: model, corpus split,
//! layer, steering vector and α.

use std::path::Path;
use std::sync::Arc;

use star_core::attribution::{load_suite, run_suite, select_layer, LayerChoice};
use star_core::corpus::{filter_negotiation, filter_support, load_dialogues, RawDialogue};
use star_core::dialogue::{
    format_context, ExternalPartner, PartnerAdapter, Role, Scenario, SeekerRules, SellerRules, TaskKind,
};
use star_core::metrics::{LexCategory, Lexicon};
use star_core::model::{load_checkpoint, ComponentKind, Model};
use star_core::steering::{
    alpha_sweep, build_steering_vector, length_normalize, load_vector_for, save_vector, ContrastiveSet, SteerConfig,
    SteeringVector, SweepOutcome,
};

use crate::config::{Choice, ExperimentConfig, PartnerKind};
use crate::error::{load, CliError, CliResult};

pub fn load_model(cfg: &ExperimentConfig) -> CliResult<Model> {
    let path = cfg.checkpoint()?;
    if !path.exists() {
        return Err(CliError::Input(format!("checkpoint {} does not exist", path.display())));
    }
    load(path, load_checkpoint(path))
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, key: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("{key} is not set")))
}

/// Corpus split in file order: the last `eval_fraction` of dialogues is
/// held out, the rest is for training and validation.
pub struct Split {
    pub train: Vec<RawDialogue>,
    pub held_out: Vec<RawDialogue>,
}

pub fn load_split(cfg: &ExperimentConfig) -> CliResult<Split> {
    let path = required(&cfg.paths.corpus, "paths.corpus")?;
    let mut all = load(path, load_dialogues(path))?;
    let n_eval = (cfg.experiment.eval_fraction * all.len() as f64).ceil() as usize;
    let held_out = all.split_off(all.len() - n_eval.min(all.len()));
    Ok(Split { train: all, held_out })
}

/// Scenarios drawn from `dialogues`. Support runs start after the first
/// seeker turn (single-turn) or from scratch (multi-turn); negotiations
/// start at the buyer's reply to the first concession.
pub fn scenarios(task: TaskKind, dialogues: &[RawDialogue], multi_turn: bool) -> Vec<Scenario> {
    match task {
        TaskKind::Support => filter_support(dialogues)
            .iter()
            .map(|d| d.to_scenario(task, if multi_turn { 0 } else { 1 }))
            .collect(),
        TaskKind::Negotiation => filter_negotiation(dialogues)
            .eligible
            .iter()
            .map(|e| e.dialogue.to_scenario(task, e.prefix_len))
            .collect(),
    }
}

/// Contexts ending at a target cue, for the sweep.
pub fn validation_prompts(cfg: &ExperimentConfig, split: &Split) -> CliResult<Vec<Vec<u32>>> {
    let mut all = scenarios(cfg.task, &split.train, false);
    let n = cfg.steer.validation_prompts.min(all.len());
    let picked = all.split_off(all.len() - n);
    if picked.is_empty() {
        return Err(CliError::Input("no eligible validation dialogues in the corpus".into()));
    }
    Ok(picked
        .iter()
        .map(|s| {
            // Negotiation histories end with the buyer; cut before that reply.
            let end = match s.history.last() {
                Some(t) if t.role == Role::Target => s.history.len() - 1,
                _ => s.history.len(),
            };
            format_context(None, &s.history[..end], Role::Target)
        })
        .collect())
}

pub fn resolve_layer(cfg: &ExperimentConfig, model: &Model, jobs: usize) -> CliResult<(usize, Option<LayerChoice>)> {
    let n_layers = model.config().n_layers;
    match cfg.steer.layer {
        Choice::Fixed(l) if l < n_layers => Ok((l, None)),
        Choice::Fixed(l) => Err(CliError::Usage(format!("steer.layer {l} is out of range for {n_layers} layers"))),
        Choice::Auto => {
            let path = required(&cfg.paths.suite, "paths.suite")?;
            let suite = load(path, load_suite(path))?;
            let report = run_suite(model, &suite, &[ComponentKind::LayerOut], jobs)?;
            let choice = select_layer(&report.maps(), ComponentKind::LayerOut)?;
            Ok((choice.layer, Some(choice)))
        }
    }
}

pub fn build_vector(cfg: &ExperimentConfig, model: &Model, layer: usize) -> CliResult<SteeringVector> {
    let path = required(&cfg.paths.contrastive, "paths.contrastive")?;
    let set = load(path, ContrastiveSet::load(path, Some(cfg.contrastive_task())))?;
    let norm = length_normalize(&set)?;
    Ok(build_steering_vector(model, &norm, layer)?)
}

/// Loads the configured vector, or builds and saves one.
pub fn vector(cfg: &ExperimentConfig, model: &Model) -> CliResult<SteeringVector> {
    if let Some(p) = &cfg.paths.vector {
        if p.exists() {
            let v = load(p, load_vector_for(p, model))?;
            if let Choice::Fixed(l) = cfg.steer.layer {
                if l != v.layer {
                    return Err(CliError::Usage(format!("vector is for layer {}, config asks for {l}", v.layer)));
                }
            }
            return Ok(v);
        }
    }
    let (layer, _) = resolve_layer(cfg, model, cfg.jobs)?;
    let v = build_vector(cfg, model, layer)?;
    let out = cfg.vector_path();
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_vector(&v, &out)?;
    Ok(v)
}

pub fn objective(cfg: &ExperimentConfig, lexicon: Arc<Lexicon>) -> CliResult<Box<dyn Fn(&str) -> f64 + Sync>> {
    let name = cfg.objective();
    if name == "price_mentions" {
        return Ok(Box::new(|s: &str| star_core::corpus::prices::price_mentions(s).len() as f64));
    }
    let cat = LexCategory::ALL
        .iter()
        .copied()
        .find(|c| c.as_str() == name)
        .ok_or_else(|| CliError::Usage(format!("unknown sweep objective `{name}`")))?;
    Ok(Box::new(move |s: &str| {
        star_core::metrics::emotion_counts(s, &lexicon).normalized[&cat]
    }))
}

pub fn base_steer(cfg: &ExperimentConfig, layer: usize, alpha: f64) -> CliResult<SteerConfig> {
    Ok(SteerConfig::new(alpha, cfg.steer.window_k, layer, cfg.steer.mode)?)
}

/// The configured α, or the sweep's choice.
pub fn resolve_alpha(
    cfg: &ExperimentConfig,
    model: &Model,
    v: &SteeringVector,
    lexicon: Arc<Lexicon>,
) -> CliResult<(f64, Option<SweepOutcome>)> {
    match cfg.steer.alpha {
        Choice::Fixed(a) => Ok((a, None)),
        Choice::Auto => {
            let outcome = sweep(cfg, model, v, lexicon)?;
            Ok((outcome.chosen_alpha, Some(outcome)))
        }
    }
}

pub fn sweep(cfg: &ExperimentConfig, model: &Model, v: &SteeringVector, lexicon: Arc<Lexicon>) -> CliResult<SweepOutcome> {
    let split = load_split(cfg)?;
    let prompts = validation_prompts(cfg, &split)?;
    let metric = objective(cfg, lexicon)?;
    let base = base_steer(cfg, v.layer, 1.0)?;
    Ok(alpha_sweep(model, v, &base, &prompts, &*metric, &cfg.decode, cfg.steer.guard, cfg.jobs)?)
}

#[derive(serde::Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RuleFile {
    seller: Option<SellerRules>,
    seeker: Option<SeekerRules>,
}

pub fn partner(cfg: &ExperimentConfig, model: &Model, lexicon: Arc<Lexicon>) -> CliResult<Option<PartnerAdapter>> {
    let p = &cfg.partner;
    let (mut seller, mut seeker) = (p.seller.clone(), p.seeker.clone());
    if let Some(path) = &p.rules {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let rules: RuleFile = toml::from_str(&text).map_err(|e| CliError::input(path, e))?;
        seller = rules.seller.unwrap_or(seller);
        seeker = rules.seeker.unwrap_or(seeker);
    }
    Ok(match p.kind {
        PartnerKind::None => None,
        PartnerKind::Scripted => Some(match cfg.task {
            TaskKind::Negotiation => PartnerAdapter::ScriptedSeller {
                rules: seller,
                seed: cfg.seed,
            },
            TaskKind::Support => PartnerAdapter::ScriptedSeeker {
                rules: seeker,
                lexicon,
                seed: cfg.seed,
            },
        }),
        PartnerKind::LocalModel => Some(PartnerAdapter::LocalModel {
            model: Arc::new(model.clone()),
            decode: cfg.decode.clone(),
            system_prompt: p.system_prompt.clone(),
        }),
        PartnerKind::External => Some(PartnerAdapter::External(ExternalPartner::new(p.external.clone())?)),
    })
}

pub fn system_prompt(cfg: &ExperimentConfig) -> CliResult<Option<String>> {
    match &cfg.paths.system_prompt {
        None => Ok(None),
        Some(p) => Ok(Some(
            std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))?.trim().to_string(),
        )),
    }
}
