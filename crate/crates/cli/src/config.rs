use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use star_core::dialogue::{Arm, DecodeConfig, ExternalConfig, SeekerRules, SellerRules, TaskKind, Variant};
use star_core::model::{ModelConfig, TrainOptions};
use star_core::steering::{SteerMode, DEFAULT_GUARD, DEFAULT_WINDOW};

use crate::error::{CliError, CliResult};

/// A setting that is either fixed or resolved by the pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Choice<T> {
    Auto,
    Fixed(T),
}

impl<T: Serialize> Serialize for Choice<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Choice::Auto => s.serialize_str("auto"),
            Choice::Fixed(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Choice<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Text(String),
            Value(T),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Text(s) if s == "auto" => Ok(Choice::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected \"auto\" or a number, got \"{s}\""))),
            Raw::Value(v) => Ok(Choice::Fixed(v)),
        }
    }
}

impl<T: fmt::Display> fmt::Display for Choice<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Auto => f.write_str("auto"),
            Choice::Fixed(v) => v.fmt(f),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub checkpoint: Option<PathBuf>,
    /// Architecture used by `train`.
    pub architecture: ModelConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub suite: Option<PathBuf>,
    pub contrastive: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Precomputed steering vector; built on demand when absent.
    pub vector: Option<PathBuf>,
    /// System prompt for the prompt-baseline arm.
    pub system_prompt: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteerSection {
    pub layer: Choice<usize>,
    pub alpha: Choice<f64>,
    pub window_k: usize,
    pub mode: SteerMode,
    /// Contrastive task used to build the vector; defaults by task.
    pub contrastive_task: Option<String>,
    pub guard: f64,
    /// Validation prompts used by the α sweep.
    pub validation_prompts: usize,
    /// Sweep objective: a lexicon category name or `price_mentions`.
    pub objective: Option<String>,
}

impl Default for SteerSection {
    fn default() -> Self {
        Self {
            layer: Choice::Auto,
            alpha: Choice::Auto,
            window_k: DEFAULT_WINDOW,
            mode: SteerMode::SlidingWindow,
            contrastive_task: None,
            guard: DEFAULT_GUARD,
            validation_prompts: 24,
            objective: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Single-turn arms.
    pub arms: Vec<Arm>,
    /// Multi-turn steering schedules.
    pub variants: Vec<Variant>,
    /// Upper bound on the number of scenarios; all held-out ones if unset.
    pub scenarios: Option<usize>,
    /// Share of the corpus (taken from the end) held out for evaluation.
    pub eval_fraction: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            arms: vec![Arm::Unsteered, Arm::Steered],
            variants: Vec::new(),
            scenarios: None,
            eval_fraction: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartnerKind {
    /// Scripted seller for negotiation, scripted seeker for support.
    #[default]
    Scripted,
    /// The experiment checkpoint itself, never steered.
    LocalModel,
    External,
    None,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartnerSection {
    pub kind: PartnerKind,
    pub seller: SellerRules,
    pub seeker: SeekerRules,
    pub external: ExternalConfig,
    /// Rule table file overriding `seller`/`seeker`.
    pub rules: Option<PathBuf>,
    pub system_prompt: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub q_threshold: f64,
    pub model: ModelSection,
    pub paths: Paths,
    pub steer: SteerSection,
    pub decode: DecodeConfig,
    pub experiment: ExperimentSection,
    pub partner: PartnerSection,
    pub train: TrainOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Support,
            seed: 0,
            output_dir: PathBuf::from("out"),
            jobs: 1,
            q_threshold: 0.05,
            model: ModelSection::default(),
            paths: Paths::default(),
            steer: SteerSection::default(),
            decode: DecodeConfig::default(),
            experiment: ExperimentSection::default(),
            partner: PartnerSection::default(),
            train: TrainOptions::default(),
        }
    }
}

/// Parses `value` as a TOML value, falling back to a plain string.
fn parse_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(value.to_string()),
    }
}

/// Sets `dotted.key = value` inside `table`, creating sections as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

fn absolutize(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `overrides`, and resolves relative
    /// paths against the config file's directory. Overrides are relative
    /// to the working directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut from_file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let base = path
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let mut cfg: Self = from_file
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Input(format!("config: {e}")))?;
        cfg.absolutize(&base);
        if overrides.is_empty() {
            cfg.validate()?;
            return Ok(cfg);
        }
        // Re-read with the overrides applied; their paths stay relative to
        // the working directory, so only file-provided paths are rebased.
        let mut file_paths = toml::Table::try_from(&cfg).map_err(|e| CliError::Input(e.to_string()))?;
        for o in overrides {
            apply_override(&mut file_paths, o)?;
            apply_override(&mut from_file, o)?;
        }
        let mut cfg: Self = file_paths
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("override: {e}")))?;
        cfg.absolutize(Path::new(""));
        cfg.validate()?;
        Ok(cfg)
    }

    fn absolutize(&mut self, base: &Path) {
        absolutize(base, &mut self.model.checkpoint);
        for p in [
            &mut self.paths.suite,
            &mut self.paths.contrastive,
            &mut self.paths.corpus,
            &mut self.paths.vector,
            &mut self.paths.system_prompt,
            &mut self.partner.rules,
        ] {
            absolutize(base, p);
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.steer.layer == Choice::Auto && self.paths.suite.is_none() && self.paths.vector.is_none() {
            return Err(CliError::Usage("steer.layer = \"auto\" needs paths.suite".into()));
        }
        if self.steer.alpha == Choice::Auto && self.paths.corpus.is_none() {
            return Err(CliError::Usage(
                "steer.alpha = \"auto\" needs validation prompts from paths.corpus".into(),
            ));
        }
        if self.jobs == 0 {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        if !(self.q_threshold > 0.0 && self.q_threshold < 1.0) {
            return Err(CliError::Usage(format!("q_threshold must be in (0, 1), got {}", self.q_threshold)));
        }
        if !(self.experiment.eval_fraction > 0.0 && self.experiment.eval_fraction <= 1.0) {
            return Err(CliError::Usage("experiment.eval_fraction must be in (0, 1]".into()));
        }
        if let Some(v) = self.experiment.variants.iter().find(|v| v.schedule().is_none()) {
            return Err(CliError::Usage(format!("{v} is not a multi-turn variant")));
        }
        Ok(())
    }

    /// Hash of every setting that affects results. The output directory
    /// and worker count are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.jobs = 0;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn contrastive_task(&self) -> &str {
        self.steer.contrastive_task.as_deref().unwrap_or(match self.task {
            TaskKind::Support => "support",
            TaskKind::Negotiation => "counteroffer",
        })
    }

    pub fn objective(&self) -> &str {
        self.steer.objective.as_deref().unwrap_or(match self.task {
            TaskKind::Support => "positive",
            TaskKind::Negotiation => "price_mentions",
        })
    }

    pub fn vector_path(&self) -> PathBuf {
        self.paths.vector.clone().unwrap_or_else(|| self.output_dir.join("vector.starvec"))
    }

    pub fn checkpoint(&self) -> CliResult<&Path> {
        self.model
            .checkpoint
            .as_deref()
            .ok_or_else(|| CliError::Usage("model.checkpoint is not set".into()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choice_parses_auto_and_numbers() {
        let t: SteerSection = toml::from_str("layer = \"auto\"\nalpha = 2.5").unwrap();
        assert_eq!(t.layer, Choice::Auto);
        assert_eq!(t.alpha, Choice::Fixed(2.5));
        assert!(toml::from_str::<SteerSection>("layer = \"best\"").is_err());
    }

    #[test]
    fn overrides_create_sections_and_parse_values() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "steer.alpha=3").unwrap();
        apply_override(&mut t, "task=negotiation").unwrap();
        assert_eq!(t["steer"]["alpha"].as_integer(), Some(3));
        assert_eq!(t["task"].as_str(), Some("negotiation"));
        assert!(apply_override(&mut t, "novalue").is_err());
    }

    #[test]
    fn auto_layer_needs_suite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[steer]\nalpha = 1.0\n").unwrap();
        assert!(matches!(ExperimentConfig::load(Some(&p), &[]), Err(CliError::Usage(_))));
        std::fs::write(&p, "[steer]\nalpha = 1.0\nlayer = 1\n").unwrap();
        let c = ExperimentConfig::load(Some(&p), &[]).unwrap();
        assert_eq!(c.steer.layer, Choice::Fixed(1));
        assert_eq!(c.output_dir, dir.path().join("out"));
    }

    #[test]
    fn relative_paths_follow_their_source() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[model]\ncheckpoint = \"m.ckpt\"\n[steer]\nalpha = 1.0\nlayer = 0\n").unwrap();
        let c = ExperimentConfig::load(Some(&p), &["paths.corpus=x.jsonl".into()]).unwrap();
        assert_eq!(c.model.checkpoint.unwrap(), dir.path().join("m.ckpt"));
        assert_eq!(c.paths.corpus.unwrap(), PathBuf::from("x.jsonl"));
    }

    #[test]
    fn hash_ignores_output_dir_and_jobs() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.jobs = 4;
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("sede = 3").is_err());
    }
}
