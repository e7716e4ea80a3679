use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use star_cli::commands;
use star_cli::fixtures::{fixture_integrity, refresh_manifest};
use star_cli::{CliError, CliResult, ExperimentConfig};
use star_core::model::ComponentKind;

#[derive(Parser)]
#[command(name = "star", version, about = "Attribution and activation steering for small dialogue models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set steer.alpha=2.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    jobs: Option<usize>,
    /// Steering layer index or `auto`.
    #[arg(long)]
    layer: Option<String>,
    /// Steering coefficient or `auto`.
    #[arg(long)]
    alpha: Option<String>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let quote = |s: &str| if s == "auto" { "\"auto\"".to_string() } else { s.to_string() };
        let path = |p: &PathBuf| toml_string(&p.display().to_string());
        let mut o = self.overrides.clone();
        if let Some(p) = &self.checkpoint {
            o.push(format!("model.checkpoint={}", path(p)));
        }
        if let Some(p) = &self.out {
            o.push(format!("output_dir={}", path(p)));
        }
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(j) = self.jobs {
            o.push(format!("jobs={j}"));
        }
        if let Some(l) = &self.layer {
            o.push(format!("steer.layer={}", quote(l)));
        }
        if let Some(a) = &self.alpha {
            o.push(format!("steer.alpha={}", quote(a)));
        }
        ExperimentConfig::load(self.config.as_deref(), &o)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

#[derive(Subcommand)]
enum Command {
    /// Train a toy model on the configured corpus.
    Train(Common),
    /// Attribution maps over the diagnostic suite.
    Attribute {
        #[command(flatten)]
        common: Common,
        /// Component kinds, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "attn,mlp,layer_out")]
        components: Vec<String>,
    },
    /// Build a steering vector from the contrastive set.
    Steer(Common),
    /// Sweep α over the validation prompts.
    Sweep(Common),
    /// Generate one reply to a partner utterance.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        steered: bool,
    },
    /// Run the configured experiment.
    Run(Common),
    /// Rebuild metrics, statistics and summary from saved transcripts.
    Report(Common),
    /// Verify (or refresh) fixture checksums.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
        /// Rewrite the manifest from the current files.
        #[arg(long)]
        update: bool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(c) => commands::cmd_train(&c.load()?),
        Command::Attribute { common, components } => {
            let kinds = components
                .iter()
                .map(|s| s.parse::<ComponentKind>())
                .collect::<star_core::Result<Vec<_>>>()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            if kinds.is_empty() {
                return Err(CliError::Usage("no components given".into()));
            }
            commands::cmd_attribute(&common.load()?, &kinds)
        }
        Command::Steer(c) => commands::cmd_steer(&c.load()?),
        Command::Sweep(c) => commands::cmd_sweep(&c.load()?),
        Command::Generate { common, prompt, steered } => commands::cmd_generate(&common.load()?, &prompt, steered),
        Command::Run(c) => commands::cmd_run(&c.load()?),
        Command::Report(c) => commands::cmd_report(&c.load()?),
        Command::Fixtures { dir, update } => {
            if update {
                let text = std::fs::read_to_string(dir.join(star_cli::fixtures::MANIFEST))
                    .map_err(|e| CliError::input(&dir, e))?;
                let files: Vec<String> = text
                    .lines()
                    .filter_map(|l| l.split_once("  ").map(|(_, f)| f.to_string()))
                    .collect();
                return refresh_manifest(&dir, &files);
            }
            let report = fixture_integrity(&dir)?;
            print!("{report}");
            if report.ok() {
                Ok(())
            } else {
                Err(CliError::Input(format!(
                    "{} fixture(s) changed or missing",
                    report.mismatched.len() + report.missing.len()
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
