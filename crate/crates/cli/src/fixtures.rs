//! Checksums of the shipped fixtures.

use std::fmt;
use std::path::Path;

use crate::config::file_sha256;
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "MANIFEST.sha256";

/// Transcribed diagnostic prompts and contrastive seeds; edits to these
/// are reported separately.
pub const TRANSCRIPTIONS: [&str; 2] = ["suite/diagnostic.jsonl", "contrastive.jsonl"];

#[derive(Debug, Default, PartialEq)]
pub struct IntegrityReport {
    pub checked: usize,
    pub mismatched: Vec<String>,
    pub missing: Vec<String>,
}

impl IntegrityReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty() && self.missing.is_empty()
    }

    pub fn edited_transcriptions(&self) -> Vec<&str> {
        self.mismatched
            .iter()
            .chain(&self.missing)
            .map(String::as_str)
            .filter(|f| TRANSCRIPTIONS.contains(f))
            .collect()
    }
}

impl fmt::Display for IntegrityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "checked {} files", self.checked)?;
        for m in &self.mismatched {
            writeln!(f, "MISMATCH {m}")?;
        }
        for m in &self.missing {
            writeln!(f, "MISSING  {m}")?;
        }
        for t in self.edited_transcriptions() {
            writeln!(f, "transcribed fixture changed: {t}")?;
        }
        if self.ok() {
            writeln!(f, "all fixtures intact")?;
        }
        Ok(())
    }
}

/// Verifies every `<sha256>  <path>` line of the manifest in `dir`.
pub fn fixture_integrity(dir: &Path) -> CliResult<IntegrityReport> {
    let manifest = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&manifest).map_err(|e| CliError::input(&manifest, e))?;
    let mut report = IntegrityReport::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (hash, name) = line
            .split_once("  ")
            .ok_or_else(|| CliError::Input(format!("{}:{}: expected `<sha256>  <path>`", manifest.display(), i + 1)))?;
        report.checked += 1;
        let path = dir.join(name);
        if !path.exists() {
            report.missing.push(name.to_string());
        } else if file_sha256(&path)? != hash {
            report.mismatched.push(name.to_string());
        }
    }
    Ok(report)
}

/// Rewrites the manifest from the files currently listed in it.
pub fn refresh_manifest(dir: &Path, files: &[String]) -> CliResult<()> {
    let mut out = String::new();
    for f in files {
        out.push_str(&format!("{}  {f}\n", file_sha256(&dir.join(f))?));
    }
    std::fs::write(dir.join(MANIFEST), out)?;
    Ok(())
}
