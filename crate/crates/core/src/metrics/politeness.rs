use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PolitenessFlags {
    pub gratitude: bool,
    pub hedges: bool,
    pub apologizing: bool,
    pub indirect_requests: bool,
    pub directness: bool,
    pub dismissiveness: bool,
}

impl PolitenessFlags {
    pub const NAMES: [&'static str; 6] = [
        "gratitude",
        "hedges",
        "apologizing",
        "indirect_requests",
        "directness",
        "dismissiveness",
    ];

    pub fn values(&self) -> [bool; 6] {
        [
            self.gratitude,
            self.hedges,
            self.apologizing,
            self.indirect_requests,
            self.directness,
            self.dismissiveness,
        ]
    }
}

/// One list of case-insensitive patterns per politeness feature, in
/// [`PolitenessFlags::NAMES`] order.
#[derive(Clone, Debug)]
pub struct PolitenessPatterns {
    lists: [Vec<Regex>; 6],
}

const DEFAULT_SOURCES: [&str; 6] = [
    include_str!("../../../../fixtures/politeness/gratitude.txt"),
    include_str!("../../../../fixtures/politeness/hedges.txt"),
    include_str!("../../../../fixtures/politeness/apologizing.txt"),
    include_str!("../../../../fixtures/politeness/indirect_requests.txt"),
    include_str!("../../../../fixtures/politeness/directness.txt"),
    include_str!("../../../../fixtures/politeness/dismissiveness.txt"),
];

fn compile(source: &str) -> Result<Vec<Regex>> {
    source
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            RegexBuilder::new(l.trim())
                .case_insensitive(true)
                .build()
                .map_err(|e| Error::record(i + 1, e.to_string()))
        })
        .collect()
}

impl PolitenessPatterns {
    pub fn builtin() -> Self {
        Self::from_sources(&DEFAULT_SOURCES).expect("shipped patterns compile")
    }

    pub fn from_sources(sources: &[&str; 6]) -> Result<Self> {
        let mut lists: [Vec<Regex>; 6] = Default::default();
        for (slot, (name, src)) in lists.iter_mut().zip(PolitenessFlags::NAMES.iter().zip(sources)) {
            *slot = compile(src).map_err(|e| Error::Invalid(format!("{name} patterns: {e}")))?;
        }
        Ok(Self { lists })
    }

    /// Reads `<feature>.txt` for every feature from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let texts = PolitenessFlags::NAMES
            .iter()
            .map(|n| std::fs::read_to_string(dir.join(format!("{n}.txt"))))
            .collect::<std::io::Result<Vec<_>>>()?;
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        Self::from_sources(&refs.try_into().expect("six features"))
    }

    pub fn features(&self, text: &str) -> PolitenessFlags {
        let hit = |i: usize| self.lists[i].iter().any(|r| r.is_match(text));
        PolitenessFlags {
            gratitude: hit(0),
            hedges: hit(1),
            apologizing: hit(2),
            indirect_requests: hit(3),
            directness: hit(4),
            dismissiveness: hit(5),
        }
    }
}
