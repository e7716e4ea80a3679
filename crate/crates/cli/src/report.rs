//! Per-utterance metrics, group comparisons and the Markdown summary.

use std::fmt::Write as _;
use std::path::Path;

use star_core::dialogue::{Conversation, Role, TaskKind, Variant};
use star_core::metrics::{negotiation_metrics, LexCategory, MetricSuite, Party, PolitenessFlags, UtteranceMetrics};
use star_core::stats::{correct_families, StatTestResult};

use crate::error::CliResult;

/// Arm label for single-turn runs, schedule label for multi-turn runs.
pub fn condition(c: &Conversation) -> String {
    match (&c.arm, c.variant) {
        (Some(a), Variant::SingleTurn | Variant::PromptBaseline) => a.clone(),
        (_, v) => v.as_str().to_string(),
    }
}

fn baseline_of(cond: &str) -> Option<&'static str> {
    match cond {
        "unsteered" | "UU" => None,
        "steered" | "prompt_baseline" => Some("unsteered"),
        _ => Some("UU"),
    }
}

pub struct UtteranceRow {
    pub conversation: String,
    pub condition: String,
    pub turn: usize,
    pub steered: bool,
    pub metrics: UtteranceMetrics,
}

pub struct NegotiationRow {
    pub conversation: String,
    pub condition: String,
    pub agreement: bool,
    pub achieved_price: Option<f64>,
    pub price_improvement: Option<f64>,
    pub question_rate: f64,
    pub turn_length: f64,
    pub repetition: f64,
}

pub fn utterance_rows(convs: &[Conversation], suite: &MetricSuite) -> Vec<UtteranceRow> {
    convs
        .iter()
        .flat_map(|c| {
            let cond = condition(c);
            c.turns
                .iter()
                .enumerate()
                .filter(|(_, t)| t.generated && t.role == Role::Target)
                .map(move |(i, t)| UtteranceRow {
                    conversation: c.id.clone(),
                    condition: cond.clone(),
                    turn: i,
                    steered: t.steered,
                    metrics: suite.utterance(&t.text),
                })
        })
        .collect()
}

pub fn negotiation_rows(convs: &[Conversation]) -> Vec<NegotiationRow> {
    convs
        .iter()
        .filter(|c| c.task == TaskKind::Negotiation)
        .map(|c| {
            let turns: Vec<(Party, &str)> = c
                .turns
                .iter()
                .map(|t| {
                    let p = if t.role == Role::Partner { Party::Seller } else { Party::Buyer };
                    (p, t.text.as_str())
                })
                .collect();
            let m = negotiation_metrics(&turns, c.dataset_final_price);
            NegotiationRow {
                conversation: c.id.clone(),
                condition: condition(c),
                agreement: m.agreement,
                achieved_price: m.achieved_price,
                price_improvement: m.price_improvement,
                question_rate: m.question_rate,
                turn_length: m.turn_length,
                repetition: m.repetition,
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_metrics(path: &Path, rows: &[UtteranceRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["conversation".to_string(), "condition".into(), "turn".into(), "steered".into()];
    header.extend(UtteranceMetrics::columns());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.conversation.clone(), r.condition.clone(), r.turn.to_string(), r.steered.to_string()];
        rec.extend(r.metrics.values().iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_negotiation(path: &Path, rows: &[NegotiationRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "conversation",
        "condition",
        "agreement",
        "achieved_price",
        "price_improvement",
        "question_rate",
        "turn_length",
        "repetition",
    ])?;
    for r in rows {
        w.write_record([
            r.conversation.clone(),
            r.condition.clone(),
            r.agreement.to_string(),
            opt(r.achieved_price),
            opt(r.price_improvement),
            r.question_rate.to_string(),
            r.turn_length.to_string(),
            r.repetition.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// A comparison of one condition against its baseline.
pub struct Comparison {
    pub condition: String,
    pub baseline: String,
    pub results: Vec<StatTestResult>,
    /// Features that could not be tested, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn feature_family(name: &str) -> &'static str {
    if LexCategory::ALL.iter().any(|c| c.as_str() == name) {
        "emotion"
    } else if PolitenessFlags::NAMES.contains(&name) {
        "politeness"
    } else {
        "linguistic"
    }
}

fn is_binary(name: &str) -> bool {
    PolitenessFlags::NAMES.contains(&name) || name == "positive_sentiment"
}

fn test_feature(
    family: &str,
    feature: &str,
    binary: bool,
    a: &[f64],
    b: &[f64],
    out: &mut Comparison,
) {
    let r = if binary {
        let hits = |xs: &[f64]| xs.iter().filter(|&&x| x > 0.5).count() as u64;
        StatTestResult::proportions(family, feature, hits(a), a.len() as u64, hits(b), b.len() as u64)
    } else {
        StatTestResult::welch(family, feature, a, b)
    };
    match r {
        Ok(r) => out.results.push(r),
        Err(e) => out.skipped.push((feature.to_string(), e.to_string())),
    }
}

/// Every condition against its baseline, BH-corrected per family.
pub fn compare(utterances: &[UtteranceRow], negotiations: &[NegotiationRow], q: f64) -> CliResult<Vec<Comparison>> {
    let mut conds: Vec<String> = Vec::new();
    for c in utterances.iter().map(|r| &r.condition).chain(negotiations.iter().map(|r| &r.condition)) {
        if !conds.contains(c) {
            conds.push(c.clone());
        }
    }
    let columns = UtteranceMetrics::columns();
    let mut out = Vec::new();
    for cond in &conds {
        let Some(base) = baseline_of(cond) else { continue };
        if !conds.iter().any(|c| c == base) {
            continue;
        }
        let mut cmp = Comparison {
            condition: cond.clone(),
            baseline: base.to_string(),
            results: Vec::new(),
            skipped: Vec::new(),
        };
        let values = |c: &str, k: usize| -> Vec<f64> {
            utterances.iter().filter(|r| r.condition == c).map(|r| r.metrics.values()[k]).collect()
        };
        for (k, name) in columns.iter().enumerate() {
            let (a, b) = (values(cond, k), values(base, k));
            if a.is_empty() || b.is_empty() {
                continue;
            }
            test_feature(feature_family(name), name, is_binary(name), &a, &b, &mut cmp);
        }
        let neg = |c: &str| -> Vec<&NegotiationRow> { negotiations.iter().filter(|r| r.condition == c).collect() };
        if !neg(cond).is_empty() && !neg(base).is_empty() {
            let flag = |c: &str| -> Vec<f64> { neg(c).into_iter().map(|r| f64::from(u8::from(r.agreement))).collect() };
            test_feature("negotiation", "agreement", true, &flag(cond), &flag(base), &mut cmp);
            let improvement = |c: &str| -> Vec<f64> { neg(c).into_iter().filter_map(|r| r.price_improvement).collect() };
            let (a, b) = (improvement(cond), improvement(base));
            if a.len() >= 2 && b.len() >= 2 {
                test_feature("negotiation", "price_improvement", false, &a, &b, &mut cmp);
            } else {
                cmp.skipped.push(("price_improvement".into(), "fewer than two agreements with a price".into()));
            }
            type Getter = fn(&NegotiationRow) -> f64;
            let getters: [(&str, Getter); 3] = [
                ("question_rate", |r| r.question_rate),
                ("turn_length", |r| r.turn_length),
                ("repetition", |r| r.repetition),
            ];
            for (name, get) in getters {
                let a: Vec<f64> = neg(cond).into_iter().map(|r| get(r)).collect();
                let b: Vec<f64> = neg(base).into_iter().map(|r| get(r)).collect();
                test_feature("negotiation", name, false, &a, &b, &mut cmp);
            }
        }
        correct_families(&mut cmp.results, q)?;
        out.push(cmp);
    }
    Ok(out)
}

pub fn write_stats(path: &Path, comparisons: &[Comparison]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "condition", "baseline", "family", "feature", "test", "m_condition", "m_baseline", "statistic", "df", "p", "q",
        "effect_size", "effect_label", "significant",
    ])?;
    for c in comparisons {
        for r in &c.results {
            w.write_record([
                c.condition.clone(),
                c.baseline.clone(),
                r.family.clone(),
                r.feature.clone(),
                r.test.to_string(),
                r.group_a.to_string(),
                r.group_b.to_string(),
                r.statistic.to_string(),
                opt(r.df),
                r.p.to_string(),
                r.q.to_string(),
                opt(r.effect_size),
                r.effect_label.map(|l| l.to_string()).unwrap_or_default(),
                r.significant.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub struct SummaryHeader {
    pub task: TaskKind,
    pub scenarios: usize,
    pub conversations: usize,
    pub failures: usize,
    pub layer: Option<usize>,
    pub alpha: Option<f64>,
    pub q: f64,
}

pub fn summary(h: &SummaryHeader, comparisons: &[Comparison]) -> String {
    let mut s = String::from("# Experiment summary\n\n");
    writeln!(s, "- task: {}", h.task.as_str()).unwrap();
    writeln!(s, "- scenarios: {}", h.scenarios).unwrap();
    writeln!(s, "- conversations: {} ({} failed)", h.conversations, h.failures).unwrap();
    if let (Some(l), Some(a)) = (h.layer, h.alpha) {
        writeln!(s, "- steering: layer {l}, alpha {a}").unwrap();
    }
    writeln!(s, "- `*` marks q < {} after Benjamini-Hochberg correction within a family\n", h.q).unwrap();
    if comparisons.is_empty() {
        s.push_str("No comparisons: a baseline condition is missing.\n");
    }
    for c in comparisons {
        writeln!(s, "## {} vs {}\n", c.condition, c.baseline).unwrap();
        s.push_str("| Feature | M_steer | M_baseline | t |\n|---|---|---|---|\n");
        for r in &c.results {
            let name = if r.test == "chi_square" { format!("{} (χ²)", r.feature) } else { r.feature.clone() };
            writeln!(s, "| {name} | {:.4} | {:.4} | {:.3}{} |", r.group_a, r.group_b, r.statistic, r.star()).unwrap();
        }
        if !c.skipped.is_empty() {
            s.push_str("\nNot tested:\n\n");
            for (f, why) in &c.skipped {
                writeln!(s, "- {f}: {why}").unwrap();
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use star_core::dialogue::{Scenario, Turn};

    fn conv(id: &str, arm: &str, texts: &[&str]) -> Conversation {
        let s = Scenario {
            id: id.into(),
            task: TaskKind::Support,
            history: vec![Turn::history(Role::Partner, "I feel low.")],
            listing_price: None,
            dataset_final_price: None,
        };
        let mut c = Conversation::start(&s, Variant::SingleTurn, Some(arm));
        for t in texts {
            c.turns.push(Turn::generated(Role::Target, *t, None));
        }
        c
    }

    #[test]
    fn identical_groups_give_no_stars() {
        let suite = MetricSuite::default();
        let texts = ["I am happy to help.", "Okay. Go to bed.", "That is sad, I hope you feel better."];
        let convs: Vec<Conversation> = ["unsteered", "steered"]
            .iter()
            .flat_map(|arm| texts.iter().enumerate().map(move |(i, t)| conv(&format!("c{i}"), arm, &[t])))
            .collect();
        let rows = utterance_rows(&convs, &suite);
        assert_eq!(rows.len(), 6);
        let cmp = compare(&rows, &[], 0.05).unwrap();
        assert_eq!(cmp.len(), 1);
        assert!(cmp[0].results.iter().all(|r| !r.significant && r.p == 1.0));
        let md = summary(
            &SummaryHeader {
                task: TaskKind::Support,
                scenarios: 3,
                conversations: 6,
                failures: 0,
                layer: None,
                alpha: None,
                q: 0.05,
            },
            &cmp,
        );
        assert!(md.contains("| Feature | M_steer | M_baseline | t |"));
        assert!(!md.contains("*|"));
    }

    #[test]
    fn conditions_pick_their_baseline() {
        assert_eq!(baseline_of("steered"), Some("unsteered"));
        assert_eq!(baseline_of("SS"), Some("UU"));
        assert_eq!(baseline_of("UU"), None);
    }
}
