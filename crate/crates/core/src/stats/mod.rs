//! Welch's t, 2×2 χ² with Cramér's V, and Benjamini–Hochberg correction.

pub mod special;

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use special::{chi2_upper, t_two_sided};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WelchT {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Two-sided Welch test of `mean(a) = mean(b)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchT> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Precondition(format!(
            "welch_t needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Precondition("welch_t samples must be finite".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    if sa + sb == 0.0 {
        if ma == mb {
            return Ok(WelchT {
                t: 0.0,
                df: na + nb - 2.0,
                p: 1.0,
            });
        }
        return Err(Error::Precondition("both samples are constant with different means".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(WelchT {
        t,
        df,
        p: t_two_sided(t, df),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum EffectLabel {
    Trivial,
    Small,
    Medium,
    Large,
}

impl EffectLabel {
    pub fn from_v(v: f64) -> Self {
        if v < 0.1 {
            EffectLabel::Trivial
        } else if v < 0.3 {
            EffectLabel::Small
        } else if v < 0.5 {
            EffectLabel::Medium
        } else {
            EffectLabel::Large
        }
    }
}

impl fmt::Display for EffectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectLabel::Trivial => "Trivial",
            EffectLabel::Small => "Small",
            EffectLabel::Medium => "Medium",
            EffectLabel::Large => "Large",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub p: f64,
    pub cramers_v: f64,
    pub label: EffectLabel,
}

/// Pearson χ² test of independence on `[[a, b], [c, d]]`, without
/// continuity correction.
pub fn chi_square(table: [[u64; 2]; 2]) -> Result<ChiSquare> {
    let [[a, b], [c, d]] = table.map(|r| r.map(|x| x as f64));
    let n = a + b + c + d;
    let margins = [a + b, c + d, a + c, b + d];
    if margins.iter().any(|&m| m == 0.0) {
        return Err(Error::Precondition(format!("contingency table {table:?} has a zero marginal")));
    }
    let chi2 = n * (a * d - b * c).powi(2) / margins.iter().product::<f64>();
    let v = (chi2 / n).sqrt().min(1.0);
    Ok(ChiSquare {
        chi2,
        p: chi2_upper(chi2, 1.0),
        cramers_v: v,
        label: EffectLabel::from_v(v),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BhOutcome {
    /// Adjusted values in input order.
    pub q_values: Vec<f64>,
    pub rejected: Vec<bool>,
}

/// Benjamini–Hochberg step-up over one family of p-values.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<BhOutcome> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Precondition(format!("p-value {p} outside [0, 1]")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Invalid(format!("q threshold must be in (0, 1], got {q}")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]).then(i.cmp(&j)));
    let cutoff = (0..m)
        .rev()
        .find(|&r| p_values[order[r]] <= (r + 1) as f64 / m as f64 * q)
        .map_or(0, |r| r + 1);
    let mut q_values = vec![0.0; m];
    let mut running = 1.0f64;
    for r in (0..m).rev() {
        let i = order[r];
        running = running.min(m as f64 / (r + 1) as f64 * p_values[i]);
        q_values[i] = running.min(1.0);
    }
    let mut rejected = vec![false; m];
    for &i in &order[..cutoff] {
        rejected[i] = true;
    }
    Ok(BhOutcome { q_values, rejected })
}

/// One row of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatTestResult {
    pub family: String,
    pub feature: String,
    pub test: &'static str,
    /// Group means (Welch) or proportions (χ²) of the two conditions.
    pub group_a: f64,
    pub group_b: f64,
    pub statistic: f64,
    pub df: Option<f64>,
    pub p: f64,
    pub q: f64,
    pub effect_size: Option<f64>,
    pub effect_label: Option<EffectLabel>,
    pub significant: bool,
}

impl StatTestResult {
    pub fn welch(family: &str, feature: &str, a: &[f64], b: &[f64]) -> Result<Self> {
        let w = welch_t(a, b)?;
        Ok(Self {
            family: family.into(),
            feature: feature.into(),
            test: "welch_t",
            group_a: mean(a),
            group_b: mean(b),
            statistic: w.t,
            df: Some(w.df),
            p: w.p,
            q: w.p,
            effect_size: None,
            effect_label: None,
            significant: false,
        })
    }

    /// χ² on binary outcomes: `hits` out of `n` per condition.
    pub fn proportions(family: &str, feature: &str, hits_a: u64, n_a: u64, hits_b: u64, n_b: u64) -> Result<Self> {
        if hits_a > n_a || hits_b > n_b {
            return Err(Error::Precondition("more hits than trials".into()));
        }
        let c = chi_square([[hits_a, n_a - hits_a], [hits_b, n_b - hits_b]])?;
        Ok(Self {
            family: family.into(),
            feature: feature.into(),
            test: "chi_square",
            group_a: hits_a as f64 / n_a as f64,
            group_b: hits_b as f64 / n_b as f64,
            statistic: c.chi2,
            df: Some(1.0),
            p: c.p,
            q: c.p,
            effect_size: Some(c.cramers_v),
            effect_label: Some(c.label),
            significant: false,
        })
    }

    pub fn star(&self) -> &'static str {
        if self.significant {
            "*"
        } else {
            ""
        }
    }
}

/// Applies BH within each family of `results`, setting `q` and
/// `significant`.
pub fn correct_families(results: &mut [StatTestResult], q: f64) -> Result<()> {
    let mut families: Vec<String> = results.iter().map(|r| r.family.clone()).collect();
    families.sort();
    families.dedup();
    for fam in families {
        let idx: Vec<usize> = (0..results.len()).filter(|&i| results[i].family == fam).collect();
        let ps: Vec<f64> = idx.iter().map(|&i| results[i].p).collect();
        let bh = bh_fdr(&ps, q)?;
        for (k, &i) in idx.iter().enumerate() {
            results[i].q = bh.q_values[k];
            results[i].significant = bh.rejected[k];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests;
