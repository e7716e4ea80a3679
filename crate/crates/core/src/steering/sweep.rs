use serde::Serialize;

use super::{SteerConfig, SteeringVector};
use crate::dialogue::{generate_turn, DecodeConfig, Steer};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::parallel::map_ordered;

/// α values evaluated by the sweep.
pub const ALPHA_GRID: [f64; 8] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0];

/// Steered per-token NLL may be at most this multiple of the unsteered one.
pub const DEFAULT_GUARD: f64 = 1.2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub metric_mean: f64,
    /// Mean per-token NLL of the steered outputs under the unsteered model.
    pub nll: f64,
    pub passes_guard: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub chosen_alpha: f64,
    pub baseline_metric: f64,
    pub baseline_nll: f64,
    pub table: Vec<SweepPoint>,
}

struct Evaluated {
    metric: f64,
    nll: f64,
}

fn evaluate(
    model: &Model,
    prompts: &[Vec<u32>],
    steer: Option<(&SteeringVector, &SteerConfig)>,
    metric: &(dyn Fn(&str) -> f64 + Sync),
    decode: &DecodeConfig,
    jobs: usize,
) -> Result<Evaluated> {
    let per_prompt = map_ordered(prompts, jobs, |_, p| -> Result<(f64, Option<f64>)> {
        let steer = steer.map(|(vector, config)| Steer { vector, config });
        let g = generate_turn(model, p, steer, decode)?;
        let score = metric(&g.text);
        let nll = if g.tokens.is_empty() {
            None
        } else {
            let mut full = p.clone();
            full.extend(&g.tokens);
            Some(model.continuation_nll(&full, p.len())?)
        };
        Ok((score, nll))
    });
    let mut m = 0.0;
    let (mut nll, mut n_nll) = (0.0, 0usize);
    for r in per_prompt {
        let (score, x) = r?;
        m += score;
        if let Some(x) = x {
            nll += x;
            n_nll += 1;
        }
    }
    Ok(Evaluated {
        metric: m / prompts.len() as f64,
        nll: if n_nll == 0 { f64::NAN } else { nll / n_nll as f64 },
    })
}

/// Evaluates every α in [`ALPHA_GRID`] and picks the one with the highest
/// mean `metric` among those passing the fluency guard. Ties go to the
/// smaller α.
pub fn alpha_sweep(
    model: &Model,
    vector: &SteeringVector,
    base: &SteerConfig,
    prompts: &[Vec<u32>],
    metric: &(dyn Fn(&str) -> f64 + Sync),
    decode: &DecodeConfig,
    guard: f64,
    jobs: usize,
) -> Result<SweepOutcome> {
    if prompts.is_empty() {
        return Err(Error::Precondition("alpha sweep needs validation prompts".into()));
    }
    if !(guard >= 1.0) {
        return Err(Error::Invalid(format!("fluency guard must be at least 1, got {guard}")));
    }
    let baseline = evaluate(model, prompts, None, metric, decode, jobs)?;
    let mut table = Vec::with_capacity(ALPHA_GRID.len());
    for alpha in ALPHA_GRID {
        let cfg = SteerConfig { alpha, ..base.clone() };
        let e = evaluate(model, prompts, Some((vector, &cfg)), metric, decode, jobs)?;
        let passes_guard = guard.is_infinite() || e.nll <= guard * baseline.nll;
        table.push(SweepPoint {
            alpha,
            metric_mean: e.metric,
            nll: e.nll,
            passes_guard,
        });
    }
    let chosen = table
        .iter()
        .filter(|p| p.passes_guard)
        .fold(None::<&SweepPoint>, |best, p| match best {
            Some(b) if b.metric_mean >= p.metric_mean => Some(b),
            _ => Some(p),
        });
    match chosen {
        Some(p) => Ok(SweepOutcome {
            chosen_alpha: p.alpha,
            baseline_metric: baseline.metric,
            baseline_nll: baseline.nll,
            table,
        }),
        None => Err(Error::SweepRejected(table)),
    }
}
