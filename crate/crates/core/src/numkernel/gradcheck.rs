use super::tape::{Bindings, NodeId, Tape};
use crate::error::{Error, Result};

/// Floor on the denominator of the relative error.
pub const REL_FLOOR: f64 = 1e-8;

/// Outcome of comparing the analytic gradient of a node against central
/// finite differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// max over elements of |analytic − numeric| / max(|numeric|, 1e-8)
    pub max_rel_error: f64,
    /// Element index where the maximum occurred.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Checks d(output)/d(node) element by element with step `eps`.
///
/// Each perturbation re-evaluates only the nodes downstream of `node`.
pub fn grad_check(
    tape: &Tape,
    inputs: &Bindings<'_>,
    output: NodeId,
    node: NodeId,
    eps: f64,
) -> Result<GradCheck> {
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::Precondition(format!("grad_check step must lie in (0, 1e-3], got {eps}")));
    }
    let base = tape.eval(inputs)?;
    let analytic = base.backward(output, 1.0, &[node])?.remove(0).into_data();

    let mut probe = base.value(node).clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..probe.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = scalar(&base.replay_with(node, &probe, output)?)?;
        probe.data_mut()[i] = orig - eps;
        let minus = scalar(&base.replay_with(node, &probe, output)?)?;
        probe.data_mut()[i] = orig;
        numeric.push((plus - minus) / (2.0 * eps));
    }

    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(REL_FLOOR))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    Ok(GradCheck {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
    })
}

fn scalar(t: &super::Tensor) -> Result<f64> {
    t.item().ok_or_else(|| Error::NonScalarSeed {
        node: usize::MAX,
        shape: t.shape().to_vec(),
    })
}
