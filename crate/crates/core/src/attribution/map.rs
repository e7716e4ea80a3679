use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::ComponentKind;

/// Signed scores over (component kind, layer, position).
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMap {
    pub prompt_id: String,
    pub kinds: Vec<ComponentKind>,
    pub n_layers: usize,
    pub seq_len: usize,
    /// Kind-major, then layer, then position.
    scores: Vec<f64>,
    /// Logit difference of the aligned run.
    pub metric_clean: f64,
    /// Logit difference of the misaligned run.
    pub metric_corrupt: f64,
}

impl AttributionMap {
    pub fn zeros(prompt_id: impl Into<String>, kinds: &[ComponentKind], n_layers: usize, seq_len: usize) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            kinds: kinds.to_vec(),
            n_layers,
            seq_len,
            scores: vec![0.0; kinds.len() * n_layers * seq_len],
            metric_clean: 0.0,
            metric_corrupt: 0.0,
        }
    }

    fn kind_index(&self, kind: ComponentKind) -> Option<usize> {
        self.kinds.iter().position(|&k| k == kind)
    }

    fn offset(&self, kind: ComponentKind, layer: usize) -> Result<usize> {
        let k = self
            .kind_index(kind)
            .ok_or_else(|| Error::MissingCoordinate(format!("{kind} (kind not in map)")))?;
        if layer >= self.n_layers {
            return Err(Error::OutOfRange {
                what: "layer",
                index: layer,
                bound: self.n_layers,
            });
        }
        Ok((k * self.n_layers + layer) * self.seq_len)
    }

    pub fn row(&self, kind: ComponentKind, layer: usize) -> Result<&[f64]> {
        let o = self.offset(kind, layer)?;
        Ok(&self.scores[o..o + self.seq_len])
    }

    pub fn row_mut(&mut self, kind: ComponentKind, layer: usize) -> Result<&mut [f64]> {
        let o = self.offset(kind, layer)?;
        let t = self.seq_len;
        Ok(&mut self.scores[o..o + t])
    }

    pub fn get(&self, kind: ComponentKind, layer: usize, position: usize) -> Result<f64> {
        if position >= self.seq_len {
            return Err(Error::OutOfRange {
                what: "position",
                index: position,
                bound: self.seq_len,
            });
        }
        Ok(self.row(kind, layer)?[position])
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn all_finite(&self) -> bool {
        self.scores.iter().all(|x| x.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        self.scores.iter_mut().for_each(|x| *x *= factor);
    }

    /// Element-wise mean. Maps of different lengths are aligned on their
    /// final position, and each cell averages the maps that cover it.
    pub fn mean(prompt_id: impl Into<String>, maps: &[&AttributionMap]) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::Precondition("no maps to average".into()))?;
        if maps.iter().any(|m| m.kinds != first.kinds || m.n_layers != first.n_layers) {
            return Err(Error::Invalid("maps cover different component grids".into()));
        }
        let t = maps.iter().map(|m| m.seq_len).max().unwrap_or(0);
        let mut out = AttributionMap::zeros(prompt_id, &first.kinds, first.n_layers, t);
        let mut counts = vec![0usize; out.scores.len()];
        for m in maps {
            let shift = t - m.seq_len;
            for row in 0..first.kinds.len() * first.n_layers {
                for p in 0..m.seq_len {
                    let cell = row * t + shift + p;
                    out.scores[cell] += m.scores[row * m.seq_len + p];
                    counts[cell] += 1;
                }
            }
            out.metric_clean += m.metric_clean;
            out.metric_corrupt += m.metric_corrupt;
        }
        for (s, &c) in out.scores.iter_mut().zip(&counts) {
            if c > 0 {
                *s /= c as f64;
            }
        }
        out.metric_clean /= maps.len() as f64;
        out.metric_corrupt /= maps.len() as f64;
        Ok(out)
    }

    /// CSV with a header of positions and one row per `{layer}_{kind}`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("component");
        for p in 0..self.seq_len {
            write!(s, ",{p}").unwrap();
        }
        s.push('\n');
        for &kind in &self.kinds {
            for l in 0..self.n_layers {
                write!(s, "{l}_{kind}").unwrap();
                for v in self.row(kind, l).expect("own coordinates") {
                    write!(s, ",{v}").unwrap();
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Per-head scores, one row per layer and one column per head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadMap {
    pub prompt_id: String,
    pub n_layers: usize,
    pub n_heads: usize,
    scores: Vec<f64>,
}

impl HeadMap {
    pub fn new(prompt_id: impl Into<String>, n_layers: usize, n_heads: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != n_layers * n_heads {
            return Err(Error::Dimension {
                expected: n_layers * n_heads,
                found: scores.len(),
            });
        }
        Ok(Self {
            prompt_id: prompt_id.into(),
            n_layers,
            n_heads,
            scores,
        })
    }

    pub fn get(&self, layer: usize, head: usize) -> f64 {
        self.scores[layer * self.n_heads + head]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer");
        for h in 0..self.n_heads {
            write!(s, ",head{h}").unwrap();
        }
        s.push('\n');
        for l in 0..self.n_layers {
            write!(s, "{l}").unwrap();
            for h in 0..self.n_heads {
                write!(s, ",{}", self.get(l, h)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(id: &str, t: usize, f: impl Fn(usize) -> f64) -> AttributionMap {
        let mut m = AttributionMap::zeros(id, &[ComponentKind::LayerOut], 2, t);
        for (i, s) in m.scores.iter_mut().enumerate() {
            *s = f(i);
        }
        m
    }

    #[test]
    fn csv_layout() {
        let m = map("p", 2, |i| i as f64);
        assert_eq!(m.to_csv(), "component,0,1\n0_layer_out,0,1\n1_layer_out,2,3\n");
    }

    #[test]
    fn mean_aligns_on_final_position() {
        let a = map("a", 3, |i| i as f64);
        let b = map("b", 2, |_| 10.0);
        let m = AttributionMap::mean("m", &[&a, &b]).unwrap();
        assert_eq!(m.row(ComponentKind::LayerOut, 0).unwrap(), &[0.0, 5.5, 6.0]);
    }

    #[test]
    fn singleton_and_duplicate_means() {
        let a = map("a", 4, |i| (i as f64).sin() * 1e3);
        assert_eq!(AttributionMap::mean("m", &[&a]).unwrap().scores, a.scores);
        assert_eq!(AttributionMap::mean("m", &[&a, &a]).unwrap().scores, a.scores);
    }

    #[test]
    fn missing_kind_is_named() {
        let a = map("a", 2, |_| 0.0);
        let err = a.row(ComponentKind::Mlp, 0).unwrap_err();
        assert!(err.to_string().contains("mlp"));
    }
}
