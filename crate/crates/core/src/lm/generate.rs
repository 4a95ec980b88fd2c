use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::TransformerModel;
use crate::numerics::{rng, Real, Tensor};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeParams {
    pub max_new: usize,
    /// 0 selects the argmax.
    pub temperature: f64,
    /// 0 keeps the whole vocabulary.
    pub top_k: usize,
    pub stop: Vec<usize>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            max_new: 64,
            temperature: 0.0,
            top_k: 0,
            stop: Vec::new(),
        }
    }
}

/// Normalized next-token distribution after temperature and top-k.
pub fn next_distribution(logits: &[f64], temperature: f64, top_k: usize) -> Vec<f64> {
    let mut keep: Vec<usize> = (0..logits.len()).collect();
    if top_k > 0 && top_k < logits.len() {
        keep.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
        keep.truncate(top_k);
    }
    let t = temperature.max(1e-8);
    let max = keep.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    let mut p = alloc::vec![0.0; logits.len()];
    let mut sum = 0.0;
    for &i in &keep {
        p[i] = libm::exp((logits[i] - max) / t);
        sum += p[i];
    }
    p.iter_mut().for_each(|x| *x /= sum);
    p
}

/// Draws one token; temperature 0 takes the first maximal logit.
pub fn sample_next<T: Real>(logits: &[T], temperature: f64, top_k: usize, r: &mut rng::Rng) -> usize {
    let l: Vec<f64> = logits.iter().map(|&x| x.to_f64()).collect();
    if temperature <= 0.0 {
        let mut best = 0;
        for (i, &v) in l.iter().enumerate() {
            if v > l[best] {
                best = i;
            }
        }
        return best;
    }
    let p = next_distribution(&l, temperature, top_k);
    let u = rng::uniform(r);
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

impl<T: Real> TransformerModel<T> {
    /// Autoregressive continuation of `source`. Returns the new tokens,
    /// ending with the stop token when one was produced.
    pub fn generate(&self, source: &[usize], points: Option<&Tensor<T>>, params: &DecodeParams, seed: u64) -> Result<Vec<usize>> {
        let feature = match points {
            Some(p) => Some(self.geometry_feature(p)?),
            None => None,
        };
        let mut r = rng::seeded(seed);
        let mut seq = source.to_vec();
        let mut out = Vec::new();
        while out.len() < params.max_new && seq.len() < self.config.max_seq_len {
            let logits = self.last_logits(&seq, feature.as_ref())?;
            let t = sample_next(&logits, params.temperature, params.top_k, &mut r);
            seq.push(t);
            out.push(t);
            if params.stop.contains(&t) {
                break;
            }
        }
        Ok(out)
    }
}
