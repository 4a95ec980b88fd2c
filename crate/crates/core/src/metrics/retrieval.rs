use alloc::vec::Vec;

use crate::lm::TransformerModel;
use crate::numerics::{rng, Real, Tensor};
use crate::tasks::{assemble, Task, TokenizedSample};
use crate::vocab::UnifiedVocab;
use crate::vqvae::MotionTokenizer;
use crate::{Error, Result};

/// Sequence feature: encoder latents averaged over time.
pub fn pooled_latents<T: Real>(tok: &MotionTokenizer<T>, motion: &Tensor<f32>) -> Result<Vec<f64>> {
    let z = tok.encode(&motion.cast())?;
    let mut out = alloc::vec![0.0; z.cols()];
    for i in 0..z.rows() {
        for (o, &v) in out.iter_mut().zip(z.row(i)) {
            *o += v.to_f64();
        }
    }
    out.iter_mut().for_each(|o| *o /= z.rows() as f64);
    Ok(out)
}

/// Retrieval-precision surrogate: for each sample the true caption competes
/// with `b − 1` seeded distractor captions from `pool`, ranked by the
/// model's NLL of the sample's motion tokens given the caption (text to
/// interaction framing). Returns the top-k hit rate for each `k` in `ks`.
pub fn r_precision_surrogate<T: Real>(
    model: &TransformerModel<T>,
    vocab: &UnifiedVocab,
    samples: &[TokenizedSample],
    pool: &[Vec<usize>],
    b: usize,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    if b < 2 || ks.iter().any(|&k| k == 0 || k > b) {
        return Err(Error::Config(alloc::format!("need 1 <= k <= B and B >= 2 (B={b}, k={ks:?})")));
    }
    let mut distinct = pool.to_vec();
    distinct.sort();
    distinct.dedup();
    let mut hits = alloc::vec![0usize; ks.len()];
    for (i, s) in samples.iter().enumerate() {
        let others: Vec<&Vec<usize>> = distinct.iter().filter(|c| **c != s.caption).collect();
        if others.len() < b - 1 {
            return Err(Error::Config(alloc::format!(
                "caption pool has {} distractors for sample {}, need {}",
                others.len(),
                s.id,
                b - 1
            )));
        }
        let r = &mut rng::stream(seed, i as u64);
        let mut idx: Vec<usize> = (0..others.len()).collect();
        rng::shuffle(r, &mut idx);
        let nll = |caption: &[usize]| -> Result<f64> {
            let mut probe = s.clone();
            probe.caption = caption.to_vec();
            let ex = assemble(&probe, Task::T2hoi, vocab)?;
            Ok(model.score(&ex.to_lm(probe.points.as_ref()))?.0)
        };
        let truth = nll(&s.caption)?;
        let mut rank = 1;
        for &j in &idx[..b - 1] {
            if nll(others[j])? < truth {
                rank += 1;
            }
        }
        for (h, &k) in hits.iter_mut().zip(ks) {
            if rank <= k {
                *h += 1;
            }
        }
    }
    let n = samples.len().max(1) as f64;
    Ok(hits.into_iter().map(|h| h as f64 / n).collect())
}
