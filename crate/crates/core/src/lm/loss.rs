use alloc::vec;

use crate::numerics::{log_sum_exp, softmax, Real, Tensor};
use crate::{Error, Result};

/// Summed `−log p(tokens[i] | logits[i−1])` over positions with `mask[i]`
/// (the first position has no prediction and is skipped), the number of
/// such positions, and optionally the gradient of the sum.
pub fn masked_nll<T: Real>(
    logits: &Tensor<T>,
    tokens: &[usize],
    mask: &[bool],
    want_grad: bool,
) -> Result<(f64, usize, Option<Tensor<T>>)> {
    let (s, v) = (logits.rows(), logits.cols());
    if tokens.len() != s || mask.len() != s {
        return Err(Error::Shape {
            op: "masked_nll",
            left: logits.dims().to_vec(),
            right: vec![tokens.len(), mask.len()],
        });
    }
    let mut grad = want_grad.then(|| Tensor::zeros([s, v]));
    let mut sum = 0.0;
    let mut count = 0;
    for i in 1..s {
        if !mask[i] {
            continue;
        }
        let t = tokens[i];
        if t >= v {
            return Err(Error::Index {
                what: "target token",
                index: t,
                limit: v,
            });
        }
        let row = logits.row(i - 1);
        sum += (log_sum_exp(row) - row[t]).to_f64();
        count += 1;
        if let Some(g) = &mut grad {
            let p = softmax(&Tensor::new([1, v], row.to_vec())?);
            let dst = g.row_mut(i - 1);
            dst.copy_from_slice(p.data());
            dst[t] -= T::one();
        }
    }
    Ok((sum, count, grad))
}

/// Mean target cross-entropy of one sequence.
pub fn lm_loss<T: Real>(logits: &Tensor<T>, tokens: &[usize], mask: &[bool]) -> Result<f64> {
    let (sum, count, _) = masked_nll(logits, tokens, mask, false)?;
    if count == 0 {
        return Err(Error::DegenerateBatch);
    }
    Ok(sum / count as f64)
}
