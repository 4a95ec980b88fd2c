use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{Real, Tensor};

/// Rotary position tables: `cos[p][i]`, `sin[p][i]` for `i < d_kv/2`.
#[derive(Clone, Debug)]
pub struct Rope<T> {
    half: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Real> Rope<T> {
    pub fn new(d_kv: usize, max_len: usize, base: f64) -> Self {
        let half = d_kv / 2;
        let mut cos = Vec::with_capacity(max_len * half);
        let mut sin = Vec::with_capacity(max_len * half);
        for p in 0..max_len {
            for i in 0..half {
                let freq = libm::pow(base, -(2.0 * i as f64) / d_kv as f64);
                let a = p as f64 * freq;
                cos.push(T::of(libm::cos(a)));
                sin.push(T::of(libm::sin(a)));
            }
        }
        Self { half, cos, sin }
    }

    /// Rotates every head of `x: [S × H·d_kv]` in place (rotate-half
    /// pairing `i ↔ i + d_kv/2`). `inverse` applies the transpose, which is
    /// also the backward pass.
    pub fn apply(&self, x: &mut Tensor<T>, heads: usize, inverse: bool) {
        let (s, h2) = (x.rows(), self.half);
        let dk = 2 * h2;
        for p in 0..s {
            let (c, sn) = (&self.cos[p * h2..(p + 1) * h2], &self.sin[p * h2..(p + 1) * h2]);
            let row = x.row_mut(p);
            for h in 0..heads {
                let v = &mut row[h * dk..(h + 1) * dk];
                for i in 0..h2 {
                    let (a, b) = (v[i], v[i + h2]);
                    let sgn = if inverse { -sn[i] } else { sn[i] };
                    v[i] = a * c[i] - b * sgn;
                    v[i + h2] = b * c[i] + a * sgn;
                }
            }
        }
    }
}

/// Attention probabilities `[H_q][S][S]` kept for the backward pass.
pub struct AttnCache<T> {
    probs: Vec<T>,
}

/// Causal grouped-query attention for one sequence. `q: [S × H_q·d_kv]`,
/// `k, v: [S × H_kv·d_kv]`; query head `h` reads key/value head
/// `h / (H_q/H_kv)`. Keys with `key_valid[j] == false` are ignored; a query
/// with no visible key yields zeros.
pub fn gqa_attention<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    n_q: usize,
    n_kv: usize,
    key_valid: &[bool],
) -> (Tensor<T>, AttnCache<T>) {
    let s = q.rows();
    let dk = q.cols() / n_q;
    let group = n_q / n_kv;
    let scale = T::one() / T::of(dk as f64).sqrt();
    let mut out = Tensor::zeros([s, n_q * dk]);
    let mut probs = vec![T::zero(); n_q * s * s];
    let mut scores = vec![T::zero(); s];
    for h in 0..n_q {
        let g = h / group;
        for i in 0..s {
            let qi = &q.row(i)[h * dk..(h + 1) * dk];
            let mut max = T::neg_infinity();
            for j in 0..=i {
                if !key_valid[j] {
                    continue;
                }
                let kj = &k.row(j)[g * dk..(g + 1) * dk];
                let d: T = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                scores[j] = d;
                if d > max {
                    max = d;
                }
            }
            if max == T::neg_infinity() {
                continue;
            }
            let p = &mut probs[(h * s + i) * s..(h * s + i + 1) * s];
            let mut sum = T::zero();
            for j in 0..=i {
                if key_valid[j] {
                    p[j] = (scores[j] - max).libm_exp();
                    sum += p[j];
                }
            }
            let o = &mut out.row_mut(i)[h * dk..(h + 1) * dk];
            for j in 0..=i {
                if p[j] == T::zero() {
                    continue;
                }
                p[j] /= sum;
                let vj = &v.row(j)[g * dk..(g + 1) * dk];
                for (o, &vv) in o.iter_mut().zip(vj) {
                    *o += p[j] * vv;
                }
            }
        }
    }
    (out, AttnCache { probs })
}

/// Returns `(dq, dk, dv)`.
pub fn gqa_attention_backward<T: Real>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    n_q: usize,
    n_kv: usize,
    cache: &AttnCache<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let s = q.rows();
    let dk = q.cols() / n_q;
    let group = n_q / n_kv;
    let scale = T::one() / T::of(dk as f64).sqrt();
    let mut dq = Tensor::zeros([s, n_q * dk]);
    let mut dkt = Tensor::zeros([s, n_kv * dk]);
    let mut dv = Tensor::zeros([s, n_kv * dk]);
    let mut dp = vec![T::zero(); s];
    for h in 0..n_q {
        let g = h / group;
        for i in 0..s {
            let p = &cache.probs[(h * s + i) * s..(h * s + i + 1) * s];
            let go = &grad_out.row(i)[h * dk..(h + 1) * dk];
            let mut dot = T::zero();
            for j in 0..=i {
                if p[j] == T::zero() {
                    dp[j] = T::zero();
                    continue;
                }
                let vj = &v.row(j)[g * dk..(g + 1) * dk];
                dp[j] = go.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                dot += p[j] * dp[j];
                let dvj = &mut dv.row_mut(j)[g * dk..(g + 1) * dk];
                for (d, &gv) in dvj.iter_mut().zip(go) {
                    *d += p[j] * gv;
                }
            }
            for j in 0..=i {
                if p[j] == T::zero() {
                    continue;
                }
                let ds = p[j] * (dp[j] - dot) * scale;
                let kj = k.row(j)[g * dk..(g + 1) * dk].to_vec();
                let qi = q.row(i)[h * dk..(h + 1) * dk].to_vec();
                for (d, kv) in dq.row_mut(i)[h * dk..(h + 1) * dk].iter_mut().zip(&kj) {
                    *d += ds * *kv;
                }
                for (d, qv) in dkt.row_mut(j)[g * dk..(g + 1) * dk].iter_mut().zip(&qi) {
                    *d += ds * *qv;
                }
            }
        }
    }
    (dq, dkt, dv)
}
