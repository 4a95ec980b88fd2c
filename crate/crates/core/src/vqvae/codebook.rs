use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{rng, Param, Real, Tensor, Trainable};

/// `K × d` quantization table with EMA statistics.
#[derive(Clone, Debug)]
pub struct Codebook<T> {
    pub entries: Param<T>,
    pub ema_counts: Vec<T>,
    pub ema_sums: Tensor<T>,
    pub decay: f64,
    pub usage_epsilon: f64,
}

impl<T: Real> Codebook<T> {
    /// Random entries; EMA statistics start as one observation of each entry.
    pub fn new(k: usize, d: usize, std: f64, r: &mut rng::Rng) -> Self {
        let entries = Tensor::randn([k, d], std, r);
        Self {
            ema_sums: entries.clone(),
            entries: Param::new("codebook.entries", entries),
            ema_counts: vec![T::one(); k],
            decay: 0.99,
            usage_epsilon: 1e-5,
        }
    }

    pub fn size(&self) -> usize {
        self.entries.value.rows()
    }

    pub fn dim(&self) -> usize {
        self.entries.value.cols()
    }

    /// Whether the entries are learned by gradient (`false`) or by EMA.
    pub fn set_ema(&mut self, ema: bool) {
        self.entries.trainable = if ema { Trainable::Frozen } else { Trainable::All };
    }

    /// Nearest entry of every latent row; ties go to the lowest index.
    pub fn quantize(&self, latents: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
        let (m, d) = (latents.rows(), latents.cols());
        let e = &self.entries.value;
        let mut indices = Vec::with_capacity(m);
        let mut out = Tensor::zeros([m, d]);
        for i in 0..m {
            let z = latents.row(i);
            let mut best = 0;
            let mut best_d = T::infinity();
            for k in 0..e.rows() {
                let dist: T = z.iter().zip(e.row(k)).map(|(&a, &b)| (a - b) * (a - b)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = k;
                }
            }
            indices.push(best);
            out.row_mut(i).copy_from_slice(e.row(best));
        }
        (out, indices)
    }

    pub fn lookup(&self, indices: &[usize]) -> crate::Result<Tensor<T>> {
        let (k, d) = (self.size(), self.dim());
        let mut out = Tensor::zeros([indices.len().max(1), d]);
        for (i, &idx) in indices.iter().enumerate() {
            if idx >= k {
                return Err(crate::Error::Index {
                    what: "codebook index",
                    index: idx,
                    limit: k,
                });
            }
            out.row_mut(i).copy_from_slice(self.entries.value.row(idx));
        }
        if indices.is_empty() {
            return Err(crate::Error::Shape {
                op: "codebook lookup",
                left: vec![0],
                right: vec![1],
            });
        }
        Ok(out)
    }

    /// One EMA step over a batch of latents and their assignments, followed
    /// by the Laplace-smoothed entry refresh.
    pub fn ema_update(&mut self, latents: &Tensor<T>, indices: &[usize]) {
        let (k, d) = (self.size(), self.dim());
        let mut counts = vec![T::zero(); k];
        let mut sums = Tensor::<T>::zeros([k, d]);
        for (i, &idx) in indices.iter().enumerate() {
            counts[idx] += T::one();
            for (s, &z) in sums.row_mut(idx).iter_mut().zip(latents.row(i)) {
                *s += z;
            }
        }
        let decay = T::of(self.decay);
        let keep = T::one() - decay;
        for (c, &b) in self.ema_counts.iter_mut().zip(&counts) {
            *c = decay * *c + keep * b;
        }
        for (s, &b) in self.ema_sums.data_mut().iter_mut().zip(sums.data()) {
            *s = decay * *s + keep * b;
        }
        self.refresh_entries();
    }

    fn refresh_entries(&mut self) {
        let k = self.size();
        let eps = T::of(self.usage_epsilon);
        let n: T = self.ema_counts.iter().copied().sum();
        for j in 0..k {
            let smoothed = (self.ema_counts[j] + eps) / (n + T::of(k as f64) * eps) * n;
            let src = self.ema_sums.row(j).to_vec();
            for (e, s) in self.entries.value.row_mut(j).iter_mut().zip(src) {
                *e = s / smoothed;
            }
        }
    }

    /// Replaces every entry whose EMA count is below `threshold` with a
    /// uniformly drawn batch latent; returns how many were reset.
    pub fn reset_dead(&mut self, batch_latents: &Tensor<T>, threshold: f64, r: &mut rng::Rng) -> usize {
        let n = batch_latents.rows();
        let mut resets = 0;
        for j in 0..self.size() {
            if self.ema_counts[j].to_f64() < threshold {
                let z = batch_latents.row(rng::below(r, n)).to_vec();
                self.entries.value.row_mut(j).copy_from_slice(&z);
                self.ema_sums.row_mut(j).copy_from_slice(&z);
                self.ema_counts[j] = T::one();
                resets += 1;
            }
        }
        resets
    }
}

/// Fraction of `k` entries that appear in `indices`.
pub fn utilization(indices: impl IntoIterator<Item = usize>, k: usize) -> f64 {
    let mut used = vec![false; k];
    for i in indices {
        if i < k {
            used[i] = true;
        }
    }
    used.iter().filter(|&&u| u).count() as f64 / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(entries: &Tensor<f32>, z: &[f32]) -> usize {
        let mut best = (f32::INFINITY, 0);
        for k in 0..entries.rows() {
            let mut d = 0.0f32;
            for (a, b) in z.iter().zip(entries.row(k)) {
                d += (a - b) * (a - b);
            }
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    #[test]
    fn exact_match_and_tie_break() {
        let mut r = rng::seeded(0);
        let mut cb = Codebook::<f32>::new(8, 3, 1.0, &mut r);
        let e7 = cb.entries.value.row(7).to_vec();
        let z = Tensor::new([1, 3], e7).unwrap();
        assert_eq!(cb.quantize(&z).1, vec![7]);

        cb.entries.value.row_mut(2).copy_from_slice(&[1.0, 0.0, 0.0]);
        cb.entries.value.row_mut(5).copy_from_slice(&[-1.0, 0.0, 0.0]);
        for k in [0, 1, 3, 4, 6, 7] {
            cb.entries.value.row_mut(k).copy_from_slice(&[10.0, 10.0, 10.0]);
        }
        let (q, idx) = cb.quantize(&Tensor::zeros([1, 3]));
        assert_eq!(idx, vec![2]);
        assert_eq!(q.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn agrees_with_exhaustive_scan() {
        let mut r = rng::seeded(1);
        let cb = Codebook::<f32>::new(64, 8, 1.0, &mut r);
        let z = Tensor::randn([100, 8], 1.0, &mut r);
        let (_, idx) = cb.quantize(&z);
        for i in 0..100 {
            assert_eq!(idx[i], brute_force(&cb.entries.value, z.row(i)));
        }
    }

    #[test]
    fn ema_limit_decay_zero() {
        let mut r = rng::seeded(2);
        let mut cb = Codebook::<f64>::new(4, 3, 1.0, &mut r);
        cb.decay = 0.0;
        let v = [0.3, -1.1, 0.7];
        let z = Tensor::from_fn([100, 3], |i| v[i % 3]);
        let idx = vec![1; 100];
        cb.ema_update(&z, &idx);
        for (a, b) in cb.entries.value.row(1).iter().zip(&v) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn ema_matches_direct_recurrence() {
        let mut r = rng::seeded(3);
        let (k, d) = (5, 2);
        let mut cb = Codebook::<f64>::new(k, d, 1.0, &mut r);
        let mut counts = cb.ema_counts.clone();
        let mut sums = cb.ema_sums.data().to_vec();
        let (decay, eps) = (cb.decay, cb.usage_epsilon);
        for _ in 0..10 {
            let z = Tensor::<f64>::randn([12, d], 1.0, &mut r);
            let idx: Vec<usize> = (0..12).map(|_| rng::below(&mut r, k)).collect();
            cb.ema_update(&z, &idx);
            for j in 0..k {
                let c: f64 = idx.iter().filter(|&&i| i == j).count() as f64;
                counts[j] = decay * counts[j] + (1.0 - decay) * c;
                for t in 0..d {
                    let s: f64 = idx.iter().enumerate().filter(|(_, &i)| i == j).map(|(n, _)| z.row(n)[t]).sum();
                    sums[j * d + t] = decay * sums[j * d + t] + (1.0 - decay) * s;
                }
            }
        }
        let n: f64 = counts.iter().sum();
        for j in 0..k {
            let sm = (counts[j] + eps) / (n + k as f64 * eps) * n;
            for t in 0..d {
                assert!((cb.entries.value.row(j)[t] - sums[j * d + t] / sm).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn unassigned_entry_keeps_its_value() {
        let mut r = rng::seeded(4);
        let mut cb = Codebook::<f64>::new(4, 2, 1.0, &mut r);
        let before = cb.entries.value.row(3).to_vec();
        let count_before = cb.ema_counts[3];
        let z = Tensor::randn([6, 2], 1.0, &mut r);
        cb.ema_update(&z, &[0, 1, 2, 0, 1, 2]);
        assert!(cb.ema_counts[3] < count_before);
        for (a, b) in cb.entries.value.row(3).iter().zip(&before) {
            assert!((a - b).abs() < 0.05 * b.abs().max(1.0));
        }
    }

    #[test]
    fn reset_cases() {
        let mut r = rng::seeded(5);
        let mut cb = Codebook::<f32>::new(6, 2, 1.0, &mut r);
        let before = cb.entries.value.clone();
        let z = Tensor::randn([10, 2], 1.0, &mut r);
        assert_eq!(cb.reset_dead(&z, 0.5, &mut r), 0);
        assert_eq!(cb.entries.value, before);
        assert_eq!(cb.reset_dead(&z, f64::INFINITY, &mut r), 6);
        for k in 0..6 {
            assert!((0..10).any(|i| z.row(i) == cb.entries.value.row(k)));
            assert_eq!(cb.ema_counts[k], 1.0);
        }
    }

    #[test]
    fn utilization_fraction() {
        assert_eq!(utilization([0, 0, 3], 4), 0.5);
        assert_eq!(utilization([], 4), 0.0);
    }
}
