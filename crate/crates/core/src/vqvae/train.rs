use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{utilization, MotionTokenizer, VqLoss};
use crate::numerics::{rng, AdamW, AdamWConfig, Module, Real, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub step: u64,
    pub total: f64,
    pub recon: f64,
    pub embed: f64,
    pub commit: f64,
    pub velocity: f64,
    /// Fraction of entries assigned at least once during the epoch.
    pub utilization: f64,
    pub resets: usize,
}

/// Mini-batch training loop with resumable epoch and step counters.
pub struct Trainer<T> {
    pub tokenizer: MotionTokenizer<T>,
    pub optimizer: AdamW<T>,
    pub batch_size: usize,
    pub epoch: usize,
    pub step: u64,
    seed: u64,
}

impl<T: Real> Trainer<T> {
    pub fn new(tokenizer: MotionTokenizer<T>, optim: AdamWConfig, batch_size: usize, seed: u64) -> Self {
        Self {
            tokenizer,
            optimizer: AdamW::new(optim),
            batch_size: batch_size.max(1),
            epoch: 0,
            step: 0,
            seed,
        }
    }

    /// Continues from a restored tokenizer at the given counters. Optimizer
    /// moments restart from zero.
    pub fn resume(mut self, epoch: usize, step: u64) -> Self {
        self.epoch = epoch;
        self.step = step;
        self
    }

    /// One pass over `data` (raw, unpadded motions) in a seeded order.
    pub fn train_epoch(&mut self, data: &[Tensor<T>]) -> Result<EpochLog> {
        if data.is_empty() {
            return Err(Error::Config("tokenizer training needs at least one sequence".into()));
        }
        let tok = &mut self.tokenizer;
        let prepared: Vec<Tensor<T>> = data
            .iter()
            .map(|m| tok.pad(m).map(|(p, _)| tok.normalize(&p)))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut r = rng::stream(self.seed, self.epoch as u64);
        rng::shuffle(&mut r, &mut order);

        let k = tok.codebook.size();
        let mut used = Vec::new();
        let mut sum = VqLoss::default();
        let mut resets = 0;
        for (b, chunk) in order.chunks(self.batch_size).enumerate() {
            tok.zero_grad();
            let w = 1.0 / chunk.len() as f64;
            let mut lat_rows = Vec::new();
            let mut idx = Vec::new();
            for &i in chunk {
                let pass = tok.accumulate(&prepared[i], T::of(w))?;
                if !pass.loss.total.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch: self.epoch, batch: b });
                }
                sum.accumulate(&pass.loss, 1.0 / data.len() as f64);
                lat_rows.extend_from_slice(pass.latents.data());
                idx.extend_from_slice(&pass.indices);
            }
            self.optimizer.step(tok)?;
            let d = tok.codebook.dim();
            let latents = Tensor::new([idx.len(), d], lat_rows)?;
            if tok.config.ema {
                tok.codebook.ema_update(&latents, &idx);
            }
            if tok.config.reset {
                resets += tok.codebook.reset_dead(&latents, tok.config.reset_threshold, &mut r);
            }
            used.extend(idx);
            self.step += 1;
        }
        let log = EpochLog {
            epoch: self.epoch,
            step: self.step,
            total: sum.total,
            recon: sum.recon,
            embed: sum.embed,
            commit: sum.commit,
            velocity: sum.velocity,
            utilization: utilization(used, k),
            resets,
        };
        self.epoch += 1;
        Ok(log)
    }

    pub fn train(&mut self, data: &[Tensor<T>], epochs: usize) -> Result<Vec<EpochLog>> {
        (0..epochs).map(|_| self.train_epoch(data)).collect()
    }
}

/// Fraction of codebook entries used when tokenizing `probe`.
pub fn probe_utilization<T: Real>(tok: &MotionTokenizer<T>, probe: &[Tensor<T>]) -> Result<f64> {
    let mut used = Vec::new();
    for m in probe {
        used.extend(tok.tokenize(m)?.indices);
    }
    Ok(utilization(used, tok.codebook.size()))
}

/// `1 − SSE/SST` with per-feature means, pooled over all sequences.
pub fn r_squared<T: Real>(tok: &MotionTokenizer<T>, data: &[Tensor<T>]) -> Result<f64> {
    let d = tok.config.input_dim;
    let mut mean = alloc::vec![0.0f64; d];
    let mut n = 0usize;
    for m in data {
        for t in 0..m.rows() {
            for (j, &v) in m.row(t).iter().enumerate() {
                mean[j] += v.to_f64();
            }
            n += 1;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let (mut sse, mut sst) = (0.0, 0.0);
    for m in data {
        let y = tok.reconstruct(m)?;
        for (i, (&a, &b)) in m.data().iter().zip(y.data()).enumerate() {
            let (a, b) = (a.to_f64(), b.to_f64());
            sse += (a - b) * (a - b);
            sst += (a - mean[i % d]) * (a - mean[i % d]);
        }
    }
    Ok(if sst > 0.0 { 1.0 - sse / sst } else { 0.0 })
}
