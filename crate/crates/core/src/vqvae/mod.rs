//! Motion tokenizers: a temporal conv encoder, nearest-neighbour codebook
//! with straight-through gradients and EMA maintenance, and a conv decoder
//! with nearest-neighbour upsampling.

mod codebook;
mod loss;
mod train;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numerics::{rng, Conv1d, Module, Param, Real, SeqCache, SeqLayer, Sequential, Tensor};
use crate::{Error, Result};

pub use codebook::{utilization, Codebook};
pub use loss::{recon_grad, vq_loss, VqLoss};
pub use train::{probe_utilization, r_squared, EpochLog, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerConfig {
    pub input_dim: usize,
    /// Encoder widths: the first entry follows the input conv, the last is
    /// used by every downsampling stage.
    pub widths: Vec<usize>,
    pub downsample: usize,
    pub codebook_size: usize,
    pub code_dim: usize,
    pub beta_commit: f64,
    pub lambda_velocity: f64,
    pub ema: bool,
    pub ema_decay: f64,
    pub usage_epsilon: f64,
    pub reset: bool,
    pub reset_threshold: f64,
    /// Floor applied to per-feature standard deviations.
    pub std_floor: f64,
}

impl TokenizerConfig {
    fn base(input_dim: usize) -> Self {
        Self {
            input_dim,
            widths: vec![64, 128],
            downsample: 2,
            codebook_size: 64,
            code_dim: 32,
            beta_commit: 0.25,
            lambda_velocity: 1.0,
            ema: true,
            ema_decay: 0.99,
            usage_epsilon: 1e-5,
            reset: true,
            reset_threshold: 1.0,
            std_floor: 0.1,
        }
    }

    pub fn human_desk() -> Self {
        Self::base(crate::data::joint::COUNT * 3)
    }

    pub fn object_desk() -> Self {
        Self::base(crate::data::OBJECT_DIM)
    }

    /// Codebook 512 × 4096 with SMPL-H sized human input.
    pub fn human_paper() -> Self {
        Self {
            widths: vec![512, 1024],
            codebook_size: 512,
            code_dim: 4096,
            ..Self::base(159)
        }
    }

    pub fn object_paper() -> Self {
        Self {
            input_dim: crate::data::OBJECT_DIM,
            ..Self::human_paper()
        }
    }

    pub fn stages(&self) -> usize {
        self.downsample.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("tokenizer: {m}")));
        if self.input_dim == 0 || self.code_dim == 0 {
            return bad("input_dim and code_dim must be positive");
        }
        if self.downsample == 0 || !self.downsample.is_power_of_two() {
            return bad("downsample must be a power of two");
        }
        if self.widths.len() != 2 || self.widths.contains(&0) {
            return bad("widths must hold two positive channel counts");
        }
        if self.codebook_size < 2 {
            return bad("codebook needs at least two entries");
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad("ema_decay must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Codebook indices of one sequence plus the number of padded frames.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenized {
    pub indices: Vec<usize>,
    pub pad: usize,
}

/// Forward intermediates of one training sequence.
pub struct Pass<T> {
    pub loss: VqLoss,
    pub latents: Tensor<T>,
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct MotionTokenizer<T> {
    pub config: TokenizerConfig,
    pub encoder: Sequential<T>,
    pub decoder: Sequential<T>,
    pub codebook: Codebook<T>,
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> MotionTokenizer<T> {
    pub fn new(config: TokenizerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let r = &mut rng::seeded(seed);
        let (d_in, d) = (config.input_dim, config.code_dim);
        let (w0, w1) = (config.widths[0], config.widths[1]);
        let conv = |name: String, a, b, k, s, p, r: &mut rng::Rng| SeqLayer::Conv(Conv1d::new(&name, a, b, k, s, p, r));

        let mut enc = vec![conv("encoder.in".into(), d_in, w0, 3, 1, 1, r), SeqLayer::Relu];
        let mut c = w0;
        for s in 0..config.stages() {
            enc.push(conv(format!("encoder.down{s}"), c, w1, 4, 2, 1, r));
            enc.push(SeqLayer::Relu);
            c = w1;
        }
        enc.push(conv("encoder.out".into(), c, d, 3, 1, 1, r));

        let mut dec = vec![conv("decoder.in".into(), d, w1, 3, 1, 1, r), SeqLayer::Relu];
        for s in 0..config.stages() {
            dec.push(SeqLayer::Upsample(2));
            dec.push(conv(format!("decoder.up{s}"), w1, w1, 3, 1, 1, r));
            dec.push(SeqLayer::Relu);
        }
        dec.push(conv("decoder.mid".into(), w1, w0, 3, 1, 1, r));
        dec.push(SeqLayer::Relu);
        dec.push(conv("decoder.out".into(), w0, d_in, 3, 1, 1, r));

        let mut codebook = Codebook::new(config.codebook_size, d, 1.0, r);
        codebook.decay = config.ema_decay;
        codebook.usage_epsilon = config.usage_epsilon;
        codebook.set_ema(config.ema);
        Ok(Self {
            encoder: Sequential { name: "encoder".into(), layers: enc },
            decoder: Sequential { name: "decoder".into(), layers: dec },
            codebook,
            mean: vec![T::zero(); d_in],
            std: vec![T::one(); d_in],
            config,
        })
    }

    /// Sets per-feature mean and (floored) standard deviation from `data`.
    pub fn fit_normalization(&mut self, data: &[Tensor<T>]) {
        let d = self.config.input_dim;
        let mut sum = vec![0.0f64; d];
        let mut sq = vec![0.0f64; d];
        let mut n = 0usize;
        for m in data {
            for t in 0..m.rows() {
                for (j, &v) in m.row(t).iter().enumerate() {
                    sum[j] += v.to_f64();
                    sq[j] += v.to_f64() * v.to_f64();
                }
                n += 1;
            }
        }
        if n == 0 {
            return;
        }
        for j in 0..d {
            let mu = sum[j] / n as f64;
            let var = (sq[j] / n as f64 - mu * mu).max(0.0);
            self.mean[j] = T::of(mu);
            self.std[j] = T::of(libm::sqrt(var).max(self.config.std_floor));
        }
    }

    pub fn normalize(&self, motion: &Tensor<T>) -> Tensor<T> {
        let d = self.config.input_dim;
        Tensor::from_fn(motion.dims().to_vec(), |i| (motion.data()[i] - self.mean[i % d]) / self.std[i % d])
    }

    pub fn denormalize(&self, x: &Tensor<T>) -> Tensor<T> {
        let d = self.config.input_dim;
        Tensor::from_fn(x.dims().to_vec(), |i| x.data()[i] * self.std[i % d] + self.mean[i % d])
    }

    /// Right-pads by repeating the last frame up to a multiple of `l`.
    pub fn pad(&self, motion: &Tensor<T>) -> Result<(Tensor<T>, usize)> {
        let (len, d) = (motion.rows(), motion.cols());
        let l = self.config.downsample;
        if d != self.config.input_dim {
            return Err(Error::Shape {
                op: "tokenizer input",
                left: motion.dims().to_vec(),
                right: vec![len, self.config.input_dim],
            });
        }
        if len < l {
            return Err(Error::SequenceTooShort { len, min: l });
        }
        let pad = (l - len % l) % l;
        if pad == 0 {
            return Ok((motion.clone(), 0));
        }
        let mut data = motion.data().to_vec();
        let last = motion.row(len - 1).to_vec();
        for _ in 0..pad {
            data.extend_from_slice(&last);
        }
        Ok((Tensor::new([len + pad, d], data)?, pad))
    }

    fn encode_normalized(&self, x: &Tensor<T>) -> Result<(Tensor<T>, SeqCache<T>)> {
        self.encoder.forward(x)
    }

    /// Latents `m × d` with `m = ceil(L / l)`.
    pub fn encode(&self, motion: &Tensor<T>) -> Result<Tensor<T>> {
        let (padded, _) = self.pad(motion)?;
        Ok(self.encode_normalized(&self.normalize(&padded))?.0)
    }

    pub fn quantize(&self, latents: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
        self.codebook.quantize(latents)
    }

    /// Motion of length `m·l` in the original feature units.
    pub fn decode(&self, quantized: &Tensor<T>) -> Result<Tensor<T>> {
        if quantized.cols() != self.config.code_dim {
            return Err(Error::Shape {
                op: "decode",
                left: quantized.dims().to_vec(),
                right: vec![quantized.rows(), self.config.code_dim],
            });
        }
        Ok(self.denormalize(&self.decoder.forward(quantized)?.0))
    }

    pub fn tokenize(&self, motion: &Tensor<T>) -> Result<Tokenized> {
        let (padded, pad) = self.pad(motion)?;
        let z = self.encode_normalized(&self.normalize(&padded))?.0;
        Ok(Tokenized {
            indices: self.quantize(&z).1,
            pad,
        })
    }

    /// Decodes indices and trims `pad` trailing frames.
    pub fn detokenize(&self, indices: &[usize], pad: usize) -> Result<Tensor<T>> {
        let q = self.codebook.lookup(indices)?;
        let out = self.decode(&q)?;
        let keep = out.rows().saturating_sub(pad).max(1);
        Tensor::new([keep, out.cols()], out.data()[..keep * out.cols()].to_vec())
    }

    pub fn reconstruct(&self, motion: &Tensor<T>) -> Result<Tensor<T>> {
        let t = self.tokenize(motion)?;
        let out = self.detokenize(&t.indices, t.pad)?;
        Tensor::new(motion.dims().to_vec(), out.data()[..motion.len()].to_vec())
    }

    /// Forward and backward pass over one normalized, padded sequence.
    /// Gradients are scaled by `weight` and accumulated into the parameters.
    pub fn accumulate(&mut self, x: &Tensor<T>, weight: T) -> Result<Pass<T>> {
        let cfg = &self.config;
        let (z_e, enc_cache) = self.encoder.forward(x)?;
        let (z_q, indices) = self.codebook.quantize(&z_e);
        let (y, dec_cache) = self.decoder.forward(&z_q)?;
        let loss = vq_loss(x, &y, &z_e, &z_q, cfg)?;

        let mut gy = recon_grad(x, &y, cfg.lambda_velocity);
        gy.scale(weight);
        let mut gz = self.decoder.backward(&dec_cache, &gy)?;
        let md = z_e.len() as f64;
        let commit = T::of(2.0 * cfg.beta_commit / md) * weight;
        let embed = T::of(2.0 / md) * weight;
        let ema = cfg.ema;
        for (i, &k) in indices.iter().enumerate() {
            let (ze, zq) = (z_e.row(i), z_q.row(i));
            for (j, g) in gz.row_mut(i).iter_mut().enumerate() {
                *g += commit * (ze[j] - zq[j]);
            }
            if !ema {
                let ge = self.codebook.entries.grad.row_mut(k);
                for j in 0..ze.len() {
                    ge[j] += embed * (zq[j] - ze[j]);
                }
            }
        }
        self.encoder.backward(&enc_cache, &gz)?;
        Ok(Pass {
            loss,
            latents: z_e,
            indices,
        })
    }

    /// Parameters plus codebook statistics and normalization, by name.
    pub fn checkpoint(&self) -> Vec<(String, Tensor<f32>)> {
        let (k, d) = (self.codebook.size(), self.codebook.dim());
        let vec_tensor = |v: &[T]| Tensor::from_fn([v.len()], |i| v[i].to_f64() as f32);
        let mut out = self.state();
        out.push(("codebook.ema_counts".into(), vec_tensor(&self.codebook.ema_counts)));
        out.push(("codebook.ema_sums".into(), self.codebook.ema_sums.cast()));
        out.push(("norm.mean".into(), vec_tensor(&self.mean)));
        out.push(("norm.std".into(), vec_tensor(&self.std)));
        debug_assert_eq!(self.codebook.ema_sums.dims(), &[k, d]);
        out
    }

    pub fn load_checkpoint(&mut self, entries: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        self.load_state(entries)?;
        let get = |name: &str, dims: &[usize]| -> Result<Tensor<T>> {
            let t = entries
                .get(name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks `{name}`")))?;
            if t.dims() != dims {
                return Err(Error::Shape {
                    op: "load_checkpoint",
                    left: t.dims().to_vec(),
                    right: dims.to_vec(),
                });
            }
            Ok(t.cast())
        };
        let (k, d, dim) = (self.codebook.size(), self.codebook.dim(), self.config.input_dim);
        self.codebook.ema_counts = get("codebook.ema_counts", &[k])?.into_data();
        self.codebook.ema_sums = get("codebook.ema_sums", &[k, d])?;
        self.mean = get("norm.mean", &[dim])?.into_data();
        self.std = get("norm.std", &[dim])?.into_data();
        Ok(())
    }
}

impl<T: Real> Module<T> for MotionTokenizer<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.encoder.visit(f);
        self.decoder.visit(f);
        f(&self.codebook.entries);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
        f(&mut self.codebook.entries);
    }
}
