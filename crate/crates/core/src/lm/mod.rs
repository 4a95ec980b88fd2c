//! Decoder-only transformer over the unified vocabulary: grouped-query
//! attention with rotary positions, pre-norm blocks, LoRA adapters and
//! geometry-feature injection at the object-geometry token.

mod attention;
mod block;
mod config;
mod generate;
mod loss;
mod lora;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::geom::{GeomCache, GeomEncoder, GeomEncoderConfig};
use crate::numerics::{rng, AdamW, Module, NormCache, Param, Real, Tensor, Trainable};
use crate::{Error, Result};

pub use attention::{gqa_attention, gqa_attention_backward, AttnCache, Rope};
pub use block::{Block, BlockCache, Norm};
pub use config::{FfnKind, NormKind, TransformerConfig};
pub use generate::{sample_next, DecodeParams};
pub use loss::{lm_loss, masked_nll};
pub use lora::{AdaptedLinear, LoraAdapter};

/// Projections eligible for adapters.
pub const LORA_TARGETS: [&str; 7] = ["attn.q", "attn.k", "attn.v", "attn.o", "ffn.gate", "ffn.up", "ffn.down"];

/// One training or scoring sequence. `mask[i]` marks token `i` as a target,
/// predicted from the logits at `i − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct LmExample<T> {
    pub tokens: Vec<usize>,
    pub mask: Vec<bool>,
    pub points: Option<Tensor<T>>,
}

pub struct LmCache<T> {
    tokens: Vec<usize>,
    geom: Option<(GeomCache<T>, Vec<usize>)>,
    blocks: Vec<BlockCache<T>>,
    final_norm: NormCache<T>,
    hidden: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct TransformerModel<T> {
    pub config: TransformerConfig,
    pub embed: Param<T>,
    pub blocks: Vec<Block<T>>,
    pub final_norm: Norm<T>,
    pub lm_head: AdaptedLinear<T>,
    pub geom: GeomEncoder<T>,
    rope: Rope<T>,
}

impl<T: Real> TransformerModel<T> {
    pub fn new(config: TransformerConfig, geom: GeomEncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if geom.d_model != config.d_model {
            return Err(Error::Config(format!(
                "geometry encoder width {} differs from d_model {}",
                geom.d_model, config.d_model
            )));
        }
        let r = &mut rng::seeded(seed);
        let d = config.d_model;
        let std = 1.0 / libm::sqrt(d as f64);
        let embed = Param::new("embed.weight", Tensor::randn([config.vocab_size, d], std, r));
        let blocks = (0..config.n_layers).map(|i| Block::new(i, &config, r)).collect();
        let final_norm = Norm::new("final_norm", d, config.norm, config.norm_eps);
        let lm_head = AdaptedLinear::new("lm_head", d, config.vocab_size, std, r);
        let geom = GeomEncoder::new(geom, r);
        let rope = Rope::new(config.d_kv, config.max_seq_len, config.rope_base);
        Ok(Self {
            config,
            embed,
            blocks,
            final_norm,
            lm_head,
            geom,
            rope,
        })
    }

    pub fn has_adapters(&self) -> bool {
        self.blocks.iter().any(|b| {
            [&b.q, &b.k, &b.v, &b.o, &b.up, &b.down]
                .into_iter()
                .chain(b.gate.as_ref())
                .any(|l| l.lora.is_some())
        })
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Length { len: 0, max: self.config.max_seq_len });
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::Length {
                len: tokens.len(),
                max: self.config.max_seq_len,
            });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Index {
                what: "token id",
                index: t,
                limit: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn ogt_positions(&self, tokens: &[usize]) -> Vec<usize> {
        match self.config.ogt_id {
            Some(o) => tokens.iter().enumerate().filter(|(_, &t)| t == o).map(|(i, _)| i).collect(),
            None => Vec::new(),
        }
    }

    /// Token embeddings with every OGT row replaced by `feature`.
    pub fn embed_tokens(&self, tokens: &[usize], feature: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        self.check_tokens(tokens)?;
        let d = self.config.d_model;
        let ogt = self.config.ogt_id;
        let mut x = Tensor::zeros([tokens.len(), d]);
        for (i, &t) in tokens.iter().enumerate() {
            let src = if Some(t) == ogt {
                match feature {
                    Some(f) => f.row(0),
                    None => return Err(Error::Injection { seq: 0 }),
                }
            } else {
                self.embed.value.row(t)
            };
            x.row_mut(i).copy_from_slice(src);
        }
        Ok(x)
    }

    fn key_valid(&self, tokens: &[usize]) -> Vec<bool> {
        tokens.iter().map(|&t| Some(t) != self.config.pad_id).collect()
    }

    fn run_blocks(&self, x: Tensor<T>, tokens: &[usize]) -> (Tensor<T>, Vec<BlockCache<T>>, NormCache<T>) {
        let valid = self.key_valid(tokens);
        let mut h = x;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (next, c) = b.forward(&h, &self.rope, &valid);
            caches.push(c);
            h = next;
        }
        let (hn, nc) = self.final_norm.forward(&h);
        (hn, caches, nc)
    }

    /// Logits `[S × V]` for a token sequence; `points` feeds the OGT slot.
    pub fn forward(&self, tokens: &[usize], points: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(tokens, points)?.0)
    }

    /// Logits given a precomputed geometry feature.
    pub fn forward_with_feature(&self, tokens: &[usize], feature: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let x = self.embed_tokens(tokens, feature)?;
        let (h, _, _) = self.run_blocks(x, tokens);
        Ok(self.lm_head.forward(&h).0)
    }

    /// Logits of the last position only.
    pub fn last_logits(&self, tokens: &[usize], feature: Option<&Tensor<T>>) -> Result<Vec<T>> {
        let x = self.embed_tokens(tokens, feature)?;
        let (h, _, _) = self.run_blocks(x, tokens);
        let last = Tensor::new([1, h.cols()], h.row(h.rows() - 1).to_vec())?;
        Ok(self.lm_head.forward(&last).0.into_data())
    }

    pub fn geometry_feature(&self, points: &Tensor<T>) -> Result<Tensor<T>> {
        self.geom.encode(points)
    }

    pub fn forward_cached(&self, tokens: &[usize], points: Option<&Tensor<T>>) -> Result<(Tensor<T>, LmCache<T>)> {
        self.check_tokens(tokens)?;
        let ogt = self.ogt_positions(tokens);
        let geom = match (ogt.is_empty(), points) {
            (true, _) => None,
            (false, None) => return Err(Error::Injection { seq: 0 }),
            (false, Some(p)) => Some(self.geom.forward(p)?),
        };
        let x = self.embed_tokens(tokens, geom.as_ref().map(|g| &g.0))?;
        let (h, blocks, final_norm) = self.run_blocks(x, tokens);
        let logits = self.lm_head.forward(&h).0;
        Ok((
            logits,
            LmCache {
                tokens: tokens.to_vec(),
                geom: geom.map(|(_, c)| (c, ogt)),
                blocks,
                final_norm,
                hidden: h,
            },
        ))
    }

    /// Accumulates gradients of `Σ grad_logits ⊙ logits` into every parameter.
    pub fn backward(&mut self, cache: &LmCache<T>, grad_logits: &Tensor<T>) -> Result<()> {
        let mut g = self.lm_head.backward(&cache.hidden, None, grad_logits)?;
        g = self.final_norm.backward(&cache.final_norm, &g)?;
        for (b, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = b.backward(c, &self.rope, &g)?;
        }
        let d = self.config.d_model;
        let ogt = self.config.ogt_id;
        let mut g_feat = Tensor::zeros([1, d]);
        for (i, &t) in cache.tokens.iter().enumerate() {
            if Some(t) == ogt && cache.geom.is_some() {
                for (a, &b) in g_feat.data_mut().iter_mut().zip(g.row(i)) {
                    *a += b;
                }
            } else {
                for (a, &b) in self.embed.grad.row_mut(t).iter_mut().zip(g.row(i)) {
                    *a += b;
                }
            }
        }
        if let Some((gc, _)) = &cache.geom {
            self.geom.backward(gc, &g_feat)?;
        }
        Ok(())
    }

    /// Forward and backward of one example with its summed target NLL scaled
    /// by `weight`; returns `(nll_sum, target_count)`.
    pub fn accumulate(&mut self, ex: &LmExample<T>, weight: T) -> Result<(f64, usize)> {
        let (logits, cache) = self.forward_cached(&ex.tokens, ex.points.as_ref())?;
        let (sum, count, mut grad) = masked_nll(&logits, &ex.tokens, &ex.mask, true)?;
        if count > 0 {
            let mut g = grad.take().expect("gradient requested");
            g.scale(weight);
            self.backward(&cache, &g)?;
        }
        Ok((sum, count))
    }

    /// Summed target NLL and target count without gradients.
    pub fn score(&self, ex: &LmExample<T>) -> Result<(f64, usize)> {
        let logits = self.forward(&ex.tokens, ex.points.as_ref())?;
        let (s, c, _) = masked_nll(&logits, &ex.tokens, &ex.mask, false)?;
        Ok((s, c))
    }

    /// One optimizer step on a batch; the loss is the mean NLL over all
    /// target tokens of the batch.
    pub fn train_step(&mut self, batch: &[LmExample<T>], opt: &mut AdamW<T>) -> Result<f64> {
        let total: usize = batch.iter().map(|e| e.mask.iter().skip(1).filter(|&&m| m).count()).sum();
        if total == 0 {
            return Err(Error::DegenerateBatch);
        }
        self.zero_grad();
        let w = T::one() / T::of(total as f64);
        let mut sum = 0.0;
        for (i, ex) in batch.iter().enumerate() {
            sum += self
                .accumulate(ex, w)
                .map_err(|e| match e {
                    Error::Injection { .. } => Error::Injection { seq: i },
                    e => e,
                })?
                .0;
        }
        opt.step(self)?;
        Ok(sum / total as f64)
    }

    /// Attaches fresh adapters to every block projection named in
    /// `targets` and freezes the backbone, leaving trainable the adapters,
    /// the embedding and output rows of new tokens, and the geometry encoder.
    pub fn attach_lora(&mut self, targets: &[&str], rank: usize, alpha: f64, seed: u64) -> Result<()> {
        let set: BTreeSet<&str> = targets.iter().copied().collect();
        for t in &set {
            let ok = LORA_TARGETS.contains(t) && (*t != "ffn.gate" || self.config.ffn == FfnKind::SwiGlu);
            if !ok {
                return Err(Error::UnknownTarget(t.to_string()));
            }
        }
        if rank == 0 {
            return Err(Error::Config("LoRA rank must be positive".into()));
        }
        let r = &mut rng::stream(seed, 0x10AA);
        self.visit_mut(&mut |p| p.trainable = Trainable::Frozen);
        for b in &mut self.blocks {
            for t in LORA_TARGETS {
                if set.contains(t) {
                    if let Some(l) = b.linear_mut(t) {
                        l.attach(rank, alpha, r);
                    }
                }
            }
        }
        let start = self.config.new_token_start;
        self.embed.trainable = Trainable::RowsFrom(start);
        self.lm_head.weight.trainable = Trainable::RowsFrom(start);
        self.geom.visit_mut(&mut |p| p.trainable = Trainable::All);
        Ok(())
    }

    /// Folds every adapter into its weight and unfreezes all parameters.
    pub fn merge_lora(&mut self) {
        for b in &mut self.blocks {
            for t in LORA_TARGETS {
                if let Some(l) = b.linear_mut(t) {
                    l.merge();
                }
            }
        }
        self.visit_mut(&mut |p| p.trainable = Trainable::All);
    }

    /// Names of parameters with at least one trainable element.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |p| {
            if p.trainable_len() > 0 {
                out.push(p.name.clone());
            }
        });
        out
    }
}

impl<T: Real> Module<T> for TransformerModel<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.embed);
        for b in &self.blocks {
            b.visit(f);
        }
        self.final_norm.visit(f);
        self.lm_head.visit(f);
        self.geom.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.embed);
        for b in &mut self.blocks {
            b.visit_mut(f);
        }
        self.final_norm.visit_mut(f);
        self.lm_head.visit_mut(f);
        self.geom.visit_mut(f);
    }
}

#[cfg(test)]
mod tests;
