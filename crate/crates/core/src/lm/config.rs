use alloc::format;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Rms,
    Layer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FfnKind {
    SwiGlu,
    Gelu,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_q_heads: usize,
    pub n_kv_heads: usize,
    pub d_kv: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub rope_base: f64,
    pub norm: NormKind,
    pub ffn: FfnKind,
    pub norm_eps: f64,
    /// Token whose embedding row is replaced by the geometry feature.
    pub ogt_id: Option<usize>,
    /// Keys holding this token are masked out of attention.
    pub pad_id: Option<usize>,
    /// First id of the tokens added on top of the text vocabulary; their
    /// embedding and output rows stay trainable under adapters.
    pub new_token_start: usize,
}

impl TransformerConfig {
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            n_layers: 2,
            d_model: 64,
            n_q_heads: 4,
            n_kv_heads: 2,
            d_kv: 16,
            d_ff: 128,
            vocab_size,
            max_seq_len: 256,
            rope_base: 10000.0,
            norm: NormKind::Rms,
            ffn: FfnKind::SwiGlu,
            norm_eps: 1e-6,
            ogt_id: None,
            pad_id: None,
            new_token_start: vocab_size,
        }
    }

    pub fn paper(vocab_size: usize) -> Self {
        Self {
            n_layers: 36,
            d_model: 4096,
            n_q_heads: 32,
            n_kv_heads: 8,
            d_kv: 64,
            d_ff: 25600,
            max_seq_len: 4096,
            ..Self::desk(vocab_size)
        }
    }

    /// Fills the special-token fields from a unified vocabulary.
    pub fn for_vocab(mut self, vocab: &crate::vocab::UnifiedVocab) -> Self {
        use crate::vocab::Special;
        self.vocab_size = vocab.total();
        self.ogt_id = Some(vocab.special(Special::Ogt));
        self.pad_id = Some(vocab.special(Special::Pad));
        self.new_token_start = vocab.first_new_token();
        self
    }

    pub fn group_size(&self) -> usize {
        self.n_q_heads / self.n_kv_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Config(m));
        if self.n_kv_heads == 0 || self.n_q_heads % self.n_kv_heads != 0 {
            return bad(format!(
                "query heads ({}) must be a multiple of key/value heads ({})",
                self.n_q_heads, self.n_kv_heads
            ));
        }
        if self.d_kv % 2 != 0 {
            return bad(format!("d_kv ({}) must be even for rotary embeddings", self.d_kv));
        }
        if self.n_layers == 0 || self.d_model == 0 || self.d_ff == 0 || self.vocab_size == 0 {
            return bad("layer count and widths must be positive".into());
        }
        if self.ogt_id.is_some_and(|o| o >= self.vocab_size) || self.pad_id.is_some_and(|p| p >= self.vocab_size) {
            return bad("special token ids must lie inside the vocabulary".into());
        }
        Ok(())
    }

    /// Parameter count of the backbone (embeddings, blocks, final norm, head).
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let q = self.n_q_heads * self.d_kv;
        let kv = self.n_kv_heads * self.d_kv;
        let norm = if self.norm == NormKind::Layer { 2 * d } else { d };
        let ffn = if self.ffn == FfnKind::SwiGlu { 3 * d * self.d_ff } else { 2 * d * self.d_ff };
        let block = 2 * norm + d * q + 2 * d * kv + q * d + ffn;
        2 * self.vocab_size * d + self.n_layers * block + norm
    }
}
