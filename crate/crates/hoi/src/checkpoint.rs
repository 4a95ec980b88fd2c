//! Model checkpoints: `HOIT` tensors plus a JSON sidecar with the
//! configuration needed to rebuild the model.

use std::path::{Path, PathBuf};

use hoi_core::geom::GeomEncoderConfig;
use hoi_core::lm::{TransformerConfig, TransformerModel};
use hoi_core::numerics::{Module, Real};
use hoi_core::vocab::UnifiedVocab;
use hoi_core::vqvae::{MotionTokenizer, TokenizerConfig};
use serde::{Deserialize, Serialize};

use crate::dataset::{read_json, write_json, VocabFile};
use crate::error::{HoiError, Result};
use crate::formats::{read_checkpoint, write_checkpoint};

pub fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerMeta {
    pub config: TokenizerConfig,
    pub epoch: usize,
    pub step: u64,
}

pub fn save_tokenizer<T: Real>(path: &Path, tok: &MotionTokenizer<T>, epoch: usize, step: u64) -> Result<()> {
    write_checkpoint(path, &tok.checkpoint())?;
    write_json(
        &sidecar(path),
        &TokenizerMeta {
            config: tok.config.clone(),
            epoch,
            step,
        },
    )
}

pub fn load_tokenizer<T: Real>(path: &Path) -> Result<(MotionTokenizer<T>, TokenizerMeta)> {
    let meta: TokenizerMeta = read_json(&sidecar(path))?;
    let mut tok = MotionTokenizer::new(meta.config.clone(), 0)?;
    tok.load_checkpoint(&read_checkpoint(path)?)?;
    Ok((tok, meta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmMeta {
    pub config: TransformerConfig,
    pub geom: GeomEncoderConfig,
    pub vocab_hash: String,
    pub stage: u8,
    pub task: Option<String>,
}

pub fn save_lm<T: Real>(path: &Path, model: &TransformerModel<T>, vocab: &UnifiedVocab, stage: u8, task: Option<&str>) -> Result<()> {
    if model.has_adapters() {
        return Err(HoiError::Config("merge adapters before saving a checkpoint".into()));
    }
    write_checkpoint(path, &model.state())?;
    write_json(
        &sidecar(path),
        &LmMeta {
            config: model.config.clone(),
            geom: model.geom.config.clone(),
            vocab_hash: VocabFile::of(vocab).hash(),
            stage,
            task: task.map(str::to_owned),
        },
    )
}

/// Loads a model, rejecting it when it was trained against another vocabulary.
pub fn load_lm<T: Real>(path: &Path, vocab: &UnifiedVocab) -> Result<(TransformerModel<T>, LmMeta)> {
    let meta: LmMeta = read_json(&sidecar(path))?;
    let want = VocabFile::of(vocab).hash();
    if meta.vocab_hash != want {
        return Err(HoiError::Config(format!(
            "{}: checkpoint vocabulary hash {} does not match {}",
            path.display(),
            meta.vocab_hash,
            want
        )));
    }
    let mut model = TransformerModel::new(meta.config.clone(), meta.geom.clone(), 0)?;
    model.load_state(&read_checkpoint(path)?)?;
    Ok((model, meta))
}
