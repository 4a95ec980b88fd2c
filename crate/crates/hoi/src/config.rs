//! JSON run configuration.

use std::path::Path;

use hoi_core::geom::GeomEncoderConfig;
use hoi_core::lm::{DecodeParams, TransformerConfig};
use hoi_core::tasks::StageConfig;
use hoi_core::vqvae::TokenizerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HoiError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n: usize,
    pub frames: usize,
    pub n_points: usize,
    /// Fraction of samples held out when splitting.
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n: 500,
            frames: 32,
            n_points: 64,
            test_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenizerTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TokenizerTraining {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 2e-4,
        }
    }
}

/// Optional full-parameter caption warm-up before stage 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 0,
            batch_size: 16,
            lr: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub contact_threshold: f64,
    /// Candidate captions per retrieval query (true caption included).
    pub r_precision_pool: usize,
    pub diversity_pairs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            contact_threshold: hoi_core::data::CONTACT_THRESHOLD,
            r_precision_pool: 8,
            diversity_pairs: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub data: DataConfig,
    pub human: TokenizerConfig,
    pub object: TokenizerConfig,
    pub tokenizer_training: TokenizerTraining,
    /// Vocabulary-dependent fields are filled in when the model is built.
    pub lm: TransformerConfig,
    pub geom: GeomEncoderConfig,
    pub pretrain: PretrainConfig,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub decode: DecodeParams,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lm = TransformerConfig::desk(0);
        Self {
            name: "desk".into(),
            seed: 0,
            data: DataConfig::default(),
            human: TokenizerConfig::human_desk(),
            object: TokenizerConfig::object_desk(),
            tokenizer_training: TokenizerTraining::default(),
            geom: GeomEncoderConfig::desk(lm.d_model),
            lm,
            pretrain: PretrainConfig::default(),
            stage1: StageConfig::stage1(),
            stage2: StageConfig::stage2(),
            decode: DecodeParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HoiError::io(path, e))?;
        let given: serde_json::Value = serde_json::from_str(&text).map_err(|e| HoiError::json(path, e))?;
        // Nested sections are overlaid key by key on the built-in defaults, so
        // a partial "stage2" keeps the stage-2 values it does not mention.
        let mut merged = serde_json::to_value(RunConfig::default()).expect("config serializes");
        overlay(&mut merged, given);
        let cfg: RunConfig = serde_json::from_value(merged).map_err(|e| HoiError::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HoiError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("run name {:?} must be a plain directory name", self.name));
        }
        if self.data.n == 0 || self.data.frames < 8 || self.data.n_points < 4 {
            return bad("data needs n >= 1, frames >= 8, n_points >= 4".into());
        }
        if !(0.0..1.0).contains(&self.data.test_fraction) {
            return bad("test_fraction must lie in [0, 1)".into());
        }
        self.human.validate()?;
        self.object.validate()?;
        if self.human.input_dim != hoi_core::data::joint::COUNT * 3 || self.object.input_dim != hoi_core::data::OBJECT_DIM {
            return bad("tokenizer input dims must match the synthetic layout (24 human, 6 object)".into());
        }
        if self.geom.d_model != self.lm.d_model {
            return bad(format!("geometry width {} differs from model width {}", self.geom.d_model, self.lm.d_model));
        }
        if self.tokenizer_training.batch_size == 0 || self.stage1.batch_size == 0 || self.stage2.batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.eval.r_precision_pool < 2 {
            return bad("r_precision_pool must be at least 2".into());
        }
        let mut lm = self.lm.clone();
        lm.vocab_size = lm.vocab_size.max(1);
        lm.validate()?;
        Ok(())
    }
}

fn overlay(base: &mut serde_json::Value, top: serde_json::Value) {
    match (base, top) {
        (serde_json::Value::Object(b), serde_json::Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
