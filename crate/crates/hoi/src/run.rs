//! Run directory layout and training logs.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use hoi_core::tasks::StepLog;
use hoi_core::vqvae::EpochLog;

use crate::config::RunConfig;
use crate::dataset::write_json;
use crate::error::{HoiError, Result};

/// `<out>/<name>/{config.json, checkpoints/, logs/, samples/, reports/, data/}`.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(out: &Path, name: &str) -> Self {
        Self { root: out.join(name) }
    }

    /// Creates the directory tree and writes `config.json`.
    pub fn create(&self, cfg: &RunConfig) -> Result<()> {
        for d in ["checkpoints", "logs", "samples", "reports", "data"] {
            let p = self.root.join(d);
            fs::create_dir_all(&p).map_err(|e| HoiError::io(&p, e))?;
        }
        write_json(&self.config(), cfg)
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn data(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join("samples")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    /// `train.json` after a split, `manifest.json` otherwise.
    pub fn train_manifest(&self) -> PathBuf {
        let split = self.data().join("train.json");
        if split.exists() {
            split
        } else {
            self.data().join("manifest.json")
        }
    }

    pub fn test_manifest(&self) -> PathBuf {
        let split = self.data().join("test.json");
        if split.exists() {
            split
        } else {
            self.data().join("manifest.json")
        }
    }

    pub fn tokenizer(&self, modality: &str) -> PathBuf {
        self.checkpoints().join(format!("tokenizer_{modality}.hoit"))
    }

    pub fn vocab(&self) -> PathBuf {
        self.checkpoints().join("vocab.json")
    }

    /// `lm_stage1.hoit` or `lm_stage2_<task>.hoit`.
    pub fn lm(&self, stage: u8, task: Option<&str>) -> PathBuf {
        match task {
            Some(t) if stage == 2 => self.checkpoints().join(format!("lm_stage2_{t}.hoit")),
            _ => self.checkpoints().join(format!("lm_stage{stage}.hoit")),
        }
    }
}

/// Appends lines to a file, creating parents.
pub struct LineLog {
    file: fs::File,
    path: PathBuf,
}

impl LineLog {
    pub fn open(path: &Path, append: bool) -> Result<Self> {
        if let Some(d) = path.parent() {
            fs::create_dir_all(d).map_err(|e| HoiError::io(d, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| HoiError::io(path, e))?;
        Ok(Self { file, path: path.to_path_buf() })
    }

    pub fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.file, "{s}").map_err(|e| HoiError::io(&self.path, e))
    }
}

/// JSON-lines record of one LM optimizer step.
pub fn step_line(s: &StepLog) -> String {
    serde_json::json!({
        "step": s.step,
        "task": s.task.name(),
        "loss": s.loss,
        "lr": s.lr,
        "tokens_seen": s.tokens_seen,
    })
    .to_string()
}

pub const LOSS_CSV_HEADER: &str = "epoch,total,L_r,L_c,L_v,utilization";

pub fn loss_csv_row(e: &EpochLog) -> String {
    format!("{},{},{},{},{},{}", e.epoch, e.total, e.recon, e.commit, e.velocity, e.utilization)
}
