//! Two-stage adapter training: multi-task over random task draws, then
//! single-task fine-tuning.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{assemble, Task, TokenizedSample};
use crate::lm::{FfnKind, LmExample, TransformerModel, LORA_TARGETS};
use crate::numerics::{rng, AdamW, AdamWConfig, Real};
use crate::vocab::{Special, UnifiedVocab};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub rank: usize,
    pub alpha: f64,
    pub targets: Vec<String>,
    /// Cosine decay of the learning rate to zero over the run.
    pub cosine: bool,
}

impl StageConfig {
    pub fn stage1() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            lr: 5e-3,
            weight_decay: 0.0,
            rank: 8,
            alpha: 4.0,
            targets: LORA_TARGETS.iter().map(|s| String::from(*s)).collect(),
            cosine: true,
        }
    }

    /// Smaller rank, alpha and learning rate than stage 1, and a short run:
    /// the desk stage-1 model already fits its training set closely.
    pub fn stage2() -> Self {
        Self {
            epochs: 3,
            lr: 1e-4,
            rank: 4,
            alpha: 2.0,
            ..Self::stage1()
        }
    }
}

impl Default for StageConfig {
    fn default() -> Self {
        Self::stage1()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub task: Task,
    pub loss: f64,
    pub lr: f64,
    pub tokens_seen: u64,
}

/// Mean step loss per task.
pub fn per_task_mean(log: &[StepLog]) -> BTreeMap<Task, f64> {
    let mut acc: BTreeMap<Task, (f64, usize)> = BTreeMap::new();
    for s in log {
        let e = acc.entry(s.task).or_default();
        e.0 += s.loss;
        e.1 += 1;
    }
    acc.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect()
}

fn lm_example<T: Real>(s: &TokenizedSample, task: Task, vocab: &UnifiedVocab) -> Result<LmExample<T>> {
    Ok(assemble(s, task, vocab)?.to_lm(s.points.as_ref()))
}

/// Task drawn for every sample in one epoch of stage 1.
pub fn task_assignment(n: usize, seed: u64, epoch: usize) -> Vec<Task> {
    let r = &mut rng::stream(seed, 0x7A5C_0000 + epoch as u64);
    (0..n).map(|_| Task::ALL[rng::below(r, Task::ALL.len())]).collect()
}

struct Run<T> {
    opt: AdamW<T>,
    step: u64,
    tokens_seen: u64,
    log: Vec<StepLog>,
}

impl<T: Real> Run<T> {
    fn batch(
        &mut self,
        model: &mut TransformerModel<T>,
        batch: &[LmExample<T>],
        task: Task,
        epoch: usize,
        index: usize,
        on_step: &mut dyn FnMut(&StepLog),
    ) -> Result<()> {
        let loss = model.train_step(batch, &mut self.opt).map_err(|e| match e {
            Error::NonFiniteGradient { .. } => Error::NonFiniteLoss { epoch, batch: index },
            e => e,
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: index });
        }
        self.step += 1;
        self.tokens_seen += batch.iter().map(|e| e.tokens.len() as u64).sum::<u64>();
        let entry = StepLog {
            step: self.step,
            epoch,
            task,
            loss,
            lr: self.opt.config.lr,
            tokens_seen: self.tokens_seen,
        };
        on_step(&entry);
        self.log.push(entry);
        Ok(())
    }
}

fn train_stage<T: Real>(
    model: &mut TransformerModel<T>,
    data: &[TokenizedSample],
    vocab: &UnifiedVocab,
    cfg: &StageConfig,
    seed: u64,
    fixed: Option<Task>,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<Vec<StepLog>> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let targets: Vec<&str> = cfg
        .targets
        .iter()
        .map(String::as_str)
        .filter(|t| *t != "ffn.gate" || model.config.ffn == FfnKind::SwiGlu)
        .collect();
    model.attach_lora(&targets, cfg.rank, cfg.alpha, seed)?;
    let mut run = Run {
        opt: AdamW::new(AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        }),
        step: 0,
        tokens_seen: 0,
        log: Vec::new(),
    };
    for epoch in 0..cfg.epochs {
        let tasks = match fixed {
            Some(t) => alloc::vec![t; data.len()],
            None => task_assignment(data.len(), seed, epoch),
        };
        let mut order: Vec<usize> = (0..data.len()).collect();
        let r = &mut rng::stream(seed, 0x5A3F_0000 + epoch as u64);
        rng::shuffle(r, &mut order);
        // Same-task batches so every step carries a single task label.
        let mut by_task: BTreeMap<Task, Vec<usize>> = BTreeMap::new();
        for i in order {
            by_task.entry(tasks[i]).or_default().push(i);
        }
        let mut batches: Vec<(Task, Vec<usize>)> = Vec::new();
        for (t, idx) in by_task {
            batches.extend(idx.chunks(cfg.batch_size).map(|c| (t, c.to_vec())));
        }
        rng::shuffle(r, &mut batches);
        let n_batches = batches.len();
        for (bi, (task, idx)) in batches.into_iter().enumerate() {
            if cfg.cosine {
                let progress = (epoch as f64 + bi as f64 / n_batches as f64) / cfg.epochs as f64;
                run.opt.config.lr = cfg.lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress));
            }
            let batch = idx
                .iter()
                .map(|&i| lm_example(&data[i], task, vocab))
                .collect::<Result<Vec<_>>>()?;
            run.batch(model, &batch, task, epoch, bi, on_step)?;
        }
    }
    model.merge_lora();
    Ok(run.log)
}

/// Multi-task stage: attaches adapters, trains on a fresh uniform task
/// draw per sample every epoch, merges the adapters back.
pub fn stage1_train<T: Real>(
    model: &mut TransformerModel<T>,
    data: &[TokenizedSample],
    vocab: &UnifiedVocab,
    cfg: &StageConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<Vec<StepLog>> {
    train_stage(model, data, vocab, cfg, seed, None, on_step)
}

/// Single-task stage on merged stage-1 weights.
pub fn stage2_train<T: Real>(
    model: &mut TransformerModel<T>,
    data: &[TokenizedSample],
    vocab: &UnifiedVocab,
    task: Task,
    cfg: &StageConfig,
    seed: u64,
    on_step: &mut dyn FnMut(&StepLog),
) -> Result<Vec<StepLog>> {
    train_stage(model, data, vocab, cfg, seed, Some(task), on_step)
}

/// Mean target-token NLL of `task` over `data`.
pub fn evaluate_task_loss<T: Real>(model: &TransformerModel<T>, data: &[TokenizedSample], task: Task, vocab: &UnifiedVocab) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0);
    for s in data {
        let (l, c) = model.score(&lm_example(s, task, vocab)?)?;
        sum += l;
        count += c;
    }
    if count == 0 {
        return Err(Error::DegenerateBatch);
    }
    Ok(sum / count as f64)
}

/// Optional full-parameter warm-up on bare captions (`[BOS] words [EOS]`)
/// standing in for a pretrained text backbone. Returns the mean loss of
/// each epoch.
pub fn pretrain_text<T: Real>(
    model: &mut TransformerModel<T>,
    captions: &[Vec<usize>],
    vocab: &UnifiedVocab,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let (bos, eos) = (vocab.special(Special::Bos), vocab.special(Special::Eos));
    let examples: Vec<LmExample<T>> = captions
        .iter()
        .map(|c| {
            let mut tokens = alloc::vec![bos];
            tokens.extend_from_slice(c);
            tokens.push(eos);
            let mask = (0..tokens.len()).map(|i| i > 0).collect();
            LmExample { tokens, mask, points: None }
        })
        .collect();
    let mut opt = AdamW::new(AdamWConfig { lr, ..Default::default() });
    let mut out = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        rng::shuffle(&mut rng::stream(seed, 0x7E57_0000 + epoch as u64), &mut order);
        let (mut sum, mut n) = (0.0, 0);
        for (bi, chunk) in order.chunks(batch_size).enumerate() {
            let batch: Vec<LmExample<T>> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let loss = model.train_step(&batch, &mut opt)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            sum += loss;
            n += 1;
        }
        out.push(if n > 0 { sum / n as f64 } else { 0.0 });
    }
    Ok(out)
}
