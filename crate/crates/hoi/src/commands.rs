//! Subcommand implementations. Every command is a function of the run
//! configuration, its input files and the seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hoi_core::data::{
    generate_synthetic_dataset, make_pointcloud, transform_points, HoiSample, HumanMotion, JointLayout, ObjectMotion, Template,
    TemplateSet,
};
use hoi_core::lm::{DecodeParams, TransformerModel};
use hoi_core::metrics::{
    chamfer, contact_flags, diversity, e_c, e_v2v_per_frame, frechet_distance, joint_errors, pooled_latents, r_precision_surrogate,
    ContactStats, MetricReport,
};
use hoi_core::numerics::{rng, Real, Tensor};
use hoi_core::tasks::{
    default_words, evaluate_task_loss, pretrain_text, sample_task, stage1_train, stage2_train, Conditions, Generated, Task,
    TokenizedSample,
};
use hoi_core::vocab::{Modality, UnifiedVocab};
use hoi_core::vqvae::{probe_utilization, EpochLog, MotionTokenizer, Trainer};
use hoi_core::numerics::AdamWConfig;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_lm, load_tokenizer, save_lm, save_tokenizer};
use crate::config::RunConfig;
use crate::dataset::{load_dataset, read_vocab, write_dataset, write_json, write_vocab, DatasetSummary};
use crate::error::{HoiError, Result};
use crate::formats::{read_motion, read_points, write_bytes, write_motion};
use crate::plot::{line_chart, Series};
use crate::run::{loss_csv_row, step_line, LineLog, RunDir, LOSS_CSV_HEADER};

/// Resolved configuration and run directory.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub cfg: RunConfig,
    pub run: RunDir,
}

impl Ctx {
    /// Reads `config` (or the defaults), applies the seed override and
    /// places the run under `out`.
    pub fn new(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<Self> {
        let mut cfg = match config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let run = RunDir::new(out, &cfg.name);
        Ok(Self { cfg, run })
    }

    pub fn with_config(cfg: RunConfig, out: &Path) -> Result<Self> {
        cfg.validate()?;
        let run = RunDir::new(out, &cfg.name);
        Ok(Self { cfg, run })
    }

    fn train_data(&self) -> Result<Vec<HoiSample>> {
        let m = self.run.train_manifest();
        if !m.exists() {
            return Err(HoiError::Config(format!("missing dataset {}; run gen-data first", m.display())));
        }
        load_dataset(&m)
    }

    fn tokenizers<T: Real>(&self) -> Result<(MotionTokenizer<T>, MotionTokenizer<T>)> {
        let load = |m: &str| -> Result<MotionTokenizer<T>> {
            let p = self.run.tokenizer(m);
            if !p.exists() {
                return Err(HoiError::Config(format!("missing {}; run train-tokenizer {m} first", p.display())));
            }
            Ok(load_tokenizer(&p)?.0)
        };
        Ok((load("human")?, load("object")?))
    }

    fn vocab<T: Real>(&self, human: &MotionTokenizer<T>, object: &MotionTokenizer<T>) -> Result<UnifiedVocab> {
        Ok(UnifiedVocab::build(&default_words(), human.codebook.size(), object.codebook.size())?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionKind {
    Human,
    Object,
}

impl MotionKind {
    pub fn name(self) -> &'static str {
        match self {
            MotionKind::Human => "human",
            MotionKind::Object => "object",
        }
    }
}

// ---------------------------------------------------------------- gen-data

/// Generates the synthetic dataset; with `split`, writes disjoint
/// `train.json` / `test.json`, otherwise `manifest.json`.
pub fn gen_data(ctx: &Ctx, split: bool) -> Result<DatasetSummary> {
    let c = &ctx.cfg;
    ctx.run.create(c)?;
    let samples = generate_synthetic_dataset(c.seed, c.data.n, c.data.frames, c.data.n_points, &TemplateSet::all())?;
    let dir = ctx.run.data();
    let mut splits = BTreeMap::new();
    if split {
        let n_test = ((c.data.n as f64 * c.data.test_fraction).round() as usize).clamp(1, c.data.n.saturating_sub(1).max(1));
        let mut order: Vec<usize> = (0..samples.len()).collect();
        rng::shuffle(&mut rng::stream(c.seed, 0x5EE7), &mut order);
        let mut is_test = vec![false; samples.len()];
        for &i in &order[..n_test.min(samples.len())] {
            is_test[i] = true;
        }
        let (test, train): (Vec<_>, Vec<_>) = samples.iter().cloned().zip(&is_test).partition(|(_, &t)| t);
        let train: Vec<HoiSample> = train.into_iter().map(|(s, _)| s).collect();
        let test: Vec<HoiSample> = test.into_iter().map(|(s, _)| s).collect();
        write_dataset(&dir, "train.json", &train)?;
        write_dataset(&dir, "test.json", &test)?;
        splits.insert("train".into(), train.len());
        splits.insert("test".into(), test.len());
    } else {
        write_dataset(&dir, "manifest.json", &samples)?;
        splits.insert("all".into(), samples.len());
    }
    let summary = DatasetSummary::of(&samples, splits);
    write_json(&dir.join("dataset.summary.json"), &summary)?;
    info!("wrote {} samples to {}", samples.len(), dir.display());
    Ok(summary)
}

// --------------------------------------------------------- train-tokenizer

fn motions<T: Real>(samples: &[HoiSample], kind: MotionKind) -> Vec<Tensor<T>> {
    samples
        .iter()
        .map(|s| match kind {
            MotionKind::Human => s.human.frames.cast(),
            MotionKind::Object => s.object.frames.cast(),
        })
        .collect()
}

/// Trains (or with `resume`, continues) one tokenizer, appending a row per
/// epoch to `logs/tokenizer_<kind>/losses.csv`.
pub fn train_tokenizer<T: Real>(ctx: &Ctx, kind: MotionKind, resume: bool) -> Result<Vec<EpochLog>> {
    let c = &ctx.cfg;
    let data = motions::<T>(&ctx.train_data()?, kind);
    let ckpt = ctx.run.tokenizer(kind.name());
    let csv = ctx.run.logs().join(format!("tokenizer_{}", kind.name())).join("losses.csv");
    let optim = AdamWConfig {
        lr: c.tokenizer_training.lr,
        ..Default::default()
    };
    let seed = c.seed ^ if kind == MotionKind::Human { 0x4855 } else { 0x4F42 };
    let (mut trainer, mut log) = if resume {
        if !ckpt.exists() {
            return Err(HoiError::Config(format!("cannot resume: {} does not exist", ckpt.display())));
        }
        let (tok, meta) = load_tokenizer::<T>(&ckpt)?;
        let t = Trainer::new(tok, optim, c.tokenizer_training.batch_size, seed).resume(meta.epoch, meta.step);
        (t, LineLog::open(&csv, true)?)
    } else {
        let cfg = match kind {
            MotionKind::Human => c.human.clone(),
            MotionKind::Object => c.object.clone(),
        };
        let mut tok = MotionTokenizer::new(cfg, seed)?;
        tok.fit_normalization(&data);
        let mut l = LineLog::open(&csv, false)?;
        l.line(LOSS_CSV_HEADER)?;
        (Trainer::new(tok, optim, c.tokenizer_training.batch_size, seed), l)
    };
    let mut out = Vec::new();
    for _ in 0..c.tokenizer_training.epochs {
        let e = trainer.train_epoch(&data)?;
        info!(
            "{} epoch {} step {} loss {:.5} util {:.3} resets {}",
            kind.name(),
            e.epoch,
            e.step,
            e.total,
            e.utilization,
            e.resets
        );
        log.line(&loss_csv_row(&e))?;
        out.push(e);
    }
    save_tokenizer(&ckpt, &trainer.tokenizer, trainer.epoch, trainer.step)?;
    Ok(out)
}

// ---------------------------------------------------------------- train-lm

pub fn tokenize_all<T: Real>(
    samples: &[HoiSample],
    human: &MotionTokenizer<T>,
    object: &MotionTokenizer<T>,
    vocab: &UnifiedVocab,
) -> Result<Vec<TokenizedSample>> {
    samples
        .iter()
        .map(|s| TokenizedSample::from_sample(s, human, object, vocab).map_err(Into::into))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub task: String,
    /// Held-out task loss of the stage-1 weights.
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub checkpoint: PathBuf,
    pub steps: usize,
    pub stage2: Option<Stage2Report>,
}

/// Stage 1 trains all tasks from a fresh model; stage 2 fine-tunes the
/// stage-1 checkpoint on `task`.
pub fn train_lm<T: Real>(ctx: &Ctx, stage: u8, task: Option<Task>) -> Result<LmOutcome> {
    let c = &ctx.cfg;
    let (ht, ot) = ctx.tokenizers::<T>()?;
    let vocab = ctx.vocab(&ht, &ot)?;
    write_vocab(&ctx.run.vocab(), &vocab)?;
    let train = tokenize_all(&ctx.train_data()?, &ht, &ot, &vocab)?;
    match (stage, task) {
        (1, _) => {
            let mut model = TransformerModel::<T>::new(c.lm.clone().for_vocab(&vocab), c.geom.clone(), c.seed)?;
            if c.pretrain.epochs > 0 {
                let captions: Vec<Vec<usize>> = train.iter().map(|s| s.caption.clone()).collect();
                let losses = pretrain_text(&mut model, &captions, &vocab, c.pretrain.epochs, c.pretrain.batch_size, c.pretrain.lr, c.seed)?;
                info!("caption warm-up losses {losses:?}");
            }
            let mut log = LineLog::open(&ctx.run.logs().join("lm_stage1.jsonl"), false)?;
            let mut io_err = None;
            let steps = stage1_train(&mut model, &train, &vocab, &c.stage1, c.seed, &mut |s| {
                if let Err(e) = log.line(&step_line(s)) {
                    io_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_err {
                return Err(e);
            }
            let path = ctx.run.lm(1, None);
            save_lm(&path, &model, &vocab, 1, None)?;
            info!("stage 1: {} steps, saved {}", steps.len(), path.display());
            Ok(LmOutcome {
                checkpoint: path,
                steps: steps.len(),
                stage2: None,
            })
        }
        (2, Some(task)) => {
            let base = ctx.run.lm(1, None);
            if !base.exists() {
                return Err(HoiError::Config(format!("stage 2 needs {}; run train-lm --stage 1 first", base.display())));
            }
            let (mut model, _) = load_lm::<T>(&base, &vocab)?;
            let held_out = held_out_set(ctx, &ht, &ot, &vocab)?;
            let before = evaluate_task_loss(&model, &held_out, task, &vocab)?;
            let mut log = LineLog::open(&ctx.run.logs().join(format!("lm_stage2_{}.jsonl", task.name())), false)?;
            let mut io_err = None;
            let steps = stage2_train(&mut model, &train, &vocab, task, &c.stage2, c.seed, &mut |s| {
                if let Err(e) = log.line(&step_line(s)) {
                    io_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = io_err {
                return Err(e);
            }
            let after = evaluate_task_loss(&model, &held_out, task, &vocab)?;
            let report = Stage2Report {
                task: task.name().into(),
                before,
                after,
            };
            write_json(&ctx.run.reports().join(format!("stage2_{}.json", task.name())), &report)?;
            let path = ctx.run.lm(2, Some(task.name()));
            save_lm(&path, &model, &vocab, 2, Some(task.name()))?;
            info!("stage 2 {}: held-out loss {before:.4} -> {after:.4}", task.name());
            Ok(LmOutcome {
                checkpoint: path,
                steps: steps.len(),
                stage2: Some(report),
            })
        }
        (2, None) => Err(HoiError::Usage("train-lm --stage 2 requires --task".into())),
        (s, _) => Err(HoiError::Usage(format!("unknown stage {s}; expected 1 or 2"))),
    }
}

fn held_out_set<T: Real>(ctx: &Ctx, ht: &MotionTokenizer<T>, ot: &MotionTokenizer<T>, vocab: &UnifiedVocab) -> Result<Vec<TokenizedSample>> {
    let m = ctx.run.test_manifest();
    if !m.exists() {
        return Err(HoiError::Config(format!("missing held-out manifest {}", m.display())));
    }
    tokenize_all(&load_dataset(&m)?, ht, ot, vocab)
}

fn default_checkpoint(ctx: &Ctx, task: Task) -> PathBuf {
    let s2 = ctx.run.lm(2, Some(task.name()));
    if s2.exists() {
        s2
    } else {
        ctx.run.lm(1, None)
    }
}

// ------------------------------------------------------------------ sample

/// Condition inputs of the `sample` command.
#[derive(Clone, Debug, Default)]
pub struct SampleInputs {
    pub caption: Option<String>,
    pub human: Option<PathBuf>,
    pub object: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Clip malformed output to its first well-formed span instead of failing.
    pub repair: bool,
}

fn flag(m: Modality) -> &'static str {
    match m {
        Modality::Text => "--caption",
        Modality::Human => "--human",
        Modality::Object => "--object",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub task: String,
    pub checkpoint: String,
    pub seed: u64,
    pub decode: DecodeParams,
    pub source_caption: Option<String>,
    pub tokens: Vec<usize>,
    pub caption: Option<String>,
    pub human_frames: Option<usize>,
    pub object_frames: Option<usize>,
    pub elapsed_ms: u128,
}

/// Generates the task's targets and writes them with a `generation.json`.
pub fn sample<T: Real>(ctx: &Ctx, task: Task, inputs: &SampleInputs, decode: &DecodeParams) -> Result<(PathBuf, Generated)> {
    let given: Vec<Modality> = [
        (Modality::Text, inputs.caption.is_some()),
        (Modality::Human, inputs.human.is_some()),
        (Modality::Object, inputs.object.is_some()),
    ]
    .into_iter()
    .filter_map(|(m, g)| g.then_some(m))
    .collect();
    let need = task.conditions();
    let template = inputs.caption.as_deref().and_then(Template::parse);
    if given != need || (inputs.points.is_none() && template.is_none()) {
        let mut req: Vec<&str> = need.iter().map(|&m| flag(m)).collect();
        req.push("--points (optional with a template caption)");
        let got: Vec<&str> = given.iter().map(|&m| flag(m)).collect();
        return Err(HoiError::Usage(format!(
            "task {} requires {}; got {}",
            task.name(),
            req.join(", "),
            if got.is_empty() { "none".to_string() } else { got.join(", ") }
        )));
    }
    let (ht, ot) = ctx.tokenizers::<T>()?;
    let vocab = match ctx.run.vocab() {
        p if p.exists() => read_vocab(&p)?,
        _ => ctx.vocab(&ht, &ot)?,
    };
    let ckpt = inputs.checkpoint.clone().unwrap_or_else(|| default_checkpoint(ctx, task));
    let (model, _) = load_lm::<T>(&ckpt, &vocab)?;
    let points = match (&inputs.points, template) {
        (Some(p), _) => read_points(p)?,
        (None, Some(t)) => {
            let n = t.noun();
            make_pointcloud(n.shape, ctx.cfg.data.n_points, ctx.cfg.seed, n.extent).points
        }
        (None, None) => unreachable!("checked above"),
    };
    let tokens_of = |p: &Path, tok: &MotionTokenizer<T>| -> Result<Vec<usize>> { Ok(tok.tokenize(&read_motion(p)?.cast())?.indices) };
    let cond = Conditions {
        caption: inputs.caption.as_deref().map(|c| vocab.encode_caption(c)),
        human: inputs.human.as_deref().map(|p| tokens_of(p, &ht)).transpose()?,
        object: inputs.object.as_deref().map(|p| tokens_of(p, &ot)).transpose()?,
        points: Some(hoi_core::geom::points_tensor(&points)?),
    };
    let start = Instant::now();
    let g = sample_task(&model, &ht, &ot, &vocab, task, &cond, decode, ctx.cfg.seed, inputs.repair)?;
    let elapsed_ms = start.elapsed().as_millis();
    let dir = inputs.out.clone().unwrap_or_else(|| ctx.run.samples().join(task.name()));
    if let Some(h) = &g.human {
        write_motion(&dir.join("human.hoim"), h)?;
    }
    if let Some(o) = &g.object {
        write_motion(&dir.join("object.hoim"), o)?;
    }
    if let Some(c) = &g.caption {
        write_bytes(&dir.join("caption.txt"), format!("{c}\n").as_bytes())?;
    }
    let record = GenerationRecord {
        task: task.name().into(),
        checkpoint: ckpt.display().to_string(),
        seed: ctx.cfg.seed,
        decode: decode.clone(),
        source_caption: inputs.caption.clone(),
        tokens: g.tokens.clone(),
        caption: g.caption.clone(),
        human_frames: g.human.as_ref().map(Tensor::rows),
        object_frames: g.object.as_ref().map(Tensor::rows),
        elapsed_ms,
    };
    write_json(&dir.join("generation.json"), &record)?;
    Ok((dir, g))
}

// -------------------------------------------------------------------- eval

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricFamily {
    Contact,
    Joints,
    Object,
    Fid,
    Diversity,
    RPrecision,
}

impl MetricFamily {
    pub const ALL: [MetricFamily; 6] = [
        MetricFamily::Contact,
        MetricFamily::Joints,
        MetricFamily::Object,
        MetricFamily::Fid,
        MetricFamily::Diversity,
        MetricFamily::RPrecision,
    ];

    pub fn compatible(self, task: Task) -> bool {
        let t = task.targets();
        match self {
            MetricFamily::Contact => t.contains(&Modality::Human) || t.contains(&Modality::Object),
            MetricFamily::Joints | MetricFamily::Fid | MetricFamily::Diversity => t.contains(&Modality::Human),
            MetricFamily::Object => t.contains(&Modality::Object),
            MetricFamily::RPrecision => task == Task::T2hoi,
        }
    }
}

/// Per-sample record in `per_sample.jsonl`; raw counts allow exact
/// re-aggregation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub contact: Option<ContactStats>,
    pub hand_jpe_cm: Option<f64>,
    pub mpjpe_cm: Option<f64>,
    pub e_v2v: Option<f64>,
    pub e_c: Option<f64>,
    pub e_ch: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// `None` selects every family compatible with the task.
    pub metrics: Option<Vec<MetricFamily>>,
    pub plot: bool,
    pub per_frame: bool,
}

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    pub report: MetricReport,
    pub samples: Vec<SampleMetrics>,
    pub dir: PathBuf,
}

/// Repeats the last frame or truncates so the motion has `len` frames.
pub fn fit_length(t: &Tensor<f32>, len: usize) -> Tensor<f32> {
    let cols = t.cols();
    Tensor::from_fn([len, cols], |i| {
        let (r, c) = (i / cols, i % cols);
        t.row(r.min(t.rows() - 1))[c]
    })
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn eval<T: Real>(ctx: &Ctx, task: Task, opts: &EvalOptions) -> Result<EvalOutcome> {
    let families: Vec<MetricFamily> = match &opts.metrics {
        Some(req) => {
            let bad: Vec<String> = req.iter().filter(|f| !f.compatible(task)).map(|f| format!("{f:?}")).collect();
            if !bad.is_empty() {
                return Err(HoiError::Usage(format!("metrics {} do not apply to task {}", bad.join(", "), task.name())));
            }
            req.clone()
        }
        None => MetricFamily::ALL.into_iter().filter(|f| f.compatible(task)).collect(),
    };
    let has = |f: MetricFamily| families.contains(&f);
    let c = &ctx.cfg;
    let (ht, ot) = ctx.tokenizers::<T>()?;
    let vocab = match ctx.run.vocab() {
        p if p.exists() => read_vocab(&p)?,
        _ => ctx.vocab(&ht, &ot)?,
    };
    let ckpt = opts.checkpoint.clone().unwrap_or_else(|| default_checkpoint(ctx, task));
    let (model, _) = load_lm::<T>(&ckpt, &vocab)?;
    let manifest = opts.manifest.clone().unwrap_or_else(|| ctx.run.test_manifest());
    let data = load_dataset(&manifest)?;
    let tokenized = tokenize_all(&data, &ht, &ot, &vocab)?;
    let targets = task.targets();
    let gen_h = targets.contains(&Modality::Human);
    let gen_o = targets.contains(&Modality::Object);
    let layout = JointLayout::synthetic();

    let dir = ctx.run.reports().join(task.name());
    let mut per_sample = LineLog::open(&dir.join("per_sample.jsonl"), false)?;
    let mut per_frame = if opts.per_frame {
        Some(LineLog::open(&dir.join("per_frame.jsonl"), false)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(data.len());
    let mut contact = ContactStats {
        threshold: c.eval.contact_threshold,
        ..Default::default()
    };
    let (mut feat_gen, mut feat_gt) = (Vec::new(), Vec::new());
    for (i, (s, tk)) in data.iter().zip(&tokenized).enumerate() {
        let cond = Conditions {
            caption: task.conditions().contains(&Modality::Text).then(|| tk.caption.clone()),
            human: task.conditions().contains(&Modality::Human).then(|| tk.human.indices.clone()),
            object: task.conditions().contains(&Modality::Object).then(|| tk.object.indices.clone()),
            points: tk.points.clone(),
        };
        let mut row = SampleMetrics {
            id: s.id.clone(),
            ..Default::default()
        };
        let g = match sample_task(&model, &ht, &ot, &vocab, task, &cond, &c.decode, c.seed.wrapping_add(i as u64), false) {
            Ok(g) => g,
            Err(e) => {
                warn!("{}: {e}", s.id);
                row.error = Some(e.to_string());
                per_sample.line(&serde_json::to_string(&row).expect("row serializes"))?;
                rows.push(row);
                continue;
            }
        };
        let l = s.len();
        let human = match (&g.human, gen_h) {
            (Some(h), true) => HumanMotion::new(fit_length(h, l), layout)?,
            _ => s.human.clone(),
        };
        let object = match (&g.object, gen_o) {
            (Some(o), true) => ObjectMotion::new(fit_length(o, l))?,
            _ => s.object.clone(),
        };
        if has(MetricFamily::Contact) {
            let world = |o: &ObjectMotion| -> Vec<Vec<[f32; 3]>> { o.poses().iter().map(|p| transform_points(&s.points.points, p)).collect() };
            let pred = contact_flags(&human.hands(), &world(&object), c.eval.contact_threshold)?;
            let gt = contact_flags(&s.human.hands(), &world(&s.object), c.eval.contact_threshold)?;
            let st = ContactStats::from_flags(&pred, &gt, c.eval.contact_threshold)?;
            contact.merge(&st);
            row.contact = Some(st);
        }
        if has(MetricFamily::Joints) {
            let (h, m) = joint_errors(&human.joints(), &s.human.joints(), &[layout.left_hand, layout.right_hand])?;
            row.hand_jpe_cm = Some(h);
            row.mpjpe_cm = Some(m);
        }
        if has(MetricFamily::Object) {
            let (pp, gp) = (object.poses(), s.object.poses());
            let series = e_v2v_per_frame(&pp, &gp, &s.points.points)?;
            row.e_v2v = mean(series.iter().copied());
            row.e_c = Some(e_c(&pp, &gp)?);
            let ch: Vec<f64> = pp
                .iter()
                .zip(&gp)
                .map(|(a, b)| chamfer(&transform_points(&s.points.points, a), &transform_points(&s.points.points, b)))
                .collect::<std::result::Result<_, _>>()?;
            row.e_ch = mean(ch.into_iter());
            if let Some(pf) = per_frame.as_mut() {
                pf.line(&serde_json::json!({ "id": s.id, "e_v2v": series }).to_string())?;
            }
        }
        if has(MetricFamily::Fid) || has(MetricFamily::Diversity) {
            feat_gen.push(pooled_latents(&ht, &human.frames)?);
            feat_gt.push(pooled_latents(&ht, &s.human.frames)?);
        }
        per_sample.line(&serde_json::to_string(&row).expect("row serializes"))?;
        rows.push(row);
    }

    let mut report = MetricReport::default();
    let ok: Vec<&SampleMetrics> = rows.iter().filter(|r| r.error.is_none()).collect();
    if has(MetricFamily::Contact) && contact.frames() > 0 {
        report.set_contact(&contact);
    }
    if has(MetricFamily::Joints) {
        report.hand_jpe_cm = mean(ok.iter().filter_map(|r| r.hand_jpe_cm));
        report.mpjpe_cm = mean(ok.iter().filter_map(|r| r.mpjpe_cm));
    }
    if has(MetricFamily::Object) {
        report.e_v2v = mean(ok.iter().filter_map(|r| r.e_v2v));
        report.e_c = mean(ok.iter().filter_map(|r| r.e_c));
        report.e_ch = mean(ok.iter().filter_map(|r| r.e_ch));
    }
    if has(MetricFamily::Fid) && !feat_gen.is_empty() {
        report.fid = Some(frechet_distance(&feat_gen, &feat_gt)?);
    }
    if has(MetricFamily::Diversity) && feat_gen.len() >= 2 {
        report.diversity = Some(diversity(&feat_gen, c.eval.diversity_pairs, c.seed));
    }
    if has(MetricFamily::RPrecision) {
        let pool: Vec<Vec<usize>> = tokenized.iter().map(|t| t.caption.clone()).collect();
        let b = c.eval.r_precision_pool;
        let ks: Vec<usize> = [1, 2, 3].into_iter().filter(|&k| k <= b).collect();
        match r_precision_surrogate(&model, &vocab, &tokenized, &pool, b, &ks, c.seed) {
            Ok(r) => {
                report.r_precision_top1 = r.first().copied();
                report.r_precision_top2 = r.get(1).copied();
                report.r_precision_top3 = r.get(2).copied();
            }
            Err(e) if opts.metrics.is_none() => warn!("skipping retrieval precision: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    write_json(&dir.join("report.json"), &report)?;
    write_bytes(&dir.join("report.txt"), report.table().as_bytes())?;
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({
            "task": task.name(),
            "checkpoint": ckpt.display().to_string(),
            "manifest": manifest.display().to_string(),
            "samples": rows.len(),
            "failed": rows.len() - ok.len(),
            "metrics": families,
        }),
    )?;
    if opts.plot {
        write_plots(ctx, &dir.join("plots"), &families, &rows)?;
    }
    Ok(EvalOutcome { report, samples: rows, dir })
}

/// One SVG per metric family plus training-loss charts when logs exist.
fn write_plots(ctx: &Ctx, dir: &Path, families: &[MetricFamily], rows: &[SampleMetrics]) -> Result<()> {
    let ok: Vec<&SampleMetrics> = rows.iter().filter(|r| r.error.is_none()).collect();
    let col = |f: fn(&SampleMetrics) -> Option<f64>| ok.iter().map(|r| f(r).unwrap_or(f64::NAN)).collect::<Vec<_>>();
    let mut charts: Vec<(String, String)> = Vec::new();
    for f in families {
        let svg = match f {
            MetricFamily::Contact => line_chart(
                "contact per sample",
                "sample",
                &[
                    Series::new("C_acc", col(|r| r.contact.map(|c| c.accuracy()))),
                    Series::new("C_prec", col(|r| r.contact.map(|c| c.precision()))),
                    Series::new("C_rec", col(|r| r.contact.map(|c| c.recall()))),
                ],
            ),
            MetricFamily::Joints => line_chart(
                "joint errors per sample (cm)",
                "sample",
                &[Series::new("MPJPE", col(|r| r.mpjpe_cm)), Series::new("HandJPE", col(|r| r.hand_jpe_cm))],
            ),
            MetricFamily::Object => line_chart(
                "object errors per sample",
                "sample",
                &[
                    Series::new("E_v2v", col(|r| r.e_v2v)),
                    Series::new("E_c", col(|r| r.e_c)),
                    Series::new("E_ch", col(|r| r.e_ch)),
                ],
            ),
            _ => continue,
        };
        charts.push((format!("{f:?}").to_lowercase(), svg));
    }
    let mut loss_series = Vec::new();
    for kind in ["human", "object"] {
        let csv = ctx.run.logs().join(format!("tokenizer_{kind}")).join("losses.csv");
        if let Ok(text) = std::fs::read_to_string(&csv) {
            let ys = text.lines().skip(1).filter_map(|l| l.split(',').nth(1)?.parse::<f64>().ok());
            loss_series.push(Series::new(format!("tokenizer {kind}"), ys));
        }
    }
    if !loss_series.is_empty() {
        charts.push(("tokenizer_losses".into(), line_chart("tokenizer loss", "epoch", &loss_series)));
    }
    if let Ok(text) = std::fs::read_to_string(ctx.run.logs().join("lm_stage1.jsonl")) {
        let ys = text
            .lines()
            .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok()?.get("loss")?.as_f64());
        charts.push(("lm_losses".into(), line_chart("stage-1 LM loss", "step", &[Series::new("loss", ys)])));
    }
    for (name, svg) in charts {
        write_bytes(&dir.join(format!("{name}.svg")), svg.as_bytes())?;
    }
    Ok(())
}

// -------------------------------------------------------- inspect-codebook

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodebookReport {
    pub modality: MotionKind,
    pub size: usize,
    pub dim: usize,
    pub utilization: f64,
    pub counts: Vec<usize>,
    pub dead: Vec<usize>,
    pub ema_counts: Vec<f64>,
}

pub fn inspect_codebook<T: Real>(ctx: &Ctx, kind: MotionKind) -> Result<CodebookReport> {
    let p = ctx.run.tokenizer(kind.name());
    if !p.exists() {
        return Err(HoiError::Config(format!("missing {}; run train-tokenizer first", p.display())));
    }
    let (tok, _) = load_tokenizer::<T>(&p)?;
    let data = motions::<T>(&ctx.train_data()?, kind);
    let k = tok.codebook.size();
    let mut counts = vec![0usize; k];
    for m in &data {
        for i in tok.tokenize(m)?.indices {
            counts[i] += 1;
        }
    }
    let report = CodebookReport {
        modality: kind,
        size: k,
        dim: tok.codebook.dim(),
        utilization: probe_utilization(&tok, &data)?,
        dead: (0..k).filter(|&i| counts[i] == 0).collect(),
        counts,
        ema_counts: tok.codebook.ema_counts.iter().map(|&c| c.to_f64()).collect(),
    };
    write_json(&ctx.run.reports().join(format!("codebook_{}.json", kind.name())), &report)?;
    Ok(report)
}
