//! The conditional task family: every nonempty proper subset of
//! {text, human, object} as conditions, the rest as targets, framed as
//! instruction-prefixed token sequences.

mod sample;
mod train;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{HoiSample, Template};
use crate::geom::points_tensor;
use crate::lm::LmExample;
use crate::numerics::{Real, Tensor};
use crate::vocab::{Modality, Special, TokenKind, UnifiedVocab};
use crate::vqvae::{MotionTokenizer, Tokenized};
use crate::{Error, Result};

pub use sample::{repair_segment, sample_task, Conditions, Generated};
pub use train::{evaluate_task_loss, per_task_mean, pretrain_text, stage1_train, stage2_train, task_assignment, StageConfig, StepLog};

const MODS: [Modality; 3] = [Modality::Text, Modality::Human, Modality::Object];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    T2hoi,
    H2to,
    O2th,
    Th2o,
    To2h,
    Ho2t,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::T2hoi, Task::H2to, Task::O2th, Task::Th2o, Task::To2h, Task::Ho2t];

    pub fn name(self) -> &'static str {
        match self {
            Task::T2hoi => "t2hoi",
            Task::H2to => "h2to",
            Task::O2th => "o2th",
            Task::Th2o => "th2o",
            Task::To2h => "to2h",
            Task::Ho2t => "ho2t",
        }
    }

    pub fn parse(name: &str) -> Option<Task> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Condition modalities in (text, human, object) order.
    pub fn conditions(self) -> Vec<Modality> {
        let c: &[Modality] = match self {
            Task::T2hoi => &[Modality::Text],
            Task::H2to => &[Modality::Human],
            Task::O2th => &[Modality::Object],
            Task::Th2o => &[Modality::Text, Modality::Human],
            Task::To2h => &[Modality::Text, Modality::Object],
            Task::Ho2t => &[Modality::Human, Modality::Object],
        };
        c.to_vec()
    }

    /// Target modalities in (text, human, object) order.
    pub fn targets(self) -> Vec<Modality> {
        let c = self.conditions();
        MODS.into_iter().filter(|m| !c.contains(m)).collect()
    }

    pub fn instruction(self) -> &'static str {
        match self {
            Task::T2hoi => "please generate a human object interaction sequence from the following text description",
            Task::H2to => "please describe the following human motion and generate a paired object motion sequence",
            Task::O2th => "please describe the following object motion and generate a paired human motion sequence",
            Task::Th2o => "please generate an object motion sequence paired with the following text and human motion",
            Task::To2h => "please generate a human motion sequence paired with the following text and object motion",
            Task::Ho2t => "please describe the following human object interaction sequence",
        }
    }

    /// Tokens that end generation: the end marker of a lone motion target,
    /// and always EOS.
    pub fn stop_tokens(self, vocab: &UnifiedVocab) -> Vec<usize> {
        let mut stop = alloc::vec![vocab.special(Special::Eos)];
        if let [m @ (Modality::Human | Modality::Object)] = self.targets()[..] {
            stop.push(vocab.motion_markers(m).1);
        }
        stop
    }
}

/// Caption words plus every instruction word, sorted and deduplicated.
pub fn default_words() -> Vec<String> {
    let mut w = crate::data::TemplateSet::caption_words();
    for t in Task::ALL {
        w.extend(t.instruction().split(' ').map(String::from));
    }
    w.sort();
    w.dedup();
    w
}

/// A sample reduced to token form: caption ids and motion code indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedSample {
    pub id: String,
    pub caption: Vec<usize>,
    pub human: Tokenized,
    pub object: Tokenized,
    pub points: Option<Tensor<f32>>,
    pub template: Option<Template>,
}

impl TokenizedSample {
    pub fn from_sample<T: Real>(
        s: &HoiSample,
        human: &MotionTokenizer<T>,
        object: &MotionTokenizer<T>,
        vocab: &UnifiedVocab,
    ) -> Result<Self> {
        Ok(Self {
            id: s.id.clone(),
            caption: vocab.encode_caption(&s.caption),
            human: human.tokenize(&s.human.frames.cast())?,
            object: object.tokenize(&s.object.frames.cast())?,
            points: Some(points_tensor(&s.points.points)?),
            template: s.template,
        })
    }
}

/// Source and target token segments of one (sample, task) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AssembledExample {
    pub task: Task,
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub needs_geometry: bool,
}

impl AssembledExample {
    pub fn to_lm<T: Real>(&self, points: Option<&Tensor<f32>>) -> LmExample<T> {
        let mut tokens = self.source.clone();
        tokens.extend_from_slice(&self.target);
        let mask = (0..tokens.len()).map(|i| i >= self.source.len()).collect();
        LmExample {
            tokens,
            mask,
            points: if self.needs_geometry { points.map(|p| p.cast()) } else { None },
        }
    }
}

fn modality_tokens(s: &TokenizedSample, m: Modality, vocab: &UnifiedVocab) -> Result<Vec<usize>> {
    match m {
        Modality::Text => Ok(s.caption.clone()),
        Modality::Human => vocab.wrap_motion(&s.human.indices, m),
        Modality::Object => vocab.wrap_motion(&s.object.indices, m),
    }
}

/// `[BOS] instruction [OGT] conditions` and `targets [EOS]`.
pub fn source_tokens(
    task: Task,
    caption: Option<&[usize]>,
    human: Option<&[usize]>,
    object: Option<&[usize]>,
    has_points: bool,
    vocab: &UnifiedVocab,
) -> Result<Vec<usize>> {
    let involves_object = task.conditions().contains(&Modality::Object) || task.targets().contains(&Modality::Object);
    if involves_object && !has_points {
        return Err(Error::Assembly(alloc::format!(
            "task {} involves the object but the sample has no point cloud",
            task.name()
        )));
    }
    let mut src = alloc::vec![vocab.special(Special::Bos)];
    src.extend(vocab.encode_caption(task.instruction()));
    if has_points {
        src.push(vocab.special(Special::Ogt));
    }
    for m in task.conditions() {
        let missing = || Error::Assembly(alloc::format!("task {} needs a {:?} condition", task.name(), m));
        match m {
            Modality::Text => src.extend_from_slice(caption.ok_or_else(missing)?),
            Modality::Human => src.extend(vocab.wrap_motion(human.ok_or_else(missing)?, m)?),
            Modality::Object => src.extend(vocab.wrap_motion(object.ok_or_else(missing)?, m)?),
        }
    }
    Ok(src)
}

pub fn assemble(s: &TokenizedSample, task: Task, vocab: &UnifiedVocab) -> Result<AssembledExample> {
    let has_points = s.points.is_some();
    let source = source_tokens(
        task,
        Some(&s.caption),
        Some(&s.human.indices),
        Some(&s.object.indices),
        has_points,
        vocab,
    )?;
    let mut target = Vec::new();
    for m in task.targets() {
        target.extend(modality_tokens(s, m, vocab)?);
    }
    target.push(vocab.special(Special::Eos));
    Ok(AssembledExample {
        task,
        source,
        target,
        needs_geometry: has_points,
    })
}

/// Caption ids and motion indices recovered from a token segment.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Parsed {
    pub caption: Option<Vec<usize>>,
    pub human: Option<Vec<usize>>,
    pub object: Option<Vec<usize>>,
}

/// Parses `segment` as the concatenation of `mods` (text as bare words,
/// motions wrapped in boundary tokens). A trailing EOS is required unless
/// `allow_open_end` and the last modality is a closed motion span.
pub fn parse_segment(segment: &[usize], mods: &[Modality], vocab: &UnifiedVocab, allow_open_end: bool) -> Result<Parsed> {
    let fail = |reason: &str| Error::Generation {
        reason: reason.into(),
        tokens: segment.to_vec(),
    };
    let eos = vocab.special(Special::Eos);
    let mut out = Parsed::default();
    let mut i = 0;
    for &m in mods {
        match m {
            Modality::Text => {
                let start = i;
                while i < segment.len() && matches!(vocab.classify(segment[i]), Ok(TokenKind::Word(_)) | Ok(TokenKind::Special(Special::Unk))) {
                    i += 1;
                }
                out.caption = Some(segment[start..i].to_vec());
            }
            _ => {
                let (begin, end) = vocab.motion_markers(m);
                if segment.get(i) != Some(&begin) {
                    return Err(fail("missing motion begin token"));
                }
                let close = segment[i..]
                    .iter()
                    .position(|&t| t == end)
                    .ok_or_else(|| fail("unterminated motion span"))?;
                let idx = vocab
                    .unwrap_motion(&segment[i..i + close + 1], m)
                    .map_err(|_| fail("foreign token inside motion span"))?;
                if m == Modality::Human {
                    out.human = Some(idx);
                } else {
                    out.object = Some(idx);
                }
                i += close + 1;
            }
        }
    }
    match segment.get(i) {
        Some(&t) if t == eos && i + 1 == segment.len() => Ok(out),
        None if allow_open_end && mods.last().is_some_and(|m| *m != Modality::Text) => Ok(out),
        None => Err(fail("missing end-of-sequence token")),
        Some(_) => Err(fail("unexpected tokens after the last modality")),
    }
}

/// Recovers conditions (from the source) and targets (from the target
/// segment) of an assembled example.
pub fn disassemble(ex: &AssembledExample, vocab: &UnifiedVocab) -> Result<(Parsed, Parsed)> {
    let task = ex.task;
    let mut prefix = alloc::vec![vocab.special(Special::Bos)];
    prefix.extend(vocab.encode_caption(task.instruction()));
    if ex.needs_geometry {
        prefix.push(vocab.special(Special::Ogt));
    }
    if !ex.source.starts_with(&prefix) {
        return Err(Error::Assembly("source does not start with the task prefix".into()));
    }
    let mut cond = ex.source[prefix.len()..].to_vec();
    cond.push(vocab.special(Special::Eos));
    let conditions = parse_segment(&cond, &task.conditions(), vocab, false)?;
    let targets = parse_segment(&ex.target, &task.targets(), vocab, false)?;
    Ok((conditions, targets))
}
