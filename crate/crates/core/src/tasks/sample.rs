//! Conditional generation and detokenization for one task.

use alloc::string::String;
use alloc::vec::Vec;

use super::{parse_segment, source_tokens, Parsed, Task};
use crate::lm::{DecodeParams, TransformerModel};
use crate::numerics::{Real, Tensor};
use crate::vocab::{Modality, TokenKind, UnifiedVocab};
use crate::vqvae::MotionTokenizer;
use crate::{Error, Result};

/// Condition inputs in token form. Exactly the task's condition
/// modalities must be present; `points` is required whenever the task
/// involves the object.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Conditions {
    pub caption: Option<Vec<usize>>,
    pub human: Option<Vec<usize>>,
    pub object: Option<Vec<usize>>,
    pub points: Option<Tensor<f32>>,
}

impl Conditions {
    fn present(&self) -> Vec<Modality> {
        let mut m = Vec::new();
        if self.caption.is_some() {
            m.push(Modality::Text);
        }
        if self.human.is_some() {
            m.push(Modality::Human);
        }
        if self.object.is_some() {
            m.push(Modality::Object);
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    /// Raw generated tokens, stop token included.
    pub tokens: Vec<usize>,
    pub parsed: Parsed,
    pub caption: Option<String>,
    pub human: Option<Tensor<f32>>,
    pub object: Option<Tensor<f32>>,
}

/// Keeps the first well-formed span of each target modality, dropping
/// anything that does not fit.
pub fn repair_segment(tokens: &[usize], mods: &[Modality], vocab: &UnifiedVocab) -> Parsed {
    let mut out = Parsed::default();
    let mut i = 0;
    for &m in mods {
        match m {
            Modality::Text => {
                let words: Vec<usize> = tokens[i..]
                    .iter()
                    .take_while(|&&t| matches!(vocab.classify(t), Ok(TokenKind::Word(_))))
                    .copied()
                    .collect();
                i += words.len();
                out.caption = Some(words);
            }
            _ => {
                let (begin, end) = vocab.motion_markers(m);
                let Some(start) = tokens[i..].iter().position(|&t| t == begin) else {
                    continue;
                };
                i += start + 1;
                let mut idx = Vec::new();
                while let Some(&t) = tokens.get(i) {
                    match (vocab.classify(t), m) {
                        (Ok(TokenKind::Human(c)), Modality::Human) | (Ok(TokenKind::Object(c)), Modality::Object) => idx.push(c),
                        _ => break,
                    }
                    i += 1;
                }
                if tokens.get(i) == Some(&end) {
                    i += 1;
                }
                if m == Modality::Human {
                    out.human = Some(idx);
                } else {
                    out.object = Some(idx);
                }
            }
        }
    }
    out
}

/// Generates the task's targets from `cond` and decodes motion spans with
/// the matching tokenizer. `params.stop` defaults to the task's stop
/// tokens when empty. Malformed output is an error unless `repair`.
#[allow(clippy::too_many_arguments)]
pub fn sample_task<T: Real>(
    model: &TransformerModel<T>,
    human_tok: &MotionTokenizer<T>,
    object_tok: &MotionTokenizer<T>,
    vocab: &UnifiedVocab,
    task: Task,
    cond: &Conditions,
    params: &DecodeParams,
    seed: u64,
    repair: bool,
) -> Result<Generated> {
    if cond.present() != task.conditions() {
        return Err(Error::Config(alloc::format!(
            "task {} requires conditions {:?}, got {:?}",
            task.name(),
            task.conditions(),
            cond.present()
        )));
    }
    let source = source_tokens(
        task,
        cond.caption.as_deref(),
        cond.human.as_deref(),
        cond.object.as_deref(),
        cond.points.is_some(),
        vocab,
    )?;
    let mut params = params.clone();
    if params.stop.is_empty() {
        params.stop = task.stop_tokens(vocab);
    }
    let points = cond.points.as_ref().map(|p| p.cast::<T>());
    let tokens = model.generate(&source, points.as_ref(), &params, seed)?;
    let targets = task.targets();
    let parsed = match parse_segment(&tokens, &targets, vocab, true) {
        Ok(p) => p,
        Err(_) if repair => repair_segment(&tokens, &targets, vocab),
        Err(e) => return Err(e),
    };
    for (m, got) in [(Modality::Human, parsed.human.is_some()), (Modality::Object, parsed.object.is_some())] {
        if targets.contains(&m) && !got {
            return Err(Error::Generation {
                reason: alloc::format!("no usable {m:?} span"),
                tokens,
            });
        }
    }
    let decode = |idx: &Option<Vec<usize>>, tok: &MotionTokenizer<T>| -> Result<Option<Tensor<f32>>> {
        match idx {
            None => Ok(None),
            Some(i) if i.is_empty() => Err(Error::Generation {
                reason: "empty motion span".into(),
                tokens: tokens.clone(),
            }),
            Some(i) => Ok(Some(tok.detokenize(i, 0)?.cast())),
        }
    };
    Ok(Generated {
        human: decode(&parsed.human, human_tok)?,
        object: decode(&parsed.object, object_tok)?,
        caption: parsed.caption.as_ref().map(|c| vocab.decode_words(c)),
        parsed,
        tokens,
    })
}
