//! Inference engines.
//!
//! [`judge_single_pass`] runs the whole template once and reads every answer
//! slot from the logits one position before it. The two baselines exist for
//! comparison: [`judge_autoregressive_baseline`] decodes slot by slot and feeds
//! its own answers back, [`judge_isolated_baseline`] runs one template per
//! requirement.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{KvCache, Model};
use crate::template::{assemble, AssembledTemplate, Requirement, TemplateMode};
use crate::vocab::{Special, TokenId, Vocabulary};
use crate::{Answer, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMode {
    Single,
    Auto,
    Isolated,
}

impl std::str::FromStr for JudgeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single" => Ok(JudgeMode::Single),
            "auto" => Ok(JudgeMode::Auto),
            "isolated" => Ok(JudgeMode::Isolated),
            _ => Err(format!(
                "unknown judge mode {s:?} (expected single, auto or isolated)"
            )),
        }
    }
}

/// Decision for one answer slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub decision: Answer,
    pub p_yes: f64,
    pub p_no: f64,
    /// Unrestricted argmax over the whole vocabulary.
    pub raw_argmax: TokenId,
    /// Logit row the decision was read from, `pos_i − 1`.
    pub readout_position: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgmentSet {
    pub mode: JudgeMode,
    pub judgments: Vec<Judgment>,
    pub n_forward_passes: usize,
    pub wall_time: Duration,
}

impl JudgmentSet {
    pub fn decisions(&self) -> Vec<Answer> {
        self.judgments.iter().map(|j| j.decision).collect()
    }

    pub fn p_yes(&self) -> Vec<f64> {
        self.judgments.iter().map(|j| j.p_yes).collect()
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Yes iff `p_yes > p_no`; equality answers no.
pub fn binarize(p_yes: f64, p_no: f64) -> Answer {
    Answer::from_bool(p_yes > p_no)
}

/// Argmax over the two answer logits only; equality answers no.
pub fn restricted_argmax(row: &[f32], yes: TokenId, no: TokenId) -> Answer {
    Answer::from_bool(row[yes.index()] > row[no.index()])
}

/// Reads one logit row: softmax over the full vocabulary, raw argmax, binarized decision.
pub fn read_slot(row: &[f32], yes: TokenId, no: TokenId, readout_position: usize) -> Judgment {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let z: f64 = row.iter().map(|&l| (l as f64 - max).exp()).sum();
    let p_yes = (row[yes.index()] as f64 - max).exp() / z;
    let p_no = (row[no.index()] as f64 - max).exp() / z;
    let raw_argmax = row
        .iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |best, (i, &l)| {
            if l > best.1 {
                (i, l)
            } else {
                best
            }
        })
        .0;
    Judgment {
        decision: binarize(p_yes, p_no),
        p_yes,
        p_no,
        raw_argmax: TokenId(raw_argmax as u32),
        readout_position,
    }
}

fn answer_ids(vocab: &Vocabulary) -> (TokenId, TokenId) {
    (vocab.special(Special::Yes), vocab.special(Special::No))
}

fn check_inference_template(
    model: &Model<f32>,
    vocab: &Vocabulary,
    t: &AssembledTemplate,
) -> Result<()> {
    if t.answer_positions.is_empty() {
        return Err(Error::Judge("template has no answer positions".into()));
    }
    if !t.reason_spans.is_empty() {
        return Err(Error::Judge(
            "inference templates must not contain reason fields".into(),
        ));
    }
    if vocab.len() != model.config().vocab_size {
        return Err(Error::Judge(format!(
            "vocabulary has {} tokens but the model expects {}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    t.check(vocab)?;
    Ok(())
}

/// All N decisions from exactly one forward pass.
pub fn judge_single_pass(
    model: &Model<f32>,
    vocab: &Vocabulary,
    t: &AssembledTemplate,
) -> Result<JudgmentSet> {
    check_inference_template(model, vocab, t)?;
    let start = Instant::now();
    let logits = model.forward(&t.token_ids)?;
    let (yes, no) = answer_ids(vocab);
    let judgments = t
        .readout_positions()
        .map(|r| read_slot(logits.row(r), yes, no, r))
        .collect();
    Ok(JudgmentSet {
        mode: JudgeMode::Single,
        judgments,
        n_forward_passes: 1,
        wall_time: start.elapsed(),
    })
}

/// Sequential decoding: prefill through `pos_1 − 1`, then one incremental step per
/// token, with each decoded answer written into its slot before continuing.
pub fn judge_autoregressive_baseline(
    model: &Model<f32>,
    vocab: &Vocabulary,
    t: &AssembledTemplate,
) -> Result<JudgmentSet> {
    check_inference_template(model, vocab, t)?;
    let start = Instant::now();
    let (yes, no) = answer_ids(vocab);
    let first = t.answer_positions[0];
    let (prefill, mut cache): (_, KvCache<f32>) = model.prefill(&t.token_ids[..first])?;
    let mut passes = 1;
    let mut last_row = prefill.row(first - 1).to_vec();
    let mut judgments = Vec::with_capacity(t.n_requirements());
    let mut slot = 0;
    for pos in first..t.len() {
        let token = if slot < t.n_requirements() && pos == t.answer_positions[slot] {
            let j = read_slot(&last_row, yes, no, pos - 1);
            let decided = if j.decision.is_yes() { yes } else { no };
            judgments.push(j);
            slot += 1;
            decided
        } else {
            t.token_ids[pos]
        };
        last_row = model
            .forward_incremental(&mut cache, token)?
            .row(0)
            .to_vec();
        passes += 1;
        // The final answer token is fed like any decoded token; the closing
        // markers after it are not needed.
        if slot == t.n_requirements() {
            break;
        }
    }
    Ok(JudgmentSet {
        mode: JudgeMode::Auto,
        judgments,
        n_forward_passes: passes,
        wall_time: start.elapsed(),
    })
}

/// One single-requirement template and one forward per requirement.
pub fn judge_isolated_baseline(
    model: &Model<f32>,
    vocab: &Vocabulary,
    reqs: &[Requirement],
    scene_tokens: &[TokenId],
) -> Result<JudgmentSet> {
    if reqs.is_empty() {
        return Err(Error::Judge("no requirements to judge".into()));
    }
    let start = Instant::now();
    let mut judgments = Vec::with_capacity(reqs.len());
    for r in reqs {
        let t = assemble(
            std::slice::from_ref(r),
            scene_tokens,
            TemplateMode::Inference,
            vocab,
            model.config().context_len,
        )?;
        let mut one = judge_single_pass(model, vocab, &t)?;
        judgments.append(&mut one.judgments);
    }
    Ok(JudgmentSet {
        mode: JudgeMode::Isolated,
        judgments,
        n_forward_passes: reqs.len(),
        wall_time: start.elapsed(),
    })
}

/// Dispatches on `mode` for a list of requirements about one scene.
pub fn judge(
    model: &Model<f32>,
    vocab: &Vocabulary,
    reqs: &[Requirement],
    scene_tokens: &[TokenId],
    mode: JudgeMode,
) -> Result<JudgmentSet> {
    if mode == JudgeMode::Isolated {
        return judge_isolated_baseline(model, vocab, reqs, scene_tokens);
    }
    let t = assemble(
        reqs,
        scene_tokens,
        TemplateMode::Inference,
        vocab,
        model.config().context_len,
    )?;
    match mode {
        JudgeMode::Single => judge_single_pass(model, vocab, &t),
        _ => judge_autoregressive_baseline(model, vocab, &t),
    }
}
