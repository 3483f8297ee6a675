//! Requirement templates.
//!
//! Layout, scene first and one contiguous span per requirement:
//!
//! ```text
//! SCENE_START obj.. SCENE_END
//!   req₁ words  AUTH_START UNKNOWN AUTH_END  [REASON_START reason₁ REASON_END]
//!   req₂ words  AUTH_START UNKNOWN AUTH_END  [...]
//! ```
//!
//! `answer_positions[i]` is the index of requirement i's `UNKNOWN`; its answer is
//! read from the logits one position earlier (the `AUTH_START` marker). Reason
//! fields appear only in training templates with post-hoc reasons.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{Special, TokenId, VocabError, Vocabulary};
use crate::world::{Property, Sample, DEPENDENCY_TEXT};
use crate::Answer;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("template needs at least one requirement")]
    Empty,
    #[error("requirement {0} has no gold answer")]
    MissingLabel(usize),
    #[error("requirement {0} has no gold reason")]
    MissingReason(usize),
    #[error("requirement {0} has empty text")]
    EmptyRequirement(usize),
    #[error("template of {len} tokens exceeds context length {max}")]
    TooLong { len: usize, max: usize },
    #[error("dependency pairs need a labelled literal requirement")]
    NotLabelledLiteral,
    #[error("template invariant violated: {0}")]
    Invariant(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequirementKind {
    Literal,
    Dependency,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Requirement {
    pub text: Vec<String>,
    pub gold_answer: Option<Answer>,
    pub gold_reason: Option<Vec<String>>,
    pub kind: RequirementKind,
}

impl Requirement {
    pub fn literal(text: &str) -> Self {
        Self {
            text: text.split_whitespace().map(str::to_string).collect(),
            gold_answer: None,
            gold_reason: None,
            kind: RequirementKind::Literal,
        }
    }

    pub fn with_answer(mut self, a: Answer) -> Self {
        self.gold_answer = Some(a);
        self
    }

    pub fn with_reason(mut self, reason: &str) -> Self {
        self.gold_reason = Some(reason.split_whitespace().map(str::to_string).collect());
        self
    }

    pub fn from_property(p: &Property) -> Self {
        let mut r = Requirement::literal(&p.text);
        r.gold_answer = p.answer;
        r.gold_reason = p
            .reason
            .as_deref()
            .map(|s| s.split_whitespace().map(str::to_string).collect());
        if p.is_dependency() {
            r.kind = RequirementKind::Dependency;
        }
        r
    }
}

pub fn requirements_of(sample: &Sample) -> Vec<Requirement> {
    sample
        .properties
        .iter()
        .map(Requirement::from_property)
        .collect()
}

/// Follows a labelled literal requirement with the negating dependency requirement.
pub fn make_dependency_pair(first: Requirement) -> Result<Vec<Requirement>, TemplateError> {
    let answer = match (first.kind, first.gold_answer) {
        (RequirementKind::Literal, Some(a)) => a,
        _ => return Err(TemplateError::NotLabelledLiteral),
    };
    let second = Requirement {
        text: DEPENDENCY_TEXT
            .split_whitespace()
            .map(str::to_string)
            .collect(),
        gold_answer: Some(!answer),
        gold_reason: first.gold_reason.clone(),
        kind: RequirementKind::Dependency,
    };
    Ok(vec![first, second])
}

/// What the template is assembled for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateMode {
    /// No supervision targets, no reason fields. Gold answers are carried along
    /// for scoring when present.
    Inference,
    /// Answer targets only.
    Train,
    /// Answer targets plus reason fields with next-token targets.
    TrainWithReasons,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssembledTemplate {
    pub token_ids: Vec<TokenId>,
    /// Index of each requirement's `UNKNOWN` slot.
    pub answer_positions: Vec<usize>,
    /// Indices of the `REASON_START` and `REASON_END` markers of each reason field;
    /// the reason tokens lie strictly between them.
    pub reason_spans: Vec<(usize, usize)>,
    /// Target token for position j, predicted from the logits at j − 1.
    pub targets: Vec<Option<TokenId>>,
    pub gold: Vec<Option<Answer>>,
    pub kinds: Vec<RequirementKind>,
}

impl AssembledTemplate {
    pub fn n_requirements(&self) -> usize {
        self.answer_positions.len()
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Logit rows that read out each answer: `pos_i − 1`.
    pub fn readout_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.answer_positions.iter().map(|p| p - 1)
    }

    /// Positions of reason tokens.
    pub fn reason_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.reason_spans.iter().flat_map(|&(s, e)| s + 1..e)
    }

    /// Checks the layout invariants against `vocab`.
    pub fn check(&self, vocab: &Vocabulary) -> Result<(), TemplateError> {
        let bad = |m: String| Err(TemplateError::Invariant(m));
        let unknown = vocab.special(Special::Unknown);
        let n = self.n_requirements();
        if n == 0 {
            return bad("no answer slots".into());
        }
        if self.gold.len() != n || self.kinds.len() != n || self.targets.len() != self.len() {
            return bad("per-requirement or per-position lists have inconsistent lengths".into());
        }
        if self.answer_positions.windows(2).any(|w| w[0] >= w[1]) || self.answer_positions[0] == 0 {
            return bad("answer positions not strictly increasing from 1".into());
        }
        for &p in &self.answer_positions {
            if self.token_ids.get(p) != Some(&unknown) {
                return bad(format!("slot {p} does not hold UNKNOWN"));
            }
        }
        let slots = self.token_ids.iter().filter(|&&t| t == unknown).count();
        if slots != n {
            return bad(format!("{slots} UNKNOWN tokens for {n} requirements"));
        }
        let mut last_end = None;
        for &(s, e) in &self.reason_spans {
            if s >= e || last_end.is_some_and(|le| s <= le) || e >= self.len() {
                return bad(format!("reason span ({s},{e}) malformed or overlapping"));
            }
            if self.answer_positions.iter().any(|&p| p >= s && p <= e) {
                return bad(format!("reason span ({s},{e}) covers an answer slot"));
            }
            last_end = Some(e);
        }
        for (j, t) in self.targets.iter().enumerate() {
            if t.is_none() {
                continue;
            }
            let in_reason = self.reason_spans.iter().any(|&(s, e)| j > s && j < e);
            if !self.answer_positions.contains(&j) && !in_reason {
                return bad(format!(
                    "target at {j} is neither an answer slot nor inside a reason field"
                ));
            }
        }
        Ok(())
    }
}

/// Lays out `scene_tokens` followed by every requirement and its answer slot.
pub fn assemble(
    reqs: &[Requirement],
    scene_tokens: &[TokenId],
    mode: TemplateMode,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<AssembledTemplate, TemplateError> {
    if reqs.is_empty() {
        return Err(TemplateError::Empty);
    }
    let train = mode != TemplateMode::Inference;
    let with_reasons = mode == TemplateMode::TrainWithReasons;
    let yes = vocab.special(Special::Yes);
    let no = vocab.special(Special::No);

    let mut ids: Vec<TokenId> = scene_tokens.to_vec();
    let mut targets: Vec<Option<TokenId>> = vec![None; ids.len()];
    let mut answer_positions = Vec::with_capacity(reqs.len());
    let mut reason_spans = Vec::new();

    for (i, r) in reqs.iter().enumerate() {
        if r.text.is_empty() {
            return Err(TemplateError::EmptyRequirement(i));
        }
        if train && r.gold_answer.is_none() {
            return Err(TemplateError::MissingLabel(i));
        }
        let reason = if with_reasons {
            match &r.gold_reason {
                Some(words) if !words.is_empty() => Some(vocab.encode(words)?),
                _ => return Err(TemplateError::MissingReason(i)),
            }
        } else {
            None
        };
        for w in &r.text {
            ids.push(vocab.id(w)?);
            targets.push(None);
        }
        ids.push(vocab.special(Special::AuthStart));
        targets.push(None);
        answer_positions.push(ids.len());
        ids.push(vocab.special(Special::Unknown));
        targets.push(if train {
            r.gold_answer.map(|a| if a.is_yes() { yes } else { no })
        } else {
            None
        });
        ids.push(vocab.special(Special::AuthEnd));
        targets.push(None);
        if let Some(reason) = reason {
            let start = ids.len();
            ids.push(vocab.special(Special::ReasonStart));
            targets.push(None);
            for t in reason {
                ids.push(t);
                targets.push(Some(t));
            }
            reason_spans.push((start, ids.len()));
            ids.push(vocab.special(Special::ReasonEnd));
            targets.push(None);
        }
    }
    if ids.len() > max_len {
        return Err(TemplateError::TooLong {
            len: ids.len(),
            max: max_len,
        });
    }
    Ok(AssembledTemplate {
        token_ids: ids,
        answer_positions,
        reason_spans,
        targets,
        gold: reqs.iter().map(|r| r.gold_answer).collect(),
        kinds: reqs.iter().map(|r| r.kind).collect(),
    })
}

/// Assembles a stored sample.
pub fn assemble_sample(
    sample: &Sample,
    mode: TemplateMode,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<AssembledTemplate, TemplateError> {
    let scene = sample.scene.to_tokens(vocab)?;
    assemble(&requirements_of(sample), &scene, mode, vocab, max_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::build_vocabulary;
    use crate::world::{Object, Scene, WorldConfig};
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        build_vocabulary(&WorldConfig::default()).unwrap()
    }

    fn scene_tokens(v: &Vocabulary) -> Vec<TokenId> {
        let o = Object {
            category: "circle".into(),
            color: "red".into(),
            size: "small".into(),
            pattern: "plain".into(),
        };
        Scene { objects: vec![o] }.to_tokens(v).unwrap()
    }

    #[test]
    fn single_requirement_has_one_slot() {
        let v = vocab();
        let t = assemble(
            &[Requirement::literal("blue")],
            &scene_tokens(&v),
            TemplateMode::Inference,
            &v,
            512,
        )
        .unwrap();
        assert_eq!(t.answer_positions.len(), 1);
        let unknown = v.special(Special::Unknown);
        assert_eq!(t.token_ids.iter().filter(|&&x| x == unknown).count(), 1);
        assert_eq!(
            t.token_ids[t.answer_positions[0] - 1],
            v.special(Special::AuthStart)
        );
        assert!(t.targets.iter().all(Option::is_none));
        t.check(&v).unwrap();
    }

    #[test]
    fn query_decomposition_example() {
        // "a blue, hooded, long-sleeve top without a chest logo"
        let world = WorldConfig {
            categories: vec!["top".into(), "logo".into()],
            colors: vec!["blue".into()],
            sizes: vec![],
            patterns: vec!["hooded".into(), "long-sleeved".into(), "chest".into()],
            ..WorldConfig::default()
        };
        let v = build_vocabulary(&world).unwrap();
        let reqs: Vec<_> = ["blue", "hooded", "long-sleeved", "no chest logo"]
            .iter()
            .map(|t| Requirement::literal(t))
            .collect();
        let scene = vec![v.special(Special::SceneStart), v.special(Special::SceneEnd)];
        let t = assemble(&reqs, &scene, TemplateMode::Inference, &v, 512).unwrap();
        assert_eq!(t.n_requirements(), 4);
        t.check(&v).unwrap();
        let words = v.decode(&t.token_ids).unwrap();
        assert_eq!(
            words[t.answer_positions[3] - 4..t.answer_positions[3] - 1],
            ["no", "chest", "logo"]
        );
    }

    #[test]
    fn reasons_form_disjoint_spans() {
        let v = vocab();
        let reqs = vec![
            Requirement::literal("red")
                .with_answer(Answer::Yes)
                .with_reason("the scene has small red plain circle"),
            Requirement::literal("blue")
                .with_answer(Answer::No)
                .with_reason("the scene has no blue object"),
        ];
        let t = assemble(
            &reqs,
            &scene_tokens(&v),
            TemplateMode::TrainWithReasons,
            &v,
            512,
        )
        .unwrap();
        assert_eq!(t.reason_spans.len(), 2);
        for &(s, e) in &t.reason_spans {
            assert_eq!(t.token_ids[s], v.special(Special::ReasonStart));
            assert_eq!(t.token_ids[e], v.special(Special::ReasonEnd));
        }
        assert_eq!(
            t.targets[t.answer_positions[0]],
            Some(v.special(Special::Yes))
        );
        assert_eq!(
            t.targets[t.answer_positions[1]],
            Some(v.special(Special::No))
        );
        assert_eq!(t.reason_positions().count(), 7 + 6);
        t.check(&v).unwrap();
    }

    #[test]
    fn training_requires_labels_and_reasons() {
        let v = vocab();
        let s = scene_tokens(&v);
        let unlabeled = [Requirement::literal("red")];
        assert!(matches!(
            assemble(&unlabeled, &s, TemplateMode::Train, &v, 512),
            Err(TemplateError::MissingLabel(0))
        ));
        let no_reason = [Requirement::literal("red").with_answer(Answer::Yes)];
        assert!(matches!(
            assemble(&no_reason, &s, TemplateMode::TrainWithReasons, &v, 512),
            Err(TemplateError::MissingReason(0))
        ));
        assert!(matches!(
            assemble(&[], &s, TemplateMode::Inference, &v, 512),
            Err(TemplateError::Empty)
        ));
        assert!(matches!(
            assemble(&no_reason, &s, TemplateMode::Train, &v, 8),
            Err(TemplateError::TooLong { .. })
        ));
        // gold answers never leak into the input
        let t = assemble(&no_reason, &s, TemplateMode::Train, &v, 512).unwrap();
        assert!(!t.token_ids.contains(&v.special(Special::Yes)));
    }

    #[test]
    fn dependency_pair_negates_and_is_involutive() {
        let yes = Requirement::literal("red").with_answer(Answer::Yes);
        let pair = make_dependency_pair(yes.clone()).unwrap();
        assert_eq!(pair[1].gold_answer, Some(Answer::No));
        assert_eq!(pair[1].kind, RequirementKind::Dependency);
        assert_eq!(pair[1].text.join(" "), DEPENDENCY_TEXT);
        let no = Requirement::literal("red").with_answer(Answer::No);
        assert_eq!(
            make_dependency_pair(no).unwrap()[1].gold_answer,
            Some(Answer::Yes)
        );
        let mut again = pair[1].clone();
        again.kind = RequirementKind::Literal;
        assert_eq!(
            make_dependency_pair(again).unwrap()[1].gold_answer,
            yes.gold_answer
        );
        assert!(make_dependency_pair(Requirement::literal("red")).is_err());
    }

    proptest! {
        #[test]
        fn slot_count_and_mask_soundness(
            picks in proptest::collection::vec((0usize..6, any::<bool>()), 1..12),
            reasons in any::<bool>(),
        ) {
            let v = vocab();
            let texts = ["red", "circle", "no blue object", "at least 2 star", "large square", "red and striped"];
            let reqs: Vec<_> = picks.iter().map(|&(i, a)| {
                Requirement::literal(texts[i]).with_answer(Answer::from_bool(a)).with_reason("the scene has no red object")
            }).collect();
            let mode = if reasons { TemplateMode::TrainWithReasons } else { TemplateMode::Train };
            let t = assemble(&reqs, &scene_tokens(&v), mode, &v, 512).unwrap();
            prop_assert!(t.check(&v).is_ok());
            prop_assert_eq!(t.n_requirements(), reqs.len());
            let inf = assemble(&reqs, &scene_tokens(&v), TemplateMode::Inference, &v, 512).unwrap();
            prop_assert!(inf.reason_spans.is_empty());
            prop_assert!(!inf.token_ids.contains(&v.special(Special::ReasonStart)));
        }
    }
}
