//! Accuracy and ranking metrics, plus dataset-level evaluation drivers.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::judge::{judge, JudgeMode, JudgmentSet};
use crate::model::Model;
use crate::rankexpr::{rerank_pair, RerankOutcome};
use crate::template::{requirements_of, RequirementKind};
use crate::vocab::Vocabulary;
use crate::world::{PairLabel, PairSample, Sample};
use crate::{Answer, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracies {
    pub acc_property: f64,
    pub acc_sample: f64,
    /// Accuracy over dependency slots; `None` when there are none.
    pub acc_dep: Option<f64>,
    /// Accuracy of the i-th slot over all samples that have one.
    pub per_position_accuracy: Vec<f64>,
    pub per_position_count: Vec<usize>,
    pub n_samples: usize,
    pub n_properties: usize,
    /// Every sample has the same number of properties.
    pub uniform_lengths: bool,
}

/// `sample_lengths` splits the flat `preds`/`golds` lists into samples; `kinds`
/// tags each slot for the dependency metric.
pub fn compute_accuracies(
    preds: &[Answer],
    golds: &[Answer],
    sample_lengths: &[usize],
    kinds: Option<&[RequirementKind]>,
) -> Result<Accuracies> {
    let misaligned = |m: String| Err(Error::Metrics(m));
    if preds.len() != golds.len() {
        return misaligned(format!(
            "{} predictions for {} golds",
            preds.len(),
            golds.len()
        ));
    }
    if sample_lengths.iter().sum::<usize>() != preds.len() {
        return misaligned("sample lengths do not cover the predictions".into());
    }
    if let Some(k) = kinds {
        if k.len() != preds.len() {
            return misaligned(format!("{} kinds for {} predictions", k.len(), preds.len()));
        }
    }
    if preds.is_empty() || sample_lengths.contains(&0) {
        return misaligned("every sample needs at least one property".into());
    }

    let correct: Vec<bool> = preds.iter().zip(golds).map(|(p, g)| p == g).collect();
    let n_correct = correct.iter().filter(|&&c| c).count();
    let max_len = sample_lengths.iter().copied().max().unwrap_or(0);
    let mut pos_hits = vec![0usize; max_len];
    let mut pos_count = vec![0usize; max_len];
    let mut all_right = 0;
    let mut offset = 0;
    for &len in sample_lengths {
        let slots = &correct[offset..offset + len];
        if slots.iter().all(|&c| c) {
            all_right += 1;
        }
        for (i, &c) in slots.iter().enumerate() {
            pos_count[i] += 1;
            pos_hits[i] += c as usize;
        }
        offset += len;
    }
    let acc_dep = kinds.and_then(|k| {
        let dep: Vec<bool> = k
            .iter()
            .zip(&correct)
            .filter(|(k, _)| **k == RequirementKind::Dependency)
            .map(|(_, c)| *c)
            .collect();
        (!dep.is_empty()).then(|| dep.iter().filter(|&&c| c).count() as f64 / dep.len() as f64)
    });
    Ok(Accuracies {
        acc_property: n_correct as f64 / preds.len() as f64,
        acc_sample: all_right as f64 / sample_lengths.len() as f64,
        acc_dep,
        per_position_accuracy: pos_hits
            .iter()
            .zip(&pos_count)
            .map(|(&h, &c)| h as f64 / c as f64)
            .collect(),
        per_position_count: pos_count,
        n_samples: sample_lengths.len(),
        n_properties: preds.len(),
        uniform_lengths: sample_lengths.windows(2).all(|w| w[0] == w[1]),
    })
}

/// Fraction of pairs ranked wrongly.
pub fn compute_error_rank(predictions: &[PairLabel], labels: &[PairLabel]) -> Result<f64> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::Metrics(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p != l)
        .count() as f64
        / labels.len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub samples_per_sec: f64,
    pub forward_passes_per_sample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc_property: f64,
    pub acc_sample: f64,
    pub acc_dep: Option<f64>,
    pub error_rank: Option<f64>,
    pub per_position_accuracy: Vec<f64>,
    pub throughput: Throughput,
    pub tie_rate: Option<f64>,
    pub n_samples: usize,
    pub n_properties: usize,
}

fn unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Invariant(format!("{name} = {x} is not a rate")))
    }
}

impl EvalReport {
    /// Builds a report, enforcing that all rates lie in [0, 1] and, when every
    /// sample has the same number of properties, `acc_sample ≤ acc_property`.
    /// With mixed lengths the bound does not hold in general (one perfect
    /// single-property sample next to a failed long one).
    pub fn new(acc: Accuracies, throughput: Throughput) -> Result<Self> {
        if acc.uniform_lengths && acc.acc_sample > acc.acc_property + 1e-12 {
            return Err(Error::Invariant(format!(
                "sample accuracy {} exceeds property accuracy {}",
                acc.acc_sample, acc.acc_property
            )));
        }
        unit("acc_property", acc.acc_property)?;
        unit("acc_sample", acc.acc_sample)?;
        if let Some(d) = acc.acc_dep {
            unit("acc_dep", d)?;
        }
        for &a in &acc.per_position_accuracy {
            unit("per-position accuracy", a)?;
        }
        Ok(Self {
            acc_property: acc.acc_property,
            acc_sample: acc.acc_sample,
            acc_dep: acc.acc_dep,
            error_rank: None,
            per_position_accuracy: acc.per_position_accuracy,
            throughput,
            tie_rate: None,
            n_samples: acc.n_samples,
            n_properties: acc.n_properties,
        })
    }

    pub fn with_ranking(mut self, error_rank: f64, tie_rate: f64) -> Result<Self> {
        unit("error_rank", error_rank)?;
        unit("tie_rate", tie_rate)?;
        self.error_rank = Some(error_rank);
        self.tie_rate = Some(tie_rate);
        Ok(self)
    }
}

/// Judges every sample with `mode` and scores the decisions against the gold labels.
pub fn evaluate_samples(
    model: &Model<f32>,
    vocab: &Vocabulary,
    samples: &[Sample],
    mode: JudgeMode,
) -> Result<(EvalReport, Vec<JudgmentSet>)> {
    if samples.is_empty() {
        return Err(Error::Metrics("no samples to evaluate".into()));
    }
    let start = Instant::now();
    let sets: Vec<JudgmentSet> = samples
        .par_iter()
        .map(|s| {
            let reqs = requirements_of(s);
            let scene = s.scene.to_tokens(vocab)?;
            judge(model, vocab, &reqs, &scene, mode)
        })
        .collect::<Result<_>>()?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut preds = Vec::new();
    let mut golds = Vec::new();
    let mut kinds = Vec::new();
    let mut lengths = Vec::with_capacity(samples.len());
    for (s, set) in samples.iter().zip(&sets) {
        for (r, d) in requirements_of(s).iter().zip(set.decisions()) {
            golds.push(
                r.gold_answer.ok_or_else(|| {
                    Error::Metrics("evaluation sample without gold labels".into())
                })?,
            );
            kinds.push(r.kind);
            preds.push(d);
        }
        lengths.push(set.len());
    }
    let acc = compute_accuracies(&preds, &golds, &lengths, Some(&kinds))?;
    let passes: usize = sets.iter().map(|s| s.n_forward_passes).sum();
    let throughput = Throughput {
        samples_per_sec: samples.len() as f64 / elapsed.max(1e-9),
        forward_passes_per_sample: passes as f64 / samples.len() as f64,
    };
    Ok((EvalReport::new(acc, throughput)?, sets))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub error_rank: f64,
    pub tie_rate: f64,
    pub n_pairs: usize,
}

/// Reranks every pair with single-pass judging.
pub fn evaluate_pairs(
    model: &Model<f32>,
    vocab: &Vocabulary,
    pairs: &[PairSample],
) -> Result<(RankingReport, Vec<RerankOutcome>)> {
    let outcomes: Vec<RerankOutcome> = pairs
        .par_iter()
        .map(|p| rerank_pair(model, vocab, p))
        .collect::<Result<_>>()?;
    let preds: Vec<PairLabel> = outcomes.iter().map(|o| o.decision.predicted).collect();
    let labels: Vec<PairLabel> = pairs.iter().map(|p| p.label).collect();
    let error_rank = compute_error_rank(&preds, &labels)?;
    let ties = outcomes.iter().filter(|o| o.decision.tie).count();
    Ok((
        RankingReport {
            error_rank,
            tie_rate: ties as f64 / pairs.len() as f64,
            n_pairs: pairs.len(),
        },
        outcomes,
    ))
}
