use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{total_loss, AdamW, LossReport, LrSchedule, Objective, TrainConfig};
use crate::judge::JudgeMode;
use crate::metrics::{evaluate_samples, EvalReport};
use crate::model::{Gradients, Model};
use crate::template::{assemble, requirements_of, AssembledTemplate, TemplateMode};
use crate::vocab::{Special, Vocabulary};
use crate::world::Sample;
use crate::{Error, Result};

/// Samples per gradient accumulator. Fixed so the summation order, and hence the
/// result, does not depend on the number of worker threads.
const CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub total_loss: f64,
    pub answer_loss: f64,
    pub reason_loss: f64,
    pub grad_norm: f64,
    pub val_acc_property: Option<f64>,
    pub val_acc_sample: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model<f32>,
    pub history: Vec<HistoryRow>,
    /// Full validation-split report after the last step.
    pub validation: Option<EvalReport>,
    pub steps: usize,
    pub n_train: usize,
    pub n_val: usize,
}

/// Splits 6:1 into training and validation samples by position.
pub fn split_train_val(samples: &[Sample]) -> (&[Sample], &[Sample]) {
    let n_val = samples.len() / 7;
    samples.split_at(samples.len() - n_val)
}

/// Errors unless every answer slot holds `UNKNOWN` and no answer token occurs in the input.
pub fn check_answers_hidden(t: &AssembledTemplate, vocab: &Vocabulary) -> Result<()> {
    let unknown = vocab.special(Special::Unknown);
    let (yes, no) = (vocab.special(Special::Yes), vocab.special(Special::No));
    if let Some(&p) = t
        .answer_positions
        .iter()
        .find(|&&p| t.token_ids[p] != unknown)
    {
        return Err(Error::Invariant(format!(
            "answer slot {p} does not hold UNKNOWN"
        )));
    }
    if let Some(p) = t.token_ids.iter().position(|&id| id == yes || id == no) {
        return Err(Error::Invariant(format!(
            "answer token visible in the input at position {p}"
        )));
    }
    Ok(())
}

/// Builds the training template of one sample as it is fed to the model.
pub fn training_template(
    sample: &Sample,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    max_len: usize,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<AssembledTemplate> {
    let mut reqs = requirements_of(sample);
    if let Some(rng) = rng {
        if cfg.shuffle_requirements && !sample.has_dependency() {
            reqs.shuffle(rng);
        }
    }
    let mode = if cfg.with_cot {
        TemplateMode::TrainWithReasons
    } else {
        TemplateMode::Train
    };
    let mut t = assemble(&reqs, &sample.scene.to_tokens(vocab)?, mode, vocab, max_len)?;
    match cfg.objective {
        Objective::Slots => check_answers_hidden(&t, vocab)?,
        Objective::TeacherForced => {
            for &p in &t.answer_positions {
                t.token_ids[p] = t.targets[p].expect("training templates carry labels");
            }
        }
    }
    Ok(t)
}

fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f5a);
    rng.set_stream(((epoch as u64) << 40) | index as u64);
    rng
}

struct BatchResult {
    grads: Gradients<f32>,
    reports: Vec<(usize, LossReport)>,
}

fn batch_gradients(
    model: &Model<f32>,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
    epoch: usize,
    batch: &[(usize, &Sample)],
) -> Result<BatchResult> {
    let max_len = model.config().context_len;
    let parts: Vec<BatchResult> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = model.zero_grads();
            let mut reports = Vec::with_capacity(chunk.len());
            for &(idx, sample) in chunk {
                let mut rng = sample_rng(cfg.seed, epoch, idx);
                let t = training_template(sample, vocab, cfg, max_len, Some(&mut rng))?;
                let (logits, acts) = model.forward_train(&t.token_ids)?;
                let (report, dlogits) = total_loss(&logits, &t, cfg.lambda, cfg.with_cot)?;
                model.backward_into(&acts, &dlogits, &mut grads)?;
                reports.push((idx, report));
            }
            Ok(BatchResult { grads, reports })
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("nonempty batch");
    for part in iter {
        acc.grads.add_assign(&part.grads);
        acc.reports.extend(part.reports);
    }
    Ok(acc)
}

fn mean_report(reports: &[(usize, LossReport)]) -> LossReport {
    let n = reports.len() as f64;
    let mut out = LossReport::default();
    for (_, r) in reports {
        out.answer_loss += r.answer_loss / n;
        out.reason_loss += r.reason_loss / n;
        out.total_loss += r.total_loss / n;
        out.n_answer_targets += r.n_answer_targets;
        out.n_reason_targets += r.n_reason_targets;
    }
    out
}

/// Splits `data` 6:1 and trains on the larger part.
pub fn train_epochs(
    data: &[Sample],
    vocab: &Vocabulary,
    model: Model<f32>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let (train, val) = split_train_val(data);
    train_on(train, val, vocab, model, cfg, |_| {})
}

/// Trains on `train`, validating on `val`, calling `progress` after every step.
pub fn train_on(
    train: &[Sample],
    val: &[Sample],
    vocab: &Vocabulary,
    mut model: Model<f32>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Train("empty training set".into()));
    }
    if vocab.len() != model.config().vocab_size {
        return Err(Error::Train(format!(
            "vocabulary has {} tokens but the model expects {}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    let per_epoch = if cfg.drop_last_incomplete_batch {
        train.len() / cfg.batch_size
    } else {
        train.len().div_ceil(cfg.batch_size)
    };
    if per_epoch == 0 {
        return Err(Error::Train(format!(
            "{} training samples do not fill one batch of {}",
            train.len(),
            cfg.batch_size
        )));
    }
    let total = per_epoch * cfg.epochs;
    let schedule = LrSchedule::new(cfg.learning_rate, cfg.warmup_ratio, total, cfg.schedule);
    let mut opt = AdamW::new(
        model.layout(),
        cfg.beta1,
        cfg.beta2,
        cfg.eps,
        cfg.weight_decay,
    );
    let mut history = Vec::with_capacity(total);
    let subset = if cfg.eval_subset == 0 {
        val.len()
    } else {
        cfg.eval_subset.min(val.len())
    };
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(
            cfg.seed.wrapping_add(epoch as u64),
        ));
        for b in 0..per_epoch {
            step += 1;
            let lr = schedule.lr(step);
            let end = ((b + 1) * cfg.batch_size).min(order.len());
            let batch: Vec<(usize, &Sample)> = order[b * cfg.batch_size..end]
                .iter()
                .map(|&i| (i, &train[i]))
                .collect();
            let BatchResult { mut grads, reports } =
                batch_gradients(&model, vocab, cfg, epoch, &batch)?;
            grads.scale(1.0 / batch.len() as f32);
            let mean = mean_report(&reports);
            let grad_norm = grads.norm();
            if !mean.total_loss.is_finite() || !grad_norm.is_finite() {
                let worst: Vec<String> = reports
                    .iter()
                    .filter(|(_, r)| !r.total_loss.is_finite())
                    .map(|(i, r)| {
                        format!(
                            "sample {i}: answer {} reason {}",
                            r.answer_loss, r.reason_loss
                        )
                    })
                    .collect();
                return Err(Error::Train(format!(
                    "non-finite loss at step {step} (epoch {epoch}, lr {lr:e}): loss {}, grad norm {grad_norm}; {}",
                    mean.total_loss,
                    if worst.is_empty() { "all per-sample losses finite".to_string() } else { worst.join("; ") }
                )));
            }
            if let Some(clip) = cfg.grad_clip {
                if grad_norm > clip {
                    grads.scale((clip / grad_norm) as f32);
                }
            }
            opt.step(model.params_mut(), &grads, lr);

            let mut row = HistoryRow {
                step,
                epoch,
                lr,
                total_loss: mean.total_loss,
                answer_loss: mean.answer_loss,
                reason_loss: mean.reason_loss,
                grad_norm,
                val_acc_property: None,
                val_acc_sample: None,
            };
            let last = step == total;
            if !last && cfg.eval_every > 0 && step % cfg.eval_every == 0 && subset > 0 {
                let (report, _) =
                    evaluate_samples(&model, vocab, &val[..subset], JudgeMode::Single)?;
                row.val_acc_property = Some(report.acc_property);
                row.val_acc_sample = Some(report.acc_sample);
                log::info!(
                    "step {step}/{total} loss {:.4} val acc_property {:.4} acc_sample {:.4}",
                    row.total_loss,
                    report.acc_property,
                    report.acc_sample
                );
            }
            progress(&row);
            history.push(row);
        }
    }

    let validation = if val.is_empty() {
        None
    } else {
        let (report, _) = evaluate_samples(&model, vocab, val, JudgeMode::Single)?;
        if let Some(row) = history.last_mut() {
            row.val_acc_property = Some(report.acc_property);
            row.val_acc_sample = Some(report.acc_sample);
        }
        log::info!(
            "final validation acc_property {:.4} acc_sample {:.4}",
            report.acc_property,
            report.acc_sample
        );
        Some(report)
    };
    if !model.all_finite() {
        return Err(Error::Train("parameters became non-finite".into()));
    }
    Ok(TrainOutcome {
        model,
        history,
        validation,
        steps: step,
        n_train: train.len(),
        n_val: val.len(),
    })
}
