use serde::{Deserialize, Serialize};

use crate::model::{cst, LogitsGrid, Scalar};
use crate::template::{AssembledTemplate, TemplateError};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub answer_loss: f64,
    pub reason_loss: f64,
    pub total_loss: f64,
    pub n_answer_targets: usize,
    pub n_reason_targets: usize,
}

/// Adds `scale · ∂CE/∂logits` of `(row, target)` to `grad` and returns the CE.
fn cross_entropy<T: Scalar>(row: &[T], target: usize, grad: &mut [T], scale: f64) -> f64 {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &l| {
        m.max(l.to_f64().unwrap_or(f64::NAN))
    });
    let z: f64 = row
        .iter()
        .map(|&l| (l.to_f64().unwrap_or(f64::NAN) - max).exp())
        .sum();
    let lse = max + z.ln();
    for (j, (g, &l)) in grad.iter_mut().zip(row).enumerate() {
        let p = (l.to_f64().unwrap_or(f64::NAN) - lse).exp();
        let d = if j == target { p - 1.0 } else { p };
        *g += cst::<T>(scale * d);
    }
    lse - row[target].to_f64().unwrap_or(f64::NAN)
}

fn check_shape<T: Scalar>(grid: &LogitsGrid<T>, t: &AssembledTemplate) -> Result<()> {
    if grid.len() != t.len() {
        return Err(Error::Train(format!(
            "{} logit rows for a template of {} tokens",
            grid.len(),
            t.len()
        )));
    }
    Ok(())
}

/// Mean cross-entropy of the gold answers read at `pos_i − 1`.
pub fn answer_loss<T: Scalar>(
    grid: &LogitsGrid<T>,
    t: &AssembledTemplate,
) -> Result<(f64, LogitsGrid<T>)> {
    check_shape(grid, t)?;
    let n = t.n_requirements();
    if n == 0 {
        return Err(TemplateError::Empty.into());
    }
    let mut grad = LogitsGrid::zeros(grid.len(), grid.vocab_size());
    let mut total = 0.0;
    for (i, &p) in t.answer_positions.iter().enumerate() {
        let target = t.targets[p].ok_or(TemplateError::MissingLabel(i))?;
        total += cross_entropy(
            grid.row(p - 1),
            target.index(),
            grad.row_mut(p - 1),
            1.0 / n as f64,
        );
    }
    Ok((total / n as f64, grad))
}

/// Mean next-token cross-entropy over the reason tokens; zero when there are none.
pub fn reason_loss<T: Scalar>(
    grid: &LogitsGrid<T>,
    t: &AssembledTemplate,
) -> Result<(f64, LogitsGrid<T>)> {
    check_shape(grid, t)?;
    let positions: Vec<usize> = t.reason_positions().collect();
    let mut grad = LogitsGrid::zeros(grid.len(), grid.vocab_size());
    if positions.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / positions.len() as f64;
    let mut total = 0.0;
    for &j in &positions {
        let target = t.targets[j]
            .ok_or_else(|| Error::Train(format!("reason position {j} has no target")))?;
        total += cross_entropy(grid.row(j - 1), target.index(), grad.row_mut(j - 1), scale);
    }
    Ok((total * scale, grad))
}

/// `answer + λ · reason` and its logit gradient. The reason term is skipped
/// entirely when `with_cot` is off.
pub fn total_loss<T: Scalar>(
    grid: &LogitsGrid<T>,
    t: &AssembledTemplate,
    lambda: f64,
    with_cot: bool,
) -> Result<(LossReport, LogitsGrid<T>)> {
    let (answer, mut grad) = answer_loss(grid, t)?;
    let n_reason = t.reason_positions().count();
    let mut report = LossReport {
        answer_loss: answer,
        reason_loss: 0.0,
        total_loss: answer,
        n_answer_targets: t.n_requirements(),
        n_reason_targets: 0,
    };
    if with_cot {
        if n_reason == 0 {
            return Err(TemplateError::MissingReason(0).into());
        }
        let (reason, rgrad) = reason_loss(grid, t)?;
        let l: T = cst(lambda);
        for (g, r) in grad.as_mut_slice().iter_mut().zip(rgrad.as_slice()) {
            *g += l * *r;
        }
        report.reason_loss = reason;
        report.total_loss = answer + lambda * reason;
        report.n_reason_targets = n_reason;
    }
    Ok((report, grad))
}
