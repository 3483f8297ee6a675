//! Judging-mode throughput comparison.
//!
//! Pass counts are hardware-independent; wall-clock numbers are per template,
//! averaged over the benchmark samples and reported as mean ± std over repeats.
//! Timing runs on the calling thread.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::judge::{judge, JudgeMode};
use crate::model::Model;
use crate::template::requirements_of;
use crate::vocab::{TokenId, Vocabulary};
use crate::world::{generate_with_count, WorldConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_requirements: Vec<usize>,
    pub repeats: usize,
    /// Templates judged per repeat.
    pub samples: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_requirements: vec![1, 2, 5, 10, 20],
            repeats: 5,
            samples: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub mode: JudgeMode,
    /// Forward passes per template.
    pub passes: f64,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub repeats: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub const MODES: [JudgeMode; 3] = [JudgeMode::Single, JudgeMode::Auto, JudgeMode::Isolated];

pub fn run_bench(
    model: &Model<f32>,
    vocab: &Vocabulary,
    world: &WorldConfig,
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    if cfg.repeats == 0 || cfg.samples == 0 || cfg.n_requirements.is_empty() {
        return Err(Error::Judge(
            "benchmark needs repeats, samples and at least one N".into(),
        ));
    }
    let mut rows = Vec::new();
    for &n in &cfg.n_requirements {
        let samples = generate_with_count(world, cfg.samples, n, cfg.seed)?;
        let inputs = samples
            .iter()
            .map(|s| Ok((requirements_of(s), s.scene.to_tokens(vocab)?)))
            .collect::<Result<Vec<(_, Vec<TokenId>)>>>()?;
        for mode in MODES {
            let run = || -> Result<(f64, usize)> {
                let start = Instant::now();
                let mut passes = 0;
                for (reqs, scene) in &inputs {
                    passes += judge(model, vocab, reqs, scene, mode)?.n_forward_passes;
                }
                Ok((
                    start.elapsed().as_secs_f64() * 1e3 / inputs.len() as f64,
                    passes,
                ))
            };
            run()?;
            let mut times = Vec::with_capacity(cfg.repeats);
            let mut passes = 0;
            for _ in 0..cfg.repeats {
                let (ms, p) = run()?;
                times.push(ms);
                passes = p;
            }
            let (mean_ms, std_ms) = mean_std(&times);
            rows.push(BenchRow {
                n,
                mode,
                passes: passes as f64 / inputs.len() as f64,
                mean_ms,
                std_ms,
                repeats: cfg.repeats,
            });
        }
    }
    Ok(rows)
}

/// Autoregressive over single-pass mean wall-clock, per N.
pub fn speedups(rows: &[BenchRow]) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| {
            let t = |m| {
                rows.iter()
                    .find(|r| r.n == n && r.mode == m)
                    .map(|r| r.mean_ms)
            };
            Some((n, t(JudgeMode::Auto)? / t(JudgeMode::Single)?))
        })
        .collect()
}

/// Plain-text table of the rows.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:>4}  {:<9} {:>8}  {:>18}\n",
        "N", "mode", "passes", "ms/template"
    );
    for r in rows {
        let mode = format!("{:?}", r.mode).to_lowercase();
        out.push_str(&format!(
            "{:>4}  {:<9} {:>8.1}  {:>9.3} ± {:<7.3}\n",
            r.n, mode, r.passes, r.mean_ms, r.std_ms
        ));
    }
    for (n, s) in speedups(rows) {
        out.push_str(&format!("speedup single vs auto at N={n}: {s:.2}x\n"));
    }
    out
}
