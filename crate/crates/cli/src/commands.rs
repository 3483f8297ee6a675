use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use slotjudge::bench::{format_table, run_bench, BenchConfig};
use slotjudge::judge::{judge as judge_one, JudgeMode};
use slotjudge::metrics::{evaluate_pairs, evaluate_samples, EvalReport};
use slotjudge::model::{save_checkpoint, Model, ModelConfig};
use slotjudge::template::requirements_of;
use slotjudge::train::{split_train_val, train_on, TrainConfig};
use slotjudge::vocab::build_vocabulary;
use slotjudge::world::{
    generate_dependency_set, generate_mixed_set, generate_pair_set, generate_training_set,
    read_jsonl, verify_sample, write_jsonl, PairLabel, PairSample, Sample, WorldConfig,
};

use crate::args::{
    BenchArgs, DataKind, E2eArgs, EvalArgs, GenDataArgs, JudgeArgs, RerankArgs, TrainArgs,
};
use crate::files::{load_ckpt, load_config, sibling, write_csv, write_json, write_resolved};
use crate::InvariantViolation;

fn world(path: Option<&Path>) -> Result<WorldConfig> {
    let w: WorldConfig = load_config(path)?;
    w.validate().context("world configuration")?;
    Ok(w)
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let w = world(a.world.as_deref())?;
    let n = match a.kind {
        DataKind::Pairs => {
            let pairs = generate_pair_set(&w, a.n, a.seed)?;
            write_jsonl(&a.out, &pairs)?;
            pairs.len()
        }
        kind => {
            let samples = match kind {
                DataKind::Train => generate_training_set(&w, a.n, a.seed)?,
                DataKind::Dep => generate_dependency_set(&w, a.n, a.seed)?,
                _ => generate_mixed_set(&w, a.n, a.seed)?,
            };
            write_jsonl(&a.out, &samples)?;
            samples.len()
        }
    };
    if let Some(path) = &a.vocab_out {
        build_vocabulary(&w)?.save(path)?;
    }
    write_resolved(
        &a.out,
        "gen-data",
        json!({ "kind": format!("{:?}", a.kind).to_lowercase(), "n": a.n, "seed": a.seed, "world": w }),
    )?;
    println!("wrote {n} records to {}", a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let w = world(a.world.as_deref())?;
    let vocab = build_vocabulary(&w)?;
    let cfg: TrainConfig = load_config(a.config.as_deref())?;
    let mut mc: ModelConfig = load_config(a.model_config.as_deref())?;
    mc.vocab_size = vocab.len();
    let samples: Vec<Sample> = read_jsonl(&a.data)?;
    for (i, s) in samples.iter().enumerate() {
        verify_sample(&w, s).with_context(|| format!("{} record {}", a.data.display(), i + 1))?;
    }
    let (train_set, val_set) = split_train_val(&samples);
    log::info!(
        "training on {} samples, validating on {}",
        train_set.len(),
        val_set.len()
    );
    let model = Model::<f32>::new(mc.clone())?;
    let outcome = train_on(train_set, val_set, &vocab, model, &cfg, |row| {
        if row.step % 50 == 0 {
            log::info!(
                "step {} lr {:.2e} loss {:.4}",
                row.step,
                row.lr,
                row.total_loss
            );
        }
    })?;

    // Wall-clock throughput is left out so that equal runs give equal checkpoints.
    let mut validation = serde_json::to_value(&outcome.validation)?;
    if let Some(v) = validation.as_object_mut() {
        v.remove("throughput");
    }
    let meta =
        json!({ "train": cfg, "world": w, "steps": outcome.steps, "validation": validation });
    save_checkpoint(&a.out, &outcome.model, &vocab, meta)?;
    let history = a
        .history
        .clone()
        .unwrap_or_else(|| sibling(&a.out, "history.csv"));
    write_csv(&history, &outcome.history)?;
    write_resolved(
        &a.out,
        "train",
        json!({ "data": a.data, "train": cfg, "model": mc, "world": w, "history": history }),
    )?;
    match &outcome.validation {
        Some(r) => println!(
            "trained {} steps; validation acc_property {:.4} acc_sample {:.4}",
            outcome.steps, r.acc_property, r.acc_sample
        ),
        None => println!("trained {} steps", outcome.steps),
    }
    Ok(())
}

#[derive(Serialize)]
struct PositionRow {
    position: usize,
    accuracy: f64,
}

fn evaluate(a: &EvalArgs) -> Result<EvalReport> {
    let ck = load_ckpt(&a.ckpt)?;
    let samples: Vec<Sample> = read_jsonl(&a.data)?;
    let (mut report, _) = evaluate_samples(&ck.model, &ck.vocab, &samples, a.mode)?;
    if let Some(p) = &a.pairs {
        let pairs: Vec<PairSample> = read_jsonl(p)?;
        let (rank, _) = evaluate_pairs(&ck.model, &ck.vocab, &pairs)?;
        report = report.with_ranking(rank.error_rank, rank.tie_rate)?;
    }
    Ok(report)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let report = evaluate(a)?;
    write_json(&a.out, &report)?;
    let positions: Vec<PositionRow> = report
        .per_position_accuracy
        .iter()
        .enumerate()
        .map(|(i, &accuracy)| PositionRow {
            position: i + 1,
            accuracy,
        })
        .collect();
    write_csv(
        &a.positions
            .clone()
            .unwrap_or_else(|| sibling(&a.out, "positions.csv")),
        &positions,
    )?;
    write_resolved(
        &a.out,
        "eval",
        json!({ "ckpt": a.ckpt, "data": a.data, "pairs": a.pairs, "mode": a.mode }),
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct JudgeRecord {
    decisions: Vec<slotjudge::Answer>,
    p_yes: Vec<f64>,
    passes: usize,
    wall_ms: f64,
}

pub fn judge(a: &JudgeArgs) -> Result<()> {
    let ck = load_ckpt(&a.ckpt)?;
    let samples: Vec<Sample> = read_jsonl(&a.input)?;
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let scene = s
            .scene
            .to_tokens(&ck.vocab)
            .with_context(|| format!("record {}", i + 1))?;
        let set = judge_one(&ck.model, &ck.vocab, &requirements_of(s), &scene, a.mode)
            .with_context(|| format!("record {}", i + 1))?;
        if a.mode == JudgeMode::Single && set.n_forward_passes != 1 {
            return Err(InvariantViolation(format!(
                "single-pass judging used {} passes",
                set.n_forward_passes
            ))
            .into());
        }
        out.push(JudgeRecord {
            decisions: set.decisions(),
            p_yes: set.p_yes(),
            passes: set.n_forward_passes,
            wall_ms: set.wall_time.as_secs_f64() * 1e3,
        });
    }
    write_jsonl(&a.out, &out)?;
    write_resolved(
        &a.out,
        "judge",
        json!({ "ckpt": a.ckpt, "input": a.input, "mode": a.mode }),
    )?;
    println!("judged {} records", out.len());
    Ok(())
}

#[derive(Serialize)]
struct RerankRow {
    pair: usize,
    label: PairLabel,
    predicted: PairLabel,
    score_1: f64,
    score_2: f64,
    tie: bool,
}

fn rerank_rows(a: &RerankArgs) -> Result<(f64, Vec<RerankRow>)> {
    let ck = load_ckpt(&a.ckpt)?;
    let pairs: Vec<PairSample> = read_jsonl(&a.pairs)?;
    let (report, outcomes) = evaluate_pairs(&ck.model, &ck.vocab, &pairs)?;
    let rows = pairs
        .iter()
        .zip(&outcomes)
        .enumerate()
        .map(|(i, (p, o))| RerankRow {
            pair: i + 1,
            label: p.label,
            predicted: o.decision.predicted,
            score_1: o.decision.score_1,
            score_2: o.decision.score_2,
            tie: o.decision.tie,
        })
        .collect();
    Ok((report.error_rank, rows))
}

pub fn rerank(a: &RerankArgs) -> Result<()> {
    let (error_rank, rows) = rerank_rows(a)?;
    write_csv(&a.out, &rows)?;
    write_resolved(
        &a.out,
        "rerank",
        json!({ "ckpt": a.ckpt, "pairs": a.pairs }),
    )?;
    let ties = rows.iter().filter(|r| r.tie).count();
    println!(
        "error_rank {error_rank:.4} over {} pairs ({ties} ties)",
        rows.len()
    );
    Ok(())
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let ck = load_ckpt(&a.ckpt)?;
    let w = world(a.world.as_deref())?;
    if build_vocabulary(&w)?.hash() != ck.vocab.hash() {
        bail!("checkpoint vocabulary does not match the world configuration");
    }
    let cfg = BenchConfig {
        n_requirements: a.n.clone(),
        repeats: a.repeats,
        samples: a.samples,
        seed: a.seed,
    };
    let rows = run_bench(&ck.model, &ck.vocab, &w, &cfg)?;
    for r in rows.iter().filter(|r| r.mode == JudgeMode::Single) {
        if r.passes != 1.0 {
            return Err(InvariantViolation(format!(
                "single-pass mode used {} passes at N={}",
                r.passes, r.n
            ))
            .into());
        }
    }
    write_csv(&a.out, &rows)?;
    write_resolved(
        &a.out,
        "bench",
        json!({ "ckpt": a.ckpt, "bench": cfg, "world": w }),
    )?;
    print!("{}", format_table(&rows));
    Ok(())
}

/// Accuracy needed by the smoke run, comfortably above the 0.5 of guessing.
const SMOKE_MIN_ACC: f64 = 0.6;

/// Reduced world that a small model picks up within a few thousand samples.
fn smoke_world() -> WorldConfig {
    let words = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
    WorldConfig {
        categories: words(&["circle", "square", "triangle"]),
        colors: words(&["red", "blue", "green"]),
        sizes: words(&["small", "large"]),
        patterns: words(&["plain", "striped"]),
        max_objects: 3,
        properties_per_sample: 4,
        ..WorldConfig::default()
    }
}

pub fn e2e(a: &E2eArgs) -> Result<()> {
    std::fs::create_dir_all(&a.dir).with_context(|| format!("creating {}", a.dir.display()))?;
    let p = |name: &str| a.dir.join(name);
    let world_path = p("world.json");
    write_json(&world_path, &smoke_world())?;
    let train_cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 8,
        eval_every: 0,
        seed: a.seed,
        ..TrainConfig::default()
    };
    write_json(&p("train.json"), &train_cfg)?;
    let model_cfg = ModelConfig {
        d_model: 64,
        n_layers: 2,
        n_heads: 4,
        d_ff: 256,
        context_len: 256,
        init_std: 0.05,
        seed: a.seed,
        ..ModelConfig::default()
    };
    write_json(&p("model.json"), &model_cfg)?;

    for (kind, n, seed, name) in [
        (DataKind::Train, a.samples, a.seed, "train.jsonl"),
        (DataKind::Train, 300, a.seed + 1, "test.jsonl"),
        (DataKind::Pairs, 200, a.seed + 2, "pairs.jsonl"),
    ] {
        gen_data(&GenDataArgs {
            kind,
            n,
            seed,
            world: Some(world_path.clone()),
            out: p(name),
            vocab_out: None,
        })?;
    }
    train(&TrainArgs {
        data: p("train.jsonl"),
        config: Some(p("train.json")),
        model_config: Some(p("model.json")),
        world: Some(world_path.clone()),
        out: p("model.ckpt"),
        history: None,
    })?;
    let eval_args = EvalArgs {
        ckpt: p("model.ckpt"),
        data: p("test.jsonl"),
        pairs: Some(p("pairs.jsonl")),
        mode: JudgeMode::Single,
        out: p("eval.json"),
        positions: None,
    };
    let report = evaluate(&eval_args)?;
    write_json(&eval_args.out, &report)?;
    let (_, rows) = rerank_rows(&RerankArgs {
        ckpt: p("model.ckpt"),
        pairs: p("pairs.jsonl"),
        out: p("rerank.csv"),
    })?;
    write_csv(&p("rerank.csv"), &rows)?;
    bench(&BenchArgs {
        ckpt: p("model.ckpt"),
        n: vec![1, 2, 5, 10],
        repeats: 2,
        samples: 2,
        seed: a.seed,
        world: Some(world_path),
        out: p("bench.csv"),
    })?;

    // Timing-free summary, identical across runs with the same seed.
    let summary = json!({
        "seed": a.seed,
        "acc_property": report.acc_property,
        "acc_sample": report.acc_sample,
        "error_rank": report.error_rank,
        "tie_rate": report.tie_rate,
        "per_position_accuracy": report.per_position_accuracy,
    });
    write_json(&p("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if report.acc_property <= SMOKE_MIN_ACC {
        return Err(InvariantViolation(format!(
            "smoke accuracy {:.4} is not above {SMOKE_MIN_ACC}",
            report.acc_property
        ))
        .into());
    }
    Ok(())
}
