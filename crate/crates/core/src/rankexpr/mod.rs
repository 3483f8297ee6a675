//! Score expressions over requirement judgments and pairwise reranking.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor ("*" factor)*
//! factor := NUMBER | VAR | "(" expr ")" | "not" "(" expr ")"
//!         | ("min" | "max") "(" expr "," expr ")"
//! NUMBER := digits ["." digits]
//! VAR    := "r" digits           (1-based requirement index)
//! ```
//!
//! Judgments map yes ↦ 1 and no ↦ 0, and `not(x) = 1 − x`.

mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{judge_single_pass, JudgmentSet};
use crate::model::Model;
use crate::template::{assemble, Requirement, TemplateMode};
use crate::vocab::Vocabulary;
use crate::world::{PairLabel, PairSample, Scene};
use crate::Answer;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("variable r{index} is out of range 1..={m}")]
    Bind { index: usize, m: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// `r<k>`, 1-based.
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) => 2,
            _ => 3,
        }
    }

    fn eval(&self, v: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Num(x) => *x,
            Expr::Var(k) => match k.checked_sub(1).and_then(|i| v.get(i)) {
                Some(x) => *x,
                None => {
                    return Err(ExprError::Bind {
                        index: *k,
                        m: v.len(),
                    })
                }
            },
            Expr::Add(a, b) => a.eval(v)? + b.eval(v)?,
            Expr::Sub(a, b) => a.eval(v)? - b.eval(v)?,
            Expr::Mul(a, b) => a.eval(v)? * b.eval(v)?,
            Expr::Not(a) => 1.0 - a.eval(v)?,
            Expr::Min(a, b) => a.eval(v)?.min(b.eval(v)?),
            Expr::Max(a, b) => a.eval(v)?.max(b.eval(v)?),
        })
    }

    /// Every variable index that occurs, in order of appearance.
    pub fn variables(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Var(k) = e {
                out.push(*k);
            }
        });
        out
    }

    fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Not(a) => a.walk(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }
}

/// Prints with the fewest parentheses that re-parse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool| {
            if wrap {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(x) => write!(f, "{x}"),
            Expr::Var(k) => write!(f, "r{k}"),
            Expr::Not(a) => write!(f, "not({a})"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                let op = match self {
                    Expr::Add(..) => " + ",
                    Expr::Sub(..) => " - ",
                    _ => "*",
                };
                let p = self.precedence();
                side(f, a, a.precedence() < p)?;
                f.write_str(op)?;
                side(f, b, b.precedence() <= p)
            }
        }
    }
}

/// A parsed score expression together with its source text.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreExpression {
    source: String,
    tree: Expr,
}

impl ScoreExpression {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        Ok(Self {
            source: source.to_string(),
            tree: parse::parse(source)?,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn tree(&self) -> &Expr {
        &self.tree
    }

    /// Largest variable index, 0 for constant expressions.
    pub fn max_index(&self) -> usize {
        self.tree.variables().into_iter().max().unwrap_or(0)
    }

    /// Checks that every variable lies in `1..=m`.
    pub fn bind(&self, m: usize) -> Result<(), ExprError> {
        match self.tree.variables().into_iter().find(|&k| k == 0 || k > m) {
            Some(index) => Err(ExprError::Bind { index, m }),
            None => Ok(()),
        }
    }

    pub fn evaluate(&self, judgments: &[Answer]) -> Result<f64, ExprError> {
        let v: Vec<f64> = judgments.iter().map(|a| a.as_f64()).collect();
        self.evaluate_values(&v)
    }

    /// Evaluates with arbitrary real-valued inputs.
    pub fn evaluate_values(&self, values: &[f64]) -> Result<f64, ExprError> {
        self.bind(values.len())?;
        self.tree.eval(values)
    }
}

impl fmt::Display for ScoreExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.tree.fmt(f)
    }
}

/// Outcome of comparing two scenes under one expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDecision {
    pub predicted: PairLabel,
    pub score_1: f64,
    pub score_2: f64,
    pub tie: bool,
}

/// `first` iff `score_1 > score_2`; ties go to `second` and are flagged.
pub fn decide_pair(
    expr: &ScoreExpression,
    judgments_1: &[Answer],
    judgments_2: &[Answer],
) -> Result<PairDecision, ExprError> {
    let score_1 = expr.evaluate(judgments_1)?;
    let score_2 = expr.evaluate(judgments_2)?;
    let predicted = if score_1 > score_2 {
        PairLabel::First
    } else {
        PairLabel::Second
    };
    Ok(PairDecision {
        predicted,
        score_1,
        score_2,
        tie: score_1 == score_2,
    })
}

#[derive(Clone, Debug)]
pub struct RerankOutcome {
    pub decision: PairDecision,
    pub judgments_1: JudgmentSet,
    pub judgments_2: JudgmentSet,
}

fn judge_scene(
    model: &Model<f32>,
    vocab: &Vocabulary,
    scene: &Scene,
    reqs: &[Requirement],
) -> crate::Result<JudgmentSet> {
    let scene = scene.to_tokens(vocab)?;
    let t = assemble(
        reqs,
        &scene,
        TemplateMode::Inference,
        vocab,
        model.config().context_len,
    )?;
    judge_single_pass(model, vocab, &t)
}

/// Judges both scenes in one pass each and ranks them by the pair's expression.
pub fn rerank_pair(
    model: &Model<f32>,
    vocab: &Vocabulary,
    pair: &PairSample,
) -> crate::Result<RerankOutcome> {
    let expr = ScoreExpression::parse(&pair.expression)?;
    expr.bind(pair.requirements.len())?;
    let reqs: Vec<Requirement> = pair
        .requirements
        .iter()
        .map(|r| Requirement::literal(r))
        .collect();
    let judgments_1 = judge_scene(model, vocab, &pair.scene_1, &reqs)?;
    let judgments_2 = judge_scene(model, vocab, &pair.scene_2, &reqs)?;
    let decision = decide_pair(&expr, &judgments_1.decisions(), &judgments_2.decisions())?;
    Ok(RerankOutcome {
        decision,
        judgments_1,
        judgments_2,
    })
}
