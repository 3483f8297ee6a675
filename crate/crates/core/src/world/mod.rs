//! Synthetic scenes, oracle-labelled requirements and the data files built from them.

mod config;
mod generate;
mod requirement;
mod scene;

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{AttrKind, FormWeights, WorldConfig, DEPENDENCY_TEXT};
pub use generate::{
    generate_dependency_set, generate_mixed_set, generate_pair_set, generate_training_set,
    generate_with_count,
};
pub use requirement::{oracle_eval, Predicate, Selector};
pub use scene::{Object, Scene, OBJECT_WIDTH};

use crate::Answer;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("world configuration error: {0}")]
    Config(String),
    #[error("world too small: {0}")]
    TooSmall(String),
    #[error("malformed requirement {text:?}: {why}")]
    Requirement { text: String, why: String },
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One requirement with optional gold answer and reason, as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Property {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<Answer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Property {
    pub fn is_dependency(&self) -> bool {
        self.text == DEPENDENCY_TEXT
    }
}

/// Training record: a scene with its properties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub scene: Scene,
    pub properties: Vec<Property>,
}

impl Sample {
    pub fn has_dependency(&self) -> bool {
        self.properties.iter().any(Property::is_dependency)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    First,
    Second,
}

impl std::ops::Not for PairLabel {
    type Output = PairLabel;
    fn not(self) -> PairLabel {
        match self {
            PairLabel::First => PairLabel::Second,
            PairLabel::Second => PairLabel::First,
        }
    }
}

/// Reranking test record: which of two scenes better satisfies the requirements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub scene_1: Scene,
    pub scene_2: Scene,
    pub requirements: Vec<String>,
    pub expression: String,
    pub label: PairLabel,
}

impl PairSample {
    pub fn swapped(self) -> PairSample {
        PairSample {
            scene_1: self.scene_2,
            scene_2: self.scene_1,
            label: !self.label,
            ..self
        }
    }

    /// Scenes share a category with each other.
    pub fn shares_category(&self) -> bool {
        self.scene_1.objects.iter().any(|a| {
            self.scene_2
                .objects
                .iter()
                .any(|b| a.category == b.category)
        })
    }
}

/// Oracle answers for every property, resolving dependency properties against
/// the preceding answer.
pub fn oracle_answers(
    cfg: &WorldConfig,
    scene: &Scene,
    properties: &[Property],
) -> Result<Vec<Answer>, WorldError> {
    let mut out: Vec<Answer> = Vec::with_capacity(properties.len());
    for p in properties {
        let a = if p.is_dependency() {
            let prev = out.last().ok_or_else(|| {
                WorldError::Malformed("dependency property has no predecessor".into())
            })?;
            !*prev
        } else {
            oracle_eval(cfg, scene, &p.text)?
        };
        out.push(a);
    }
    Ok(out)
}

/// Re-derives every label in a sample from the oracle.
pub fn verify_sample(cfg: &WorldConfig, sample: &Sample) -> Result<(), WorldError> {
    sample.scene.validate(cfg)?;
    let truth = oracle_answers(cfg, &sample.scene, &sample.properties)?;
    for (p, t) in sample.properties.iter().zip(truth) {
        match p.answer {
            Some(a) if a != t => {
                return Err(WorldError::LabelMismatch(format!(
                    "{:?} labelled {a:?}, oracle says {t:?}",
                    p.text
                )))
            }
            None => {
                return Err(WorldError::LabelMismatch(format!(
                    "{:?} has no label",
                    p.text
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), WorldError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| WorldError::Malformed(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, WorldError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| WorldError::Record {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
