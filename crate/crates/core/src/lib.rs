//! Template-conditioned compositional judging with a small causal transformer.
//!
//! A scene and N requirements are laid out in one token sequence where every
//! requirement ends with an answer slot holding the `UNKNOWN` placeholder. A
//! single forward pass yields next-token logits at every position; the logits
//! right before each slot are read out and binarized into yes/no decisions.
//!
//! - [`vocab`]: closed word-level vocabulary with reserved span tokens.
//! - [`world`]: synthetic scenes, the requirement grammar and its oracle.
//! - [`template`]: slot layout, readout positions and supervision targets.
//! - [`model`]: decoder-only transformer with analytic gradients and a KV cache.
//! - [`train`]: answer and reason losses, AdamW, warmup-cosine schedule.
//! - [`judge`]: single-pass readout plus autoregressive and isolated baselines.
//! - [`rankexpr`]: score-expression language and pairwise reranking.
//! - [`metrics`]: property, sample, dependency and ranking accuracies.
//! - [`bench`]: pass-count and wall-clock comparison of the judging modes.

pub mod bench;
mod error;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod rankexpr;
pub mod template;
pub mod train;
pub mod vocab;
pub mod world;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Binary judgment of one requirement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn from_bool(b: bool) -> Answer {
        if b {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Answer::Yes
    }

    /// yes ↦ 1.0, no ↦ 0.0
    pub fn as_f64(self) -> f64 {
        if self.is_yes() {
            1.0
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "yes",
            Answer::No => "no",
        }
    }
}

impl std::ops::Not for Answer {
    type Output = Answer;
    fn not(self) -> Answer {
        Answer::from_bool(!self.is_yes())
    }
}
