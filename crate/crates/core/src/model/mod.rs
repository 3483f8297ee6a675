//! Decoder-only causal transformer.
//!
//! Pre-norm blocks (LayerNorm → attention → residual, LayerNorm → GELU MLP →
//! residual), learned absolute positions, final LayerNorm and an untied output
//! projection to vocabulary logits. Parameters live in one flat buffer described
//! by a [`ParamLayout`], which keeps the optimizer and gradient accumulation
//! trivial. The network is generic over [`Scalar`] so gradient checks can run in
//! double precision while training runs in single precision.

mod backward;
mod checkpoint;
mod forward;
mod params;

use std::fmt::{Debug, Display};
use std::sync::Arc;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumAssign};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backward::Gradients;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{Activations, KvCache};
pub use params::{LayerSlots, ParamLayout, TensorSpec};

use crate::vocab::TokenId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds context length {max}")]
    Overlength { len: usize, max: usize },
    #[error("token id {id} is out of range for vocabulary size {vocab}")]
    InvalidToken { id: u32, vocab: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache does not belong to this model: {0}")]
    CacheMismatch(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Floating-point element type of the network.
pub trait Scalar:
    Float
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Send
    + Sync
    + Debug
    + Display
    + std::iter::Sum
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub(crate) fn cst<T: Scalar>(x: f64) -> T {
    T::from(x).expect("constant representable")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub context_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Standard deviation of the normal initialization of weight matrices.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_layers: 4,
            n_heads: 4,
            d_ff: 512,
            context_len: 512,
            vocab_size: 0,
            seed: 0,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    pub fn with_vocab(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return err("d_model must be a positive multiple of n_heads");
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.context_len == 0 {
            return err("n_layers, d_ff and context_len must be positive");
        }
        if self.vocab_size == 0 {
            return err("vocab_size must be positive");
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return err("init_std must be positive");
        }
        Ok(())
    }
}

/// Next-token logits, one row of `vocab` entries per input position.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsGrid<T> {
    vocab: usize,
    data: Vec<T>,
}

impl<T: Scalar> LogitsGrid<T> {
    pub fn zeros(len: usize, vocab: usize) -> Self {
        Self {
            vocab,
            data: vec![T::zero(); len * vocab],
        }
    }

    pub fn from_vec(vocab: usize, data: Vec<T>) -> Result<Self, ModelError> {
        if vocab == 0 || data.len() % vocab != 0 {
            return Err(ModelError::Shape(format!(
                "{} values do not form rows of {vocab}",
                data.len()
            )));
        }
        Ok(Self { vocab, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.vocab
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, pos: usize) -> &[T] {
        &self.data[pos * self.vocab..(pos + 1) * self.vocab]
    }

    pub fn row_mut(&mut self, pos: usize) -> &mut [T] {
        &mut self.data[pos * self.vocab..(pos + 1) * self.vocab]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.vocab)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = out.iter().copied().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// `log Σ exp(logits)`.
pub fn log_sum_exp<T: Scalar>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln()
}

/// Transformer weights over a flat parameter buffer.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    layout: Arc<ParamLayout>,
    params: Vec<T>,
}

impl<T: Scalar> Model<T> {
    /// Seeded initialization: N(0, init_std) for embeddings and weight matrices,
    /// zero biases, unit LayerNorm gains.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Arc::new(ParamLayout::new(&config));
        let mut params = vec![T::zero(); layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).expect("valid std");
        for spec in layout.specs() {
            let slot = &mut params[spec.range()];
            if spec.is_gain() {
                slot.fill(T::one());
            } else if spec.is_matrix() {
                for p in slot.iter_mut() {
                    *p = cst(normal.sample(&mut rng));
                }
            }
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Arc::new(ParamLayout::new(&config));
        if params.len() != layout.total() {
            return Err(ModelError::Shape(format!(
                "expected {} parameters, got {}",
                layout.total(),
                params.len()
            )));
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Same weights in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            layout: Arc::clone(&self.layout),
            params: self
                .params
                .iter()
                .map(|p| U::from(*p).expect("finite parameter"))
                .collect(),
        }
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients::zeros(self.params.len())
    }

    pub(crate) fn check_tokens(&self, ids: &[TokenId], past: usize) -> Result<(), ModelError> {
        let len = past + ids.len();
        if len > self.config.context_len {
            return Err(ModelError::Overlength {
                len,
                max: self.config.context_len,
            });
        }
        if let Some(bad) = ids.iter().find(|t| t.index() >= self.config.vocab_size) {
            return Err(ModelError::InvalidToken {
                id: bad.0,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }
}
