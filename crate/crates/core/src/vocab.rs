//! Closed word-level vocabulary for the synthetic world.
//!
//! Index order is part of the checkpoint contract: the ten reserved tokens come
//! first in [`Special::ALL`] order, followed by the words emitted by the world
//! generator in [`WorldConfig::emitted_words`] order.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::world::WorldConfig;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),
    #[error("token id {0} is out of range for vocabulary of size {1}")]
    InvalidId(u32, usize),
    #[error("vocabulary configuration error: {0}")]
    Config(String),
    #[error("malformed vocabulary file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Index into a [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Reserved tokens. Span markers delimit answer and reason fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Special {
    AuthStart,
    AuthEnd,
    ReasonStart,
    ReasonEnd,
    Unknown,
    Yes,
    No,
    SceneStart,
    SceneEnd,
    Pad,
}

impl Special {
    pub const ALL: [Special; 10] = [
        Special::AuthStart,
        Special::AuthEnd,
        Special::ReasonStart,
        Special::ReasonEnd,
        Special::Unknown,
        Special::Yes,
        Special::No,
        Special::SceneStart,
        Special::SceneEnd,
        Special::Pad,
    ];

    /// Surface string of the token.
    pub fn text(self) -> &'static str {
        match self {
            Special::AuthStart => "<|auth_start|>",
            Special::AuthEnd => "<|auth_end|>",
            Special::ReasonStart => "<|reason_start|>",
            Special::ReasonEnd => "<|reason_end|>",
            Special::Unknown => "<|unknown|>",
            Special::Yes => "<|yes|>",
            Special::No => "<|no|>",
            Special::SceneStart => "<|scene_start|>",
            Special::SceneEnd => "<|scene_end|>",
            Special::Pad => "<|pad|>",
        }
    }

    /// Key used in the `reserved` map of the vocabulary file.
    pub fn key(self) -> &'static str {
        match self {
            Special::AuthStart => "AUTH_START",
            Special::AuthEnd => "AUTH_END",
            Special::ReasonStart => "REASON_START",
            Special::ReasonEnd => "REASON_END",
            Special::Unknown => "UNKNOWN",
            Special::Yes => "YES",
            Special::No => "NO",
            Special::SceneStart => "SCENE_START",
            Special::SceneEnd => "SCENE_END",
            Special::Pad => "PAD",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    reserved: [TokenId; 10],
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    reserved: std::collections::BTreeMap<String, u32>,
}

/// Builds the vocabulary for a world: reserved tokens, then every emitted word.
pub fn build_vocabulary(world: &WorldConfig) -> Result<Vocabulary, VocabError> {
    let mut tokens: Vec<String> = Special::ALL.iter().map(|s| s.text().to_string()).collect();
    let reserved_count = tokens.len();
    for word in world.emitted_words() {
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(VocabError::Config(format!(
                "word {word:?} must be nonempty and contain no whitespace"
            )));
        }
        if let Some(pos) = tokens.iter().position(|t| *t == word) {
            let what = if pos < reserved_count {
                "a reserved token"
            } else {
                "another world word"
            };
            return Err(VocabError::Config(format!(
                "word {word:?} collides with {what}"
            )));
        }
        tokens.push(word);
    }
    Vocabulary::from_tokens(tokens)
}

impl Vocabulary {
    /// Wraps an explicit token list whose first ten entries are the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), TokenId(i as u32)).is_some() {
                return Err(VocabError::Config(format!("duplicate token {t:?}")));
            }
        }
        let mut reserved = [TokenId(0); 10];
        for (slot, special) in reserved.iter_mut().zip(Special::ALL) {
            *slot = *index.get(special.text()).ok_or_else(|| {
                VocabError::Config(format!("missing reserved token {}", special.key()))
            })?;
        }
        Ok(Self {
            tokens,
            index,
            reserved,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    #[inline]
    pub fn special(&self, s: Special) -> TokenId {
        self.reserved[s as usize]
    }

    pub fn is_reserved(&self, id: TokenId) -> bool {
        self.reserved.contains(&id)
    }

    pub fn id(&self, word: &str) -> Result<TokenId, VocabError> {
        self.index
            .get(word)
            .copied()
            .ok_or_else(|| VocabError::UnknownWord(word.to_string()))
    }

    pub fn word(&self, id: TokenId) -> Result<&str, VocabError> {
        self.tokens
            .get(id.index())
            .map(String::as_str)
            .ok_or(VocabError::InvalidId(id.0, self.tokens.len()))
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<TokenId>, VocabError> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    /// Splits on whitespace and encodes.
    pub fn encode_text(&self, text: &str) -> Result<Vec<TokenId>, VocabError> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<Vec<String>, VocabError> {
        ids.iter()
            .map(|&id| self.word(id).map(str::to_string))
            .collect()
    }

    /// Hex SHA-256 over the canonical JSON form; checkpoints record it.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("vocabulary serializes")
    }

    fn to_file(&self) -> VocabFile {
        VocabFile {
            tokens: self.tokens.clone(),
            reserved: Special::ALL
                .iter()
                .map(|s| (s.key().to_string(), self.special(*s).0))
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, VocabError> {
        let file: VocabFile =
            serde_json::from_str(text).map_err(|e| VocabError::Format(e.to_string()))?;
        let vocab = Self::from_tokens(file.tokens)?;
        for special in Special::ALL {
            match file.reserved.get(special.key()) {
                Some(&idx) if idx == vocab.special(special).0 => {}
                Some(&idx) => {
                    return Err(VocabError::Format(format!(
                        "reserved {} recorded at {idx} but token sits at {}",
                        special.key(),
                        vocab.special(special)
                    )))
                }
                None => {
                    return Err(VocabError::Format(format!(
                        "reserved map lacks {}",
                        special.key()
                    )))
                }
            }
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), VocabError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
