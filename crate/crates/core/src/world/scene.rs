use serde::{Deserialize, Serialize};

use super::{AttrKind, WorldConfig, WorldError};
use crate::vocab::{Special, TokenId, Vocabulary};

/// Words per serialized object: size, color, pattern, category.
pub const OBJECT_WIDTH: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Object {
    pub category: String,
    pub color: String,
    pub size: String,
    pub pattern: String,
}

impl Object {
    pub fn value(&self, kind: AttrKind) -> &str {
        match kind {
            AttrKind::Category => &self.category,
            AttrKind::Color => &self.color,
            AttrKind::Size => &self.size,
            AttrKind::Pattern => &self.pattern,
        }
    }

    /// Serialization order, also used by reason sentences ("small red plain circle").
    pub fn words(&self) -> [&str; OBJECT_WIDTH] {
        [&self.size, &self.color, &self.pattern, &self.category]
    }
}

/// Discrete stand-in for an image: a list of attributed objects.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<Object>,
}

impl Scene {
    pub fn words(&self) -> Vec<&str> {
        self.objects.iter().flat_map(|o| o.words()).collect()
    }

    /// `SCENE_START`, object words, `SCENE_END`.
    pub fn to_tokens(&self, vocab: &Vocabulary) -> Result<Vec<TokenId>, crate::vocab::VocabError> {
        let mut ids = Vec::with_capacity(self.objects.len() * OBJECT_WIDTH + 2);
        ids.push(vocab.special(Special::SceneStart));
        for w in self.words() {
            ids.push(vocab.id(w)?);
        }
        ids.push(vocab.special(Special::SceneEnd));
        Ok(ids)
    }

    pub fn from_tokens(vocab: &Vocabulary, ids: &[TokenId]) -> Result<Scene, WorldError> {
        let malformed = |m: &str| WorldError::Malformed(format!("scene tokens: {m}"));
        let (first, rest) = ids.split_first().ok_or_else(|| malformed("empty"))?;
        let (last, body) = rest
            .split_last()
            .ok_or_else(|| malformed("missing end marker"))?;
        if *first != vocab.special(Special::SceneStart) || *last != vocab.special(Special::SceneEnd)
        {
            return Err(malformed("missing scene markers"));
        }
        if body.len() % OBJECT_WIDTH != 0 {
            return Err(malformed("object block length is not a multiple of 4"));
        }
        let objects = body
            .chunks(OBJECT_WIDTH)
            .map(|c| {
                let w = vocab
                    .decode(c)
                    .map_err(|e| WorldError::Malformed(e.to_string()))?;
                Ok(Object {
                    size: w[0].clone(),
                    color: w[1].clone(),
                    pattern: w[2].clone(),
                    category: w[3].clone(),
                })
            })
            .collect::<Result<Vec<_>, WorldError>>()?;
        Ok(Scene { objects })
    }

    /// Object count and every attribute value must come from the world.
    pub fn validate(&self, cfg: &WorldConfig) -> Result<(), WorldError> {
        let n = self.objects.len();
        if n < cfg.min_objects || n > cfg.max_objects {
            return Err(WorldError::Malformed(format!(
                "scene has {n} objects, expected {}..={}",
                cfg.min_objects, cfg.max_objects
            )));
        }
        for o in &self.objects {
            for kind in AttrKind::ALL {
                let v = o.value(kind);
                if !cfg.values(kind).iter().any(|x| x == v) {
                    return Err(WorldError::Malformed(format!(
                        "{v:?} is not a valid {kind:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}
