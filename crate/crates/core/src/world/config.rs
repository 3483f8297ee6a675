use serde::{Deserialize, Serialize};

use super::WorldError;

/// Fixed text of the requirement whose answer negates the previous one.
pub const DEPENDENCY_TEXT: &str =
    "the answer to this question is the opposite of the answer to the previous question";

/// Grammar and reason words, in vocabulary order. Digits are appended separately.
pub(crate) const FUNCTION_WORDS: [&str; 16] = [
    "no", "object", "at", "least", "and", "the", "scene", "has", "answer", "to", "this",
    "question", "is", "opposite", "of", "previous",
];

/// Object attribute classes. Every object carries exactly one value of each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttrKind {
    Category,
    Color,
    Size,
    Pattern,
}

impl AttrKind {
    pub const ALL: [AttrKind; 4] = [
        AttrKind::Category,
        AttrKind::Color,
        AttrKind::Size,
        AttrKind::Pattern,
    ];
    /// Attributes that can qualify a category in a requirement ("red circle").
    pub const MODIFIERS: [AttrKind; 3] = [AttrKind::Color, AttrKind::Size, AttrKind::Pattern];
}

/// Relative frequency of each requirement form in generated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormWeights {
    pub exists: f64,
    pub exists_on_category: f64,
    pub absent: f64,
    pub at_least: f64,
    pub both: f64,
}

impl Default for FormWeights {
    fn default() -> Self {
        Self {
            exists: 0.25,
            exists_on_category: 0.3,
            absent: 0.25,
            at_least: 0.1,
            both: 0.1,
        }
    }
}

impl FormWeights {
    pub(crate) fn as_array(&self) -> [f64; 5] {
        [
            self.exists,
            self.exists_on_category,
            self.absent,
            self.at_least,
            self.both,
        ]
    }
}

/// Everything the synthetic world can contain, plus generator knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub categories: Vec<String>,
    pub colors: Vec<String>,
    pub sizes: Vec<String>,
    pub patterns: Vec<String>,
    pub min_objects: usize,
    pub max_objects: usize,
    pub count_thresholds: Vec<u32>,
    /// Target number of properties per training sample.
    pub properties_per_sample: usize,
    /// Per-sample property count is drawn uniformly from `target ± jitter`.
    pub property_jitter: usize,
    pub form_weights: FormWeights,
    /// Fraction of dependency samples when mixing with literal samples.
    pub dependency_ratio: f64,
    pub pair_min_requirements: usize,
    pub pair_max_requirements: usize,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            categories: words(&["circle", "square", "triangle", "star", "heart", "hexagon"]),
            colors: words(&["red", "blue", "green", "yellow", "purple", "orange"]),
            sizes: words(&["small", "medium", "large"]),
            patterns: words(&["plain", "striped", "dotted"]),
            min_objects: 1,
            max_objects: 6,
            count_thresholds: vec![2, 3],
            properties_per_sample: 10,
            property_jitter: 0,
            form_weights: FormWeights::default(),
            dependency_ratio: 0.5,
            pair_min_requirements: 2,
            pair_max_requirements: 6,
        }
    }
}

impl WorldConfig {
    /// A world with no attribute values at all.
    pub fn empty() -> Self {
        Self {
            categories: Vec::new(),
            colors: Vec::new(),
            sizes: Vec::new(),
            patterns: Vec::new(),
            ..Self::default()
        }
    }

    pub fn values(&self, kind: AttrKind) -> &[String] {
        match kind {
            AttrKind::Category => &self.categories,
            AttrKind::Color => &self.colors,
            AttrKind::Size => &self.sizes,
            AttrKind::Pattern => &self.patterns,
        }
    }

    pub fn is_empty(&self) -> bool {
        AttrKind::ALL.iter().all(|k| self.values(*k).is_empty())
    }

    /// Which attribute class a word belongs to, if any.
    pub fn kind_of(&self, word: &str) -> Option<AttrKind> {
        AttrKind::ALL
            .into_iter()
            .find(|k| self.values(*k).iter().any(|v| v == word))
    }

    pub(crate) fn max_digit(&self) -> u32 {
        let thresholds = self.count_thresholds.iter().copied().max().unwrap_or(0);
        thresholds.max(self.max_objects as u32)
    }

    /// Every word the scene, requirement, reason and dependency generators can emit,
    /// in a fixed order: function words, digits, then attribute values by class.
    pub fn emitted_words(&self) -> Vec<String> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<String> = FUNCTION_WORDS.iter().map(|w| w.to_string()).collect();
        out.extend((0..=self.max_digit()).map(|d| d.to_string()));
        for kind in AttrKind::ALL {
            out.extend(self.values(kind).iter().cloned());
        }
        out
    }

    /// Checks generator knobs. Word collisions are checked when building a vocabulary.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(WorldError::Config(format!(
                "object count range {}..={} is invalid",
                self.min_objects, self.max_objects
            )));
        }
        if self.max_objects > 9 {
            return Err(WorldError::Config(
                "at most 9 objects per scene are supported".into(),
            ));
        }
        if self.count_thresholds.iter().any(|&k| k < 2) {
            return Err(WorldError::Config(
                "count thresholds must be at least 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.dependency_ratio) {
            return Err(WorldError::Config(
                "dependency_ratio must lie in [0, 1]".into(),
            ));
        }
        if self.pair_min_requirements == 0
            || self.pair_min_requirements > self.pair_max_requirements
        {
            return Err(WorldError::Config(
                "pair requirement range is invalid".into(),
            ));
        }
        if self
            .form_weights
            .as_array()
            .iter()
            .any(|w| *w < 0.0 || !w.is_finite())
            || self.form_weights.as_array().iter().sum::<f64>() <= 0.0
        {
            return Err(WorldError::Config(
                "form weights must be nonnegative with a positive sum".into(),
            ));
        }
        Ok(())
    }
}
