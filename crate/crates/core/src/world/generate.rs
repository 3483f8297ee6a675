use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AttrKind, Object, PairLabel, PairSample, Predicate, Property, Sample, Scene, Selector,
    WorldConfig, WorldError, DEPENDENCY_TEXT,
};
use crate::rankexpr::ScoreExpression;
use crate::Answer;

const FORM_ATTEMPTS: usize = 64;
const PAIR_ATTEMPTS: usize = 256;

/// Per-item RNG: item `i` of a run seeded with `seed` always sees the same stream,
/// so any index range can be regenerated independently.
fn item_rng(seed: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(item);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Form {
    Exists,
    ExistsOnCategory,
    Absent,
    AtLeast,
    Both,
}

const FORMS: [Form; 5] = [
    Form::Exists,
    Form::ExistsOnCategory,
    Form::Absent,
    Form::AtLeast,
    Form::Both,
];

struct Sampler<'a> {
    cfg: &'a WorldConfig,
    rng: ChaCha8Rng,
    forms: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    fn new(cfg: &'a WorldConfig, rng: ChaCha8Rng) -> Result<Self, WorldError> {
        cfg.validate()?;
        for kind in AttrKind::ALL {
            if cfg.values(kind).is_empty() {
                return Err(WorldError::TooSmall(format!("no values for {kind:?}")));
            }
        }
        let forms = WeightedIndex::new(cfg.form_weights.as_array())
            .map_err(|e| WorldError::Config(format!("form weights: {e}")))?;
        Ok(Self { cfg, rng, forms })
    }

    fn pick(&mut self, kind: AttrKind) -> String {
        self.cfg
            .values(kind)
            .choose(&mut self.rng)
            .expect("nonempty attribute list")
            .clone()
    }

    fn object(&mut self) -> Object {
        Object {
            category: self.pick(AttrKind::Category),
            color: self.pick(AttrKind::Color),
            size: self.pick(AttrKind::Size),
            pattern: self.pick(AttrKind::Pattern),
        }
    }

    fn scene(&mut self) -> Scene {
        let n = self
            .rng
            .random_range(self.cfg.min_objects..=self.cfg.max_objects);
        Scene {
            objects: (0..n).map(|_| self.object()).collect(),
        }
    }

    /// Selector shaped by `with_modifier`/`with_category`, drawn half the time from
    /// an object in `pool` so positive answers are reachable.
    fn selector(&mut self, pool: &[&Object], with_modifier: bool, with_category: bool) -> Selector {
        let source = if !pool.is_empty() && self.rng.random_bool(0.5) {
            (*pool.choose(&mut self.rng).expect("nonempty")).clone()
        } else {
            self.object()
        };
        let modifier = with_modifier.then(|| {
            let kind = *AttrKind::MODIFIERS.choose(&mut self.rng).expect("nonempty");
            (kind, source.value(kind).to_string())
        });
        let category = with_category.then(|| source.category.clone());
        Selector { modifier, category }
    }

    fn any_selector(&mut self, pool: &[&Object]) -> Selector {
        match self.rng.random_range(0..3) {
            0 => self.selector(pool, false, true),
            1 => self.selector(pool, true, false),
            _ => self.selector(pool, true, true),
        }
    }

    fn bare_selector(&mut self, pool: &[&Object]) -> Selector {
        let modifier = self.rng.random_bool(0.5);
        let category = !modifier || self.rng.random_bool(0.5);
        self.selector(pool, modifier, category)
    }

    fn predicate(&mut self, form: Form, pool: &[&Object]) -> Predicate {
        match form {
            Form::Exists => {
                let modifier = self.rng.random_bool(0.5);
                Predicate::Exists(self.selector(pool, modifier, !modifier))
            }
            Form::ExistsOnCategory => Predicate::Exists(self.selector(pool, true, true)),
            Form::Absent => Predicate::Absent(self.any_selector(pool)),
            Form::AtLeast => {
                let k = *self
                    .cfg
                    .count_thresholds
                    .choose(&mut self.rng)
                    .unwrap_or(&2);
                Predicate::AtLeast(k, self.any_selector(pool))
            }
            Form::Both => {
                let a = self.bare_selector(pool);
                let mut b = self.bare_selector(pool);
                while b == a {
                    b = self.bare_selector(pool);
                }
                Predicate::Both(a, b)
            }
        }
    }

    fn random_form(&mut self) -> Form {
        FORMS[self.forms.sample(&mut self.rng)]
    }

    /// A requirement about `scene` whose oracle answer is `want`, not already in `taken`.
    fn predicate_with_answer(
        &mut self,
        scene: &Scene,
        want: Answer,
        taken: &[String],
    ) -> Option<Predicate> {
        let pool: Vec<&Object> = scene.objects.iter().collect();
        let first = self.random_form();
        let order = std::iter::once(first).chain(FORMS.into_iter().filter(move |f| *f != first));
        for form in order {
            for _ in 0..FORM_ATTEMPTS {
                let p = self.predicate(form, &pool);
                if p.eval(scene) == want && !taken.contains(&p.text()) {
                    return Some(p);
                }
            }
        }
        None
    }

    fn property_count(&mut self) -> usize {
        let target = self.cfg.properties_per_sample;
        let jitter = self.cfg.property_jitter.min(target.saturating_sub(1));
        self.rng
            .random_range(target - jitter..=target + jitter)
            .max(1)
    }

    /// Balanced properties: half yes, half no (the odd one out random), shuffled.
    fn balanced_properties(
        &mut self,
        scene: &Scene,
        n: usize,
    ) -> Result<Vec<Property>, WorldError> {
        let mut wants: Vec<Answer> = (0..n).map(|i| Answer::from_bool(i < n / 2)).collect();
        if n % 2 == 1 && self.rng.random_bool(0.5) {
            wants[n - 1] = Answer::Yes;
        }
        wants.shuffle(&mut self.rng);
        let mut texts: Vec<String> = Vec::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        for want in wants {
            let p = self
                .predicate_with_answer(scene, want, &texts)
                .ok_or_else(|| {
                    WorldError::TooSmall("cannot find enough distinct properties".into())
                })?;
            let text = p.text();
            texts.push(text.clone());
            out.push(Property {
                text,
                answer: Some(want),
                reason: Some(p.reason(scene)),
            });
        }
        Ok(out)
    }

    fn literal_sample(&mut self) -> Result<Sample, WorldError> {
        let scene = self.scene();
        let n = self.property_count();
        let properties = self.balanced_properties(&scene, n)?;
        Ok(Sample { scene, properties })
    }

    fn dependency_sample(&mut self) -> Result<Sample, WorldError> {
        let scene = self.scene();
        let want = Answer::from_bool(self.rng.random_bool(0.5));
        let p = self
            .predicate_with_answer(&scene, want, &[])
            .ok_or_else(|| WorldError::TooSmall("cannot find a property".into()))?;
        let reason = p.reason(&scene);
        let first = Property {
            text: p.text(),
            answer: Some(want),
            reason: Some(reason.clone()),
        };
        let second = Property {
            text: DEPENDENCY_TEXT.to_string(),
            answer: Some(!want),
            reason: Some(reason),
        };
        Ok(Sample {
            scene,
            properties: vec![first, second],
        })
    }

    fn expression(&mut self, m: usize) -> String {
        let rng = &mut self.rng;
        let lit = |rng: &mut ChaCha8Rng, i: usize| {
            if rng.random_bool(0.25) {
                format!("not(r{i})")
            } else {
                format!("r{i}")
            }
        };
        let weighted = |rng: &mut ChaCha8Rng, i: usize| {
            let w = rng.random_range(1..=10);
            let l = lit(rng, i);
            if w == 10 {
                l
            } else {
                format!("0.{w}*{l}")
            }
        };
        let sum = |rng: &mut ChaCha8Rng, range: std::ops::RangeInclusive<usize>| {
            range
                .map(|i| weighted(rng, i))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        match rng.random_range(0..4) {
            0 | 1 => sum(rng, 1..=m),
            2 if m >= 2 => format!("{}*({})", lit(rng, 1), sum(rng, 2..=m)),
            3 if m >= 2 => {
                let f = if rng.random_bool(0.5) { "min" } else { "max" };
                let head = format!("{f}({}, {})", lit(rng, 1), lit(rng, 2));
                if m > 2 {
                    format!("{head} + {}", sum(rng, 3..=m))
                } else {
                    head
                }
            }
            _ => sum(rng, 1..=m),
        }
    }

    fn anchored_scene(&mut self, category: &str) -> Scene {
        let mut s = self.scene();
        s.objects[0].category = category.to_string();
        s
    }

    fn pair(&mut self) -> Result<PairSample, WorldError> {
        for _ in 0..PAIR_ATTEMPTS {
            let anchor = self.pick(AttrKind::Category);
            let scene_1 = self.anchored_scene(&anchor);
            let scene_2 = self.anchored_scene(&anchor);
            let m = self
                .rng
                .random_range(self.cfg.pair_min_requirements..=self.cfg.pair_max_requirements);
            let pool: Vec<&Object> = scene_1.objects.iter().chain(&scene_2.objects).collect();
            let mut preds: Vec<Predicate> = Vec::with_capacity(m);
            let mut guard = 0;
            while preds.len() < m && guard < FORM_ATTEMPTS * m {
                guard += 1;
                let form = self.random_form();
                let p = self.predicate(form, &pool);
                if !preds.contains(&p) {
                    preds.push(p);
                }
            }
            if preds.len() < m {
                continue;
            }
            let source = self.expression(m);
            let expr = ScoreExpression::parse(&source).expect("generated expressions parse");
            let judge = |s: &Scene| preds.iter().map(|p| p.eval(s)).collect::<Vec<_>>();
            let s1 = expr.evaluate(&judge(&scene_1)).expect("in range");
            let s2 = expr.evaluate(&judge(&scene_2)).expect("in range");
            if (s1 - s2).abs() < 1e-9 {
                continue;
            }
            let requirements = preds.iter().map(Predicate::text).collect();
            let label = if s1 > s2 {
                PairLabel::First
            } else {
                PairLabel::Second
            };
            let pair = PairSample {
                scene_1,
                scene_2,
                requirements,
                expression: source,
                label,
            };
            return Ok(if self.rng.random_bool(0.5) {
                pair.swapped()
            } else {
                pair
            });
        }
        Err(WorldError::TooSmall(
            "could not produce an untied pair".into(),
        ))
    }
}

/// Literal training samples with ~balanced, shuffled, oracle-labelled properties.
pub fn generate_training_set(
    cfg: &WorldConfig,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Sample>, WorldError> {
    (0..n_samples as u64)
        .map(|i| Sampler::new(cfg, item_rng(seed, i))?.literal_sample())
        .collect()
}

/// Two-property samples whose second property is the fixed dependency sentence.
pub fn generate_dependency_set(
    cfg: &WorldConfig,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Sample>, WorldError> {
    (0..n_samples as u64)
        .map(|i| Sampler::new(cfg, item_rng(seed, i))?.dependency_sample())
        .collect()
}

/// Literal and dependency samples mixed at `cfg.dependency_ratio`.
pub fn generate_mixed_set(
    cfg: &WorldConfig,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Sample>, WorldError> {
    (0..n_samples as u64)
        .map(|i| {
            let mut s = Sampler::new(cfg, item_rng(seed, i))?;
            if s.rng.random_bool(cfg.dependency_ratio) {
                s.dependency_sample()
            } else {
                s.literal_sample()
            }
        })
        .collect()
}

/// Same-category scene pairs with requirements, a score expression and an oracle label.
pub fn generate_pair_set(
    cfg: &WorldConfig,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<PairSample>, WorldError> {
    (0..n_pairs as u64)
        .map(|i| Sampler::new(cfg, item_rng(seed, i))?.pair())
        .collect()
}

/// Scenes with exactly `n` balanced literal properties; used by benchmarks.
pub fn generate_with_count(
    cfg: &WorldConfig,
    n_samples: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Sample>, WorldError> {
    (0..n_samples as u64)
        .map(|i| {
            let mut s = Sampler::new(cfg, item_rng(seed, i))?;
            let scene = s.scene();
            let properties = s.balanced_properties(&scene, n)?;
            Ok(Sample { scene, properties })
        })
        .collect()
}
