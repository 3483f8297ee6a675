//! Requirement grammar over scenes and its ground-truth evaluator.
//!
//! ```text
//! requirement := bare                       exists
//!              | "no" phrase                absent
//!              | "at" "least" DIGIT phrase  count threshold
//!              | bare "and" bare            conjunction
//! bare        := CATEGORY | MODIFIER | MODIFIER CATEGORY
//! phrase      := CATEGORY | MODIFIER "object" | MODIFIER CATEGORY
//! ```

use super::{AttrKind, Object, Scene, WorldConfig, WorldError};
use crate::Answer;

/// Object filter: a category, a modifier value, or both.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Selector {
    pub modifier: Option<(AttrKind, String)>,
    pub category: Option<String>,
}

impl Selector {
    pub fn matches(&self, o: &Object) -> bool {
        self.category.as_deref().is_none_or(|c| o.category == c)
            && self.modifier.as_ref().is_none_or(|(k, v)| o.value(*k) == v)
    }

    pub fn count(&self, scene: &Scene) -> usize {
        scene.objects.iter().filter(|o| self.matches(o)).count()
    }

    fn first_match<'s>(&self, scene: &'s Scene) -> Option<&'s Object> {
        scene.objects.iter().find(|o| self.matches(o))
    }

    /// Form used in exists and conjunction requirements: "red", "circle", "red circle".
    fn bare(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(2);
        if let Some((_, v)) = &self.modifier {
            out.push(v.as_str());
        }
        if let Some(c) = &self.category {
            out.push(c.as_str());
        }
        out
    }

    /// Noun phrase: "circle", "red object", "red circle".
    fn phrase(&self) -> Vec<&str> {
        let mut out = self.bare();
        if self.category.is_none() {
            out.push("object");
        }
        out
    }

    fn parse(cfg: &WorldConfig, words: &[&str], noun_phrase: bool) -> Result<Selector, String> {
        let kind = |w: &str| cfg.kind_of(w).ok_or_else(|| format!("unknown word {w:?}"));
        match words {
            [w] => match kind(w)? {
                AttrKind::Category => Ok(Selector {
                    modifier: None,
                    category: Some(w.to_string()),
                }),
                _ if noun_phrase => Err(format!("{w:?} needs a noun")),
                k => Ok(Selector {
                    modifier: Some((k, w.to_string())),
                    category: None,
                }),
            },
            [m, n] => {
                let mk = kind(m)?;
                if mk == AttrKind::Category {
                    return Err(format!("{m:?} cannot qualify another word"));
                }
                let modifier = Some((mk, m.to_string()));
                if *n == "object" && noun_phrase {
                    Ok(Selector {
                        modifier,
                        category: None,
                    })
                } else if kind(n)? == AttrKind::Category {
                    Ok(Selector {
                        modifier,
                        category: Some(n.to_string()),
                    })
                } else {
                    Err(format!("{n:?} is not a category"))
                }
            }
            _ => Err(format!(
                "cannot read {:?} as an object description",
                words.join(" ")
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Predicate {
    Exists(Selector),
    Absent(Selector),
    AtLeast(u32, Selector),
    Both(Selector, Selector),
}

impl Predicate {
    pub fn parse(cfg: &WorldConfig, text: &str) -> Result<Predicate, WorldError> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let fail = |why: String| WorldError::Requirement {
            text: text.to_string(),
            why,
        };
        if let Some(i) = words.iter().position(|w| *w == "and") {
            let a = Selector::parse(cfg, &words[..i], false).map_err(fail)?;
            let b = Selector::parse(cfg, &words[i + 1..], false).map_err(fail)?;
            return Ok(Predicate::Both(a, b));
        }
        match words.as_slice() {
            ["no", rest @ ..] => Ok(Predicate::Absent(
                Selector::parse(cfg, rest, true).map_err(fail)?,
            )),
            ["at", "least", k, rest @ ..] => {
                let k: u32 = k
                    .parse()
                    .map_err(|_| fail(format!("{k:?} is not a count")))?;
                Ok(Predicate::AtLeast(
                    k,
                    Selector::parse(cfg, rest, true).map_err(fail)?,
                ))
            }
            [] => Err(fail("empty requirement".into())),
            _ => Ok(Predicate::Exists(
                Selector::parse(cfg, &words, false).map_err(fail)?,
            )),
        }
    }

    pub fn words(&self) -> Vec<String> {
        let v: Vec<&str> = match self {
            Predicate::Exists(s) => s.bare(),
            Predicate::Absent(s) => std::iter::once("no").chain(s.phrase()).collect(),
            Predicate::AtLeast(k, s) => {
                let mut w = vec!["at".to_string(), "least".to_string(), k.to_string()];
                w.extend(s.phrase().into_iter().map(str::to_string));
                return w;
            }
            Predicate::Both(a, b) => a
                .bare()
                .into_iter()
                .chain(["and"])
                .chain(b.bare())
                .collect(),
        };
        v.into_iter().map(str::to_string).collect()
    }

    pub fn text(&self) -> String {
        self.words().join(" ")
    }

    pub fn holds(&self, scene: &Scene) -> bool {
        match self {
            Predicate::Exists(s) => s.count(scene) > 0,
            Predicate::Absent(s) => s.count(scene) == 0,
            Predicate::AtLeast(k, s) => s.count(scene) >= *k as usize,
            Predicate::Both(a, b) => a.count(scene) > 0 && b.count(scene) > 0,
        }
    }

    pub fn eval(&self, scene: &Scene) -> Answer {
        Answer::from_bool(self.holds(scene))
    }

    /// Templated justification naming the deciding objects.
    pub fn reason(&self, scene: &Scene) -> String {
        fn presence(s: &Selector, scene: &Scene) -> String {
            match s.first_match(scene) {
                Some(o) => format!("the scene has {}", o.words().join(" ")),
                None => format!("the scene has no {}", s.phrase().join(" ")),
            }
        }
        match self {
            Predicate::Exists(s) | Predicate::Absent(s) => presence(s, scene),
            Predicate::AtLeast(_, s) => {
                format!("the scene has {} {}", s.count(scene), s.phrase().join(" "))
            }
            Predicate::Both(a, b) => match (a.first_match(scene), b.first_match(scene)) {
                (Some(x), Some(y)) => {
                    format!(
                        "the scene has {} and {}",
                        x.words().join(" "),
                        y.words().join(" ")
                    )
                }
                (None, _) => presence(a, scene),
                (Some(_), None) => presence(b, scene),
            },
        }
    }
}

/// Ground truth for a literal requirement.
pub fn oracle_eval(
    cfg: &WorldConfig,
    scene: &Scene,
    requirement: &str,
) -> Result<Answer, WorldError> {
    Ok(Predicate::parse(cfg, requirement)?.eval(scene))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(size: &str, color: &str, pattern: &str, category: &str) -> Object {
        Object {
            size: size.into(),
            color: color.into(),
            pattern: pattern.into(),
            category: category.into(),
        }
    }

    fn red_circle() -> Scene {
        Scene {
            objects: vec![obj("small", "red", "plain", "circle")],
        }
    }

    #[test]
    fn red_circle_examples() {
        let cfg = WorldConfig::default();
        let s = red_circle();
        assert_eq!(oracle_eval(&cfg, &s, "red circle").unwrap(), Answer::Yes);
        assert_eq!(oracle_eval(&cfg, &s, "no red object").unwrap(), Answer::No);
        assert_eq!(oracle_eval(&cfg, &s, "blue").unwrap(), Answer::No);
        assert_eq!(oracle_eval(&cfg, &s, "no square").unwrap(), Answer::Yes);
        assert_eq!(
            oracle_eval(&cfg, &s, "at least 2 circle").unwrap(),
            Answer::No
        );
        assert_eq!(
            oracle_eval(&cfg, &s, "red and circle").unwrap(),
            Answer::Yes
        );
        assert_eq!(
            oracle_eval(&cfg, &s, "red circle and blue").unwrap(),
            Answer::No
        );
    }

    #[test]
    fn malformed_requirements_are_rejected() {
        let cfg = WorldConfig::default();
        let s = red_circle();
        for bad in [
            "",
            "zebra",
            "circle red",
            "no red",
            "at least x circle",
            "red blue",
            "and",
        ] {
            assert!(oracle_eval(&cfg, &s, bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn text_round_trips_through_parse() {
        let cfg = WorldConfig::default();
        for text in [
            "red",
            "circle",
            "red circle",
            "no red object",
            "no circle",
            "no small star",
            "at least 2 circle",
            "at least 3 striped object",
            "red circle and large",
        ] {
            assert_eq!(Predicate::parse(&cfg, text).unwrap().text(), text);
        }
    }

    #[test]
    fn reasons_name_deciding_objects() {
        let cfg = WorldConfig::default();
        let s = red_circle();
        let p = Predicate::parse(&cfg, "red circle").unwrap();
        assert_eq!(p.reason(&s), "the scene has small red plain circle");
        let p = Predicate::parse(&cfg, "no blue object").unwrap();
        assert_eq!(p.reason(&s), "the scene has no blue object");
        let p = Predicate::parse(&cfg, "at least 2 circle").unwrap();
        assert_eq!(p.reason(&s), "the scene has 1 circle");
    }
}
