//! MLS security levels and the dominance partial order.
//!
//! A level is a sensitivity rank plus a set of category names, written
//! `s<rank>[:{cat,cat,...}]`. Level `a` dominates `b` when `a`'s rank is at
//! least `b`'s and `a`'s categories are a superset of `b`'s.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Errors produced while parsing level text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LevelParseError {
    #[error("malformed sensitivity token `{0}`")]
    BadSensitivity(String),
    #[error("malformed category set `{0}`")]
    BadCategorySet(String),
    #[error("empty category name in `{0}`")]
    EmptyCategory(String),
    #[error("category name `{0}` contains whitespace")]
    WhitespaceInCategory(String),
    #[error("duplicate category `{0}`")]
    DuplicateCategory(String),
}

/// An MLS label: sensitivity rank and category set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SecurityLevel {
    sensitivity: u32,
    categories: BTreeSet<String>,
}

/// Outcome of comparing two levels under dominance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DominanceOrdering {
    Equal,
    Dominates,
    DominatedBy,
    Incomparable,
}

impl DominanceOrdering {
    /// The ordering seen from the other operand.
    pub fn reverse(self) -> Self {
        match self {
            Self::Dominates => Self::DominatedBy,
            Self::DominatedBy => Self::Dominates,
            other => other,
        }
    }
}

fn check_category(name: &str, context: &str) -> Result<(), LevelParseError> {
    if name.is_empty() {
        return Err(LevelParseError::EmptyCategory(context.to_string()));
    }
    if name.chars().any(char::is_whitespace) {
        return Err(LevelParseError::WhitespaceInCategory(name.to_string()));
    }
    Ok(())
}

impl SecurityLevel {
    /// Builds a level, rejecting empty, whitespace-bearing, or duplicate
    /// category names.
    pub fn new<I, S>(sensitivity: u32, categories: I) -> Result<Self, LevelParseError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for cat in categories {
            let cat = cat.into();
            check_category(&cat, &cat)?;
            if set.contains(&cat) {
                return Err(LevelParseError::DuplicateCategory(cat));
            }
            set.insert(cat);
        }
        Ok(Self {
            sensitivity,
            categories: set,
        })
    }

    /// A level with no categories.
    pub fn bare(sensitivity: u32) -> Self {
        Self {
            sensitivity,
            categories: BTreeSet::new(),
        }
    }

    pub fn sensitivity(&self) -> u32 {
        self.sensitivity
    }

    pub fn categories(&self) -> &BTreeSet<String> {
        &self.categories
    }

    /// `self dom other`.
    pub fn dominates(&self, other: &SecurityLevel) -> bool {
        self.sensitivity >= other.sensitivity && other.categories.is_subset(&self.categories)
    }

    /// `self domby other`.
    pub fn dominated_by(&self, other: &SecurityLevel) -> bool {
        other.dominates(self)
    }

    pub fn compare(&self, other: &SecurityLevel) -> DominanceOrdering {
        compare(self, other)
    }
}

/// Returns true iff `a` dominates `b`.
pub fn dominates(a: &SecurityLevel, b: &SecurityLevel) -> bool {
    a.dominates(b)
}

pub fn compare(a: &SecurityLevel, b: &SecurityLevel) -> DominanceOrdering {
    if a == b {
        return DominanceOrdering::Equal;
    }
    match (a.dominates(b), b.dominates(a)) {
        (true, _) => DominanceOrdering::Dominates,
        (_, true) => DominanceOrdering::DominatedBy,
        _ => DominanceOrdering::Incomparable,
    }
}

impl PartialOrd for SecurityLevel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match compare(self, other) {
            DominanceOrdering::Equal => Some(Ordering::Equal),
            DominanceOrdering::Dominates => Some(Ordering::Greater),
            DominanceOrdering::DominatedBy => Some(Ordering::Less),
            DominanceOrdering::Incomparable => None,
        }
    }
}

/// Parses `s<digits>` optionally followed by `:{name,...}`.
pub fn parse_level(text: &str) -> Result<SecurityLevel, LevelParseError> {
    let text = text.trim();
    let (rank, cats) = match text.split_once(':') {
        Some((rank, cats)) => (rank, Some(cats)),
        None => (text, None),
    };

    let digits = rank
        .strip_prefix('s')
        .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
        .ok_or_else(|| LevelParseError::BadSensitivity(rank.to_string()))?;
    let sensitivity = digits
        .parse::<u32>()
        .map_err(|_| LevelParseError::BadSensitivity(rank.to_string()))?;

    let Some(cats) = cats else {
        return Ok(SecurityLevel::bare(sensitivity));
    };
    let inner = cats
        .strip_prefix('{')
        .and_then(|c| c.strip_suffix('}'))
        .ok_or_else(|| LevelParseError::BadCategorySet(cats.to_string()))?;
    if inner.trim().is_empty() {
        return Ok(SecurityLevel::bare(sensitivity));
    }

    let mut categories = BTreeSet::new();
    for raw in inner.split(',') {
        let name = raw.trim();
        check_category(name, cats)?;
        if name.contains(['{', '}', ':']) {
            return Err(LevelParseError::BadCategorySet(cats.to_string()));
        }
        if !categories.insert(name.to_string()) {
            return Err(LevelParseError::DuplicateCategory(name.to_string()));
        }
    }
    Ok(SecurityLevel {
        sensitivity,
        categories,
    })
}

impl FromStr for SecurityLevel {
    type Err = LevelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_level(s)
    }
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.sensitivity)?;
        if !self.categories.is_empty() {
            f.write_str(":{")?;
            for (i, cat) in self.categories.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                f.write_str(cat)?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

impl Serialize for SecurityLevel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SecurityLevel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_level(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ROOT_LEVEL: &str = "s2:{root,system,install,logd,shell,media,nfc,wifi,bluetooth,drm,keystore,radio,nobody,media_rw,camera}";

    fn lvl(s: &str) -> SecurityLevel {
        parse_level(s).unwrap()
    }

    #[test]
    fn root_dominates_system() {
        assert!(dominates(&lvl(ROOT_LEVEL), &lvl("s1:{system,radio,nobody}")));
    }

    #[test]
    fn dominance_is_reflexive() {
        let a = lvl("s1:{install}");
        assert!(dominates(&a, &a));
    }

    #[test]
    fn siblings_do_not_dominate() {
        let install = lvl("s1:{install}");
        let logd = lvl("s1:{logd}");
        assert!(!dominates(&install, &logd));
        assert!(!dominates(&logd, &install));
    }

    #[test]
    fn compare_examples() {
        assert_eq!(
            compare(&lvl(ROOT_LEVEL), &lvl("s1:{media,media_rw,camera}")),
            DominanceOrdering::Dominates
        );
        assert_eq!(compare(&lvl("s0:{radio}"), &lvl("s0:{radio}")), DominanceOrdering::Equal);
        assert_eq!(
            compare(&lvl("s0:{radio}"), &lvl("s1:{install}")),
            DominanceOrdering::Incomparable
        );
        assert_eq!(
            compare(&lvl("s0:{radio}"), &lvl("s1:{radio,system}")),
            DominanceOrdering::DominatedBy
        );
    }

    #[test]
    fn higher_rank_alone_is_not_enough() {
        assert!(!dominates(&lvl("s2"), &lvl("s0:{x}")));
    }

    #[test]
    fn parse_examples() {
        let l = lvl("s1:{system,radio,nobody}");
        assert_eq!(l.sensitivity(), 1);
        let cats: Vec<_> = l.categories().iter().map(String::as_str).collect();
        assert_eq!(cats, ["nobody", "radio", "system"]);

        let l = lvl("s0");
        assert_eq!(l.sensitivity(), 0);
        assert!(l.categories().is_empty());

        assert_eq!(lvl("s3:{}"), SecurityLevel::bare(3));
    }

    #[test]
    fn parse_errors_name_token() {
        assert_eq!(
            parse_level("s1:{a,a}"),
            Err(LevelParseError::DuplicateCategory("a".into()))
        );
        assert_eq!(parse_level("x1"), Err(LevelParseError::BadSensitivity("x1".into())));
        assert_eq!(parse_level("s"), Err(LevelParseError::BadSensitivity("s".into())));
        assert_eq!(parse_level("s-1"), Err(LevelParseError::BadSensitivity("s-1".into())));
        assert!(matches!(parse_level("s1:{a,,b}"), Err(LevelParseError::EmptyCategory(_))));
        assert!(matches!(parse_level("s1:a,b"), Err(LevelParseError::BadCategorySet(_))));
        assert!(matches!(
            parse_level("s1:{a b}"),
            Err(LevelParseError::WhitespaceInCategory(_))
        ));
    }

    #[test]
    fn display_sorts_categories() {
        assert_eq!(lvl("s1:{system,radio,nobody}").to_string(), "s1:{nobody,radio,system}");
        assert_eq!(lvl("s0:{}").to_string(), "s0");
    }

    fn arb_level() -> impl Strategy<Value = SecurityLevel> {
        (0u32..4, prop::collection::btree_set("[a-e]", 0..5))
            .prop_map(|(s, cats)| SecurityLevel::new(s, cats).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn partial_order_laws(a in arb_level(), b in arb_level(), c in arb_level()) {
            prop_assert!(a.dominates(&a));
            if a.dominates(&b) && b.dominates(&c) {
                prop_assert!(a.dominates(&c));
            }
            if a.dominates(&b) && b.dominates(&a) {
                prop_assert_eq!(&a, &b);
            }
        }

        #[test]
        fn compare_is_mirrored(a in arb_level(), b in arb_level()) {
            prop_assert_eq!(compare(&a, &b), compare(&b, &a).reverse());
        }

        #[test]
        fn display_round_trips(a in arb_level()) {
            prop_assert_eq!(parse_level(&a.to_string()).unwrap(), a);
        }
    }
}
