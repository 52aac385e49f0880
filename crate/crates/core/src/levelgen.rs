//! Translation of a permission tree into MLS levels.
//!
//! Sensitivities are handed out top-down: the root gets `s(n-1)` where `n`
//! is the tree height, and each child sits one rank below its parent.
//! Categories are collected bottom-up: a leaf holds only its own name and a
//! parent holds its own name plus the union of its children's sets. The
//! result preserves the tree semantics: `level(a) dom level(b)` exactly when
//! `a == b` or `b` is a descendant of `a`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lattice::SecurityLevel;
use crate::tree::{PermissionTree, TreeError};

/// One generated level per user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelAssignment {
    levels: BTreeMap<String, SecurityLevel>,
    max_sensitivity: u32,
}

impl LevelAssignment {
    pub fn level(&self, user: &str) -> Option<&SecurityLevel> {
        self.levels.get(user)
    }

    pub fn max_sensitivity(&self) -> u32 {
        self.max_sensitivity
    }

    /// Users and levels in ascending user-name order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &SecurityLevel)> {
        self.levels.iter().map(|(u, l)| (u.as_str(), l))
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

pub fn generate_levels(tree: &PermissionTree) -> LevelAssignment {
    let max_sensitivity = (tree.height() - 1) as u32;

    let mut categories: HashMap<&str, BTreeSet<String>> = HashMap::with_capacity(tree.len());
    for user in tree.post_order() {
        let mut set = BTreeSet::from([user.to_string()]);
        for child in tree.children(user).expect("node from the tree") {
            set.extend(categories[child].iter().cloned());
        }
        categories.insert(user, set);
    }

    let levels = tree
        .users()
        .map(|user| {
            let depth = tree.depth(user).expect("node from the tree") as u32;
            let level = SecurityLevel::new(max_sensitivity - depth, categories[user].clone())
                .expect("tree names are valid category names");
            (user.to_string(), level)
        })
        .collect();

    LevelAssignment {
        levels,
        max_sensitivity,
    }
}

/// Numeric category indices `0..len` in ascending name order.
pub fn assign_category_indices(tree: &PermissionTree) -> BTreeMap<String, usize> {
    let mut names: Vec<&str> = tree.users().collect();
    names.sort_unstable();
    names
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n.to_string(), i))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextFormat {
    /// Categories by user name, e.g. `s1:{nobody,radio,system}`.
    #[default]
    Named,
    /// Categories as `c<index>`, e.g. `s1:{c7,c9,c12}`.
    Numeric,
}

impl FromStr for ContextFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "named" => Ok(Self::Named),
            "numeric" => Ok(Self::Numeric),
            other => Err(format!("unknown context format `{other}` (expected named|numeric)")),
        }
    }
}

/// Renders a level with `c<index>` categories, indices ascending.
pub fn numeric_level(level: &SecurityLevel, indices: &BTreeMap<String, usize>) -> String {
    let mut idx: Vec<usize> = level
        .categories()
        .iter()
        .map(|c| indices[c.as_str()])
        .collect();
    idx.sort_unstable();
    let mut out = format!("s{}", level.sensitivity());
    if !idx.is_empty() {
        out.push_str(":{");
        for (i, n) in idx.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "c{n}");
        }
        out.push('}');
    }
    out
}

/// One `<user> <level>` line per user, ascending by user name.
///
/// Panics if `indices` lacks a category used by the assignment and the
/// numeric format is requested.
pub fn export_contexts(
    assignment: &LevelAssignment,
    indices: &BTreeMap<String, usize>,
    format: ContextFormat,
) -> String {
    let mut out = String::new();
    for (user, level) in assignment.iter() {
        let rendered = match format {
            ContextFormat::Named => level.to_string(),
            ContextFormat::Numeric => numeric_level(level, indices),
        };
        let _ = writeln!(out, "{user} {rendered}");
    }
    out
}

/// Reads back named-format context lines.
pub fn parse_contexts(text: &str) -> Result<BTreeMap<String, SecurityLevel>, TreeError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: String| TreeError::Syntax {
            line: i + 1,
            message,
        };
        let (user, level) = line
            .split_once(' ')
            .ok_or_else(|| syntax(format!("expected `<user> <level>`, found `{line}`")))?;
        let level = level.trim().parse().map_err(|e| syntax(format!("{e}")))?;
        out.insert(user.to_string(), level);
    }
    Ok(out)
}
