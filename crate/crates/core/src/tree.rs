//! The Linux-user permission tree.
//!
//! A child's privileges are contained in its parent's (`child <_p parent`);
//! the relation is the strict transitive closure of the parent edges.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("edge list is empty")]
    Empty,
    #[error("invalid user name `{0}`")]
    InvalidName(String),
    #[error("user `{0}` cannot contain itself")]
    SelfEdge(String),
    #[error("duplicate edge `{child} < {parent}`")]
    DuplicateEdge { child: String, parent: String },
    #[error("user `{child}` has two parents: `{first}` and `{second}`")]
    MultipleParents {
        child: String,
        first: String,
        second: String,
    },
    #[error("cycle detected through users {0:?}")]
    Cycle(Vec<String>),
    #[error("tree has multiple roots {0:?}")]
    MultipleRoots(Vec<String>),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

fn check_name(name: &str) -> Result<(), TreeError> {
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(TreeError::InvalidName(name.to_string()));
    }
    Ok(())
}

/// `child <_p parent`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContainmentEdge {
    child: String,
    parent: String,
}

impl ContainmentEdge {
    pub fn new(child: impl Into<String>, parent: impl Into<String>) -> Result<Self, TreeError> {
        let (child, parent) = (child.into(), parent.into());
        check_name(&child)?;
        check_name(&parent)?;
        if child == parent {
            return Err(TreeError::SelfEdge(child));
        }
        Ok(Self { child, parent })
    }

    pub fn child(&self) -> &str {
        &self.child
    }

    pub fn parent(&self) -> &str {
        &self.parent
    }
}

impl fmt::Display for ContainmentEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} < {}", self.child, self.parent)
    }
}

/// A validated, single-rooted tree of user names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionTree {
    /// Names in insertion order; index 0 is not necessarily the root.
    names: Vec<String>,
    index: HashMap<String, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl PermissionTree {
    /// A tree holding only its root.
    pub fn single(root: impl Into<String>) -> Result<Self, TreeError> {
        let root = root.into();
        check_name(&root)?;
        Ok(Self {
            index: HashMap::from([(root.clone(), 0)]),
            names: vec![root],
            parent: vec![None],
            children: vec![Vec::new()],
            root: 0,
        })
    }

    pub fn root(&self) -> &str {
        &self.names[self.root]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, user: &str) -> bool {
        self.index.contains_key(user)
    }

    /// Node names in first-seen order.
    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    fn id(&self, user: &str) -> Result<usize, TreeError> {
        self.index
            .get(user)
            .copied()
            .ok_or_else(|| TreeError::UnknownUser(user.to_string()))
    }

    pub fn parent(&self, user: &str) -> Result<Option<&str>, TreeError> {
        let id = self.id(user)?;
        Ok(self.parent[id].map(|p| self.names[p].as_str()))
    }

    pub fn children(&self, user: &str) -> Result<Vec<&str>, TreeError> {
        let id = self.id(user)?;
        Ok(self.children[id].iter().map(|&c| self.names[c].as_str()).collect())
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 1usize)];
        while let Some((node, depth)) = stack.pop() {
            best = best.max(depth);
            stack.extend(self.children[node].iter().map(|&c| (c, depth + 1)));
        }
        best
    }

    /// Root-first depth of every node (root = 0).
    pub fn depth(&self, user: &str) -> Result<usize, TreeError> {
        let mut id = self.id(user)?;
        let mut depth = 0;
        while let Some(p) = self.parent[id] {
            id = p;
            depth += 1;
        }
        Ok(depth)
    }

    /// Nodes in post-order (every child before its parent).
    pub fn post_order(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(self.root, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                out.push(self.names[node].as_str());
            } else {
                stack.push((node, true));
                stack.extend(self.children[node].iter().rev().map(|&c| (c, false)));
            }
        }
        out
    }

    /// Strict containment: true iff `u1` is a proper descendant of `u2`.
    pub fn contains_permission(&self, u1: &str, u2: &str) -> Result<bool, TreeError> {
        let lower = self.id(u1)?;
        let upper = self.id(u2)?;
        let mut cur = self.parent[lower];
        while let Some(p) = cur {
            if p == upper {
                return Ok(true);
            }
            cur = self.parent[p];
        }
        Ok(false)
    }

    /// The direct parent-child pairs, in node insertion order.
    pub fn edges(&self) -> Vec<ContainmentEdge> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(child, parent)| {
                parent.map(|p| ContainmentEdge {
                    child: self.names[child].clone(),
                    parent: self.names[p].clone(),
                })
            })
            .collect()
    }
}

/// Builds the tree whose direct edges are exactly `edges`.
pub fn build_tree(edges: &[ContainmentEdge]) -> Result<PermissionTree, TreeError> {
    if edges.is_empty() {
        return Err(TreeError::Empty);
    }

    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
        *index.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            names.len() - 1
        })
    };

    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(edges.len());
    for edge in edges {
        check_name(&edge.child)?;
        check_name(&edge.parent)?;
        if edge.child == edge.parent {
            return Err(TreeError::SelfEdge(edge.child.clone()));
        }
        if !seen.insert((edge.child.as_str(), edge.parent.as_str())) {
            return Err(TreeError::DuplicateEdge {
                child: edge.child.clone(),
                parent: edge.parent.clone(),
            });
        }
        let c = intern(&edge.child, &mut names);
        let p = intern(&edge.parent, &mut names);
        pairs.push((c, p));
    }

    let mut parent: Vec<Option<usize>> = vec![None; names.len()];
    let mut children = vec![Vec::new(); names.len()];
    for &(c, p) in &pairs {
        if let Some(existing) = parent[c] {
            return Err(TreeError::MultipleParents {
                child: names[c].clone(),
                first: names[existing].clone(),
                second: names[p].clone(),
            });
        }
        parent[c] = Some(p);
        children[p].push(c);
    }

    let roots: Vec<usize> = (0..names.len()).filter(|&n| parent[n].is_none()).collect();
    if roots.len() > 1 {
        return Err(TreeError::MultipleRoots(
            roots.iter().map(|&r| names[r].clone()).collect(),
        ));
    }

    let mut reached = vec![false; names.len()];
    if let Some(&root) = roots.first() {
        let mut queue = VecDeque::from([root]);
        reached[root] = true;
        while let Some(n) = queue.pop_front() {
            for &c in &children[n] {
                reached[c] = true;
                queue.push_back(c);
            }
        }
    }
    if let Some(start) = reached.iter().position(|r| !r) {
        // Every node has one parent, so an unreachable node leads into a cycle.
        let mut on_path = vec![false; names.len()];
        let mut cur = start;
        while !on_path[cur] {
            on_path[cur] = true;
            cur = parent[cur].expect("unreachable node has a parent");
        }
        let mut cycle = vec![names[cur].clone()];
        let mut walk = parent[cur].expect("cycle node has a parent");
        while walk != cur {
            cycle.push(names[walk].clone());
            walk = parent[walk].expect("cycle node has a parent");
        }
        return Err(TreeError::Cycle(cycle));
    }

    Ok(PermissionTree {
        names,
        index,
        parent,
        children,
        root: roots[0],
    })
}

/// The 15 process-UID users of Android 5.1 and their containment edges.
pub const DEFAULT_ANDROID_EDGES: [(&str, &str); 14] = [
    ("system", "root"),
    ("install", "root"),
    ("logd", "root"),
    ("shell", "root"),
    ("media", "root"),
    ("nfc", "root"),
    ("wifi", "root"),
    ("bluetooth", "root"),
    ("drm", "root"),
    ("keystore", "root"),
    ("radio", "system"),
    ("nobody", "system"),
    ("media_rw", "media"),
    ("camera", "media"),
];

pub fn default_android_edges() -> Vec<ContainmentEdge> {
    DEFAULT_ANDROID_EDGES
        .iter()
        .map(|(c, p)| ContainmentEdge::new(*c, *p).expect("built-in edge is valid"))
        .collect()
}

pub fn default_android_tree() -> PermissionTree {
    build_tree(&default_android_edges()).expect("built-in tree is valid")
}

/// Parses `child < parent` lines. Blank lines and `#` comments are skipped;
/// names are lowercased.
pub fn parse_tree_file(text: &str) -> Result<Vec<ContainmentEdge>, TreeError> {
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |message: String| TreeError::Syntax {
            line: line_no,
            message,
        };
        let (child, parent) = line
            .split_once('<')
            .ok_or_else(|| syntax(format!("expected `child < parent`, found `{line}`")))?;
        let (child, parent) = (child.trim(), parent.trim());
        if child.is_empty() || parent.is_empty() || parent.contains('<') {
            return Err(syntax(format!("expected `child < parent`, found `{line}`")));
        }
        let edge = ContainmentEdge::new(child.to_lowercase(), parent.to_lowercase())
            .map_err(|e| syntax(e.to_string()))?;
        edges.push(edge);
    }
    Ok(edges)
}

/// Renders edges in the tree file format.
pub fn format_tree_file(edges: &[ContainmentEdge]) -> String {
    edges.iter().map(|e| format!("{e}\n")).collect()
}
