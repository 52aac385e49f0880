#![allow(dead_code)]

use std::collections::HashMap;

use permctl::{build_tree, ContainmentEdge, PermissionTree};
use proptest::prelude::*;

/// Reflexive-free transitive closure of raw `(child, parent)` pairs,
/// computed with Warshall's algorithm. `above[(a, b)]` is true iff a <_p b.
pub struct Closure {
    index: HashMap<String, usize>,
    reach: Vec<Vec<bool>>,
}

impl Closure {
    pub fn from_pairs(pairs: &[(String, String)]) -> Self {
        let mut index = HashMap::new();
        for (c, p) in pairs {
            let n = index.len();
            index.entry(c.clone()).or_insert(n);
            let n = index.len();
            index.entry(p.clone()).or_insert(n);
        }
        let n = index.len();
        let mut reach = vec![vec![false; n]; n];
        for (c, p) in pairs {
            reach[index[c]][index[p]] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    let via = reach[k].clone();
                    for (to, hop) in reach[i].iter_mut().zip(via) {
                        *to |= hop;
                    }
                }
            }
        }
        Self { index, reach }
    }

    pub fn below(&self, a: &str, b: &str) -> bool {
        self.reach[self.index[a]][self.index[b]]
    }
}

/// A random tree shape: node `i > 0` hangs under `parents[i - 1] % i`.
/// Names are shuffled so insertion order does not follow depth.
pub fn arb_tree(max_nodes: usize) -> impl Strategy<Value = (Vec<(String, String)>, Vec<String>)> {
    (2..=max_nodes)
        .prop_flat_map(|n| (prop::collection::vec(any::<usize>(), n - 1), Just(n)))
        .prop_flat_map(|(parents, n)| {
            let names: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
            (Just(parents), Just(names).prop_shuffle())
        })
        .prop_map(|(parents, names)| {
            let pairs = parents
                .iter()
                .enumerate()
                .map(|(i, p)| (names[i + 1].clone(), names[p % (i + 1)].clone()))
                .collect();
            (pairs, names)
        })
}

pub fn tree_from_pairs(pairs: &[(String, String)]) -> PermissionTree {
    let edges: Vec<ContainmentEdge> = pairs
        .iter()
        .map(|(c, p)| ContainmentEdge::new(c.clone(), p.clone()).unwrap())
        .collect();
    build_tree(&edges).unwrap()
}
