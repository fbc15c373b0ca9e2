//! Standard and characteristic imset vectors and the star-subset coordinate
//! system for tree-skeleton polytopes.
//!
//! Imsets are kept as sparse maps keyed by canonically sorted label sets;
//! dense vectors only exist inside the LP solver, ordered by a
//! [`CoordinateSystem`].

use crate::graphs::{intervention_label, realized_skeleton, Dag, IDag, UndirectedTree};
use crate::{QigError, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Sorted, duplicate-free set of node labels with canonical key `a|b|c`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeSubset(Vec<String>);

impl NodeSubset {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v: Vec<String> = labels.into_iter().map(Into::into).collect();
        v.sort();
        v.dedup();
        NodeSubset(v)
    }

    pub fn empty() -> Self {
        NodeSubset(Vec::new())
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.0.binary_search_by(|l| l.as_str().cmp(label)).is_ok()
    }

    pub fn key(&self) -> String {
        self.0.join("|")
    }

    pub fn union(&self, other: &NodeSubset) -> NodeSubset {
        NodeSubset::new(self.0.iter().chain(other.0.iter()).cloned())
    }

    pub fn is_subset_of(&self, other: &NodeSubset) -> bool {
        self.0.iter().all(|l| other.contains(l))
    }

    /// Paper-style rendering: interventional labels print with a prime, and
    /// single-character labels concatenate, e.g. `{a, a_z, c}` -> `aa'c`.
    pub fn display(&self) -> String {
        let shown: Vec<String> = self
            .0
            .iter()
            .map(|l| match l.strip_suffix(crate::graphs::INTERVENTION_SUFFIX) {
                Some(base) => format!("{base}'"),
                None => l.clone(),
            })
            .collect();
        let concat = shown
            .iter()
            .all(|s| s.trim_end_matches('\'').chars().count() == 1);
        if concat {
            shown.join("")
        } else {
            shown.join(",")
        }
    }
}

impl fmt::Display for NodeSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display())
    }
}

/// Sparse integer vector over node subsets:
/// `u = d_full - d_empty + sum_i (d_pa(i) - d_fa(i))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StandardImset {
    nodes: Vec<String>,
    coeffs: BTreeMap<NodeSubset, i64>,
}

impl StandardImset {
    pub fn coeffs(&self) -> &BTreeMap<NodeSubset, i64> {
        &self.coeffs
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn get(&self, s: &NodeSubset) -> i64 {
        self.coeffs.get(s).copied().unwrap_or(0)
    }
}

/// Sparse 0/1 vector over node subsets of size >= 2; absent key means 0.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CharImset {
    ones: BTreeSet<NodeSubset>,
}

impl CharImset {
    pub fn from_ones<I: IntoIterator<Item = NodeSubset>>(ones: I) -> Self {
        CharImset {
            ones: ones.into_iter().collect(),
        }
    }

    pub fn get(&self, s: &NodeSubset) -> bool {
        self.ones.contains(s)
    }

    pub fn ones(&self) -> &BTreeSet<NodeSubset> {
        &self.ones
    }

    /// JSON object over the given coordinates, e.g. `{"a|b|c": 1, ...}`.
    pub fn to_json(&self, coords: &CoordinateSystem) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for entry in coords.entries() {
            map.insert(
                entry.subset.key(),
                serde_json::Value::from(u8::from(self.get(&entry.subset))),
            );
        }
        serde_json::Value::Object(map)
    }
}

/// Standard imset of a DAG, with coefficients accumulated over nodes.
pub fn standard_imset(d: &Dag) -> StandardImset {
    let mut coeffs: BTreeMap<NodeSubset, i64> = BTreeMap::new();
    let mut add = |s: NodeSubset, c: i64| {
        let e = coeffs.entry(s).or_insert(0);
        *e += c;
    };
    add(NodeSubset::new(d.nodes().to_vec()), 1);
    add(NodeSubset::empty(), -1);
    for v in d.nodes() {
        add(NodeSubset::new(d.parents(v)), 1);
        add(NodeSubset::new(d.family(v)), -1);
    }
    coeffs.retain(|_, c| *c != 0);
    StandardImset {
        nodes: d.nodes().to_vec(),
        coeffs,
    }
}

/// Standard imset of the realized I-DAG.
pub fn standard_imset_interventional(d: &IDag) -> StandardImset {
    standard_imset(&d.realize())
}

/// Characteristic imset by the combinatorial rule: `c(S) = 1` iff some
/// `i in S` has `S \ {i}` contained in `pa(i)`. Support is gathered per node
/// over subsets of its parent set, so the cost is `sum_i 2^|pa(i)|`.
pub fn char_imset(d: &Dag) -> CharImset {
    let n = d.nodes().len();
    let mut ones: BTreeSet<NodeSubset> = BTreeSet::new();
    for i in 0..n {
        let pa = d.parent_mask(i);
        let parents: Vec<usize> = (0..n).filter(|j| pa & (1 << j) != 0).collect();
        for pick in 1u64..(1 << parents.len()) {
            let mut labels: Vec<&str> = vec![d.nodes()[i].as_str()];
            for (b, &j) in parents.iter().enumerate() {
                if pick & (1 << b) != 0 {
                    labels.push(d.nodes()[j].as_str());
                }
            }
            ones.insert(NodeSubset::new(labels));
        }
    }
    CharImset { ones }
}

/// Characteristic imset of the realized I-DAG.
pub fn char_imset_interventional(d: &IDag) -> CharImset {
    char_imset(&d.realize())
}

/// Direct evaluation of `c(S)` for a single subset, used as the independent
/// oracle path against [`char_imset`].
pub fn char_value(d: &Dag, s: &NodeSubset) -> Result<bool> {
    let mut mask = 0u64;
    for l in s.labels() {
        let i = d
            .node_index(l)
            .ok_or_else(|| QigError::UnknownLabel(l.clone()))?;
        mask |= 1 << i;
    }
    if s.len() <= 1 {
        return Ok(true);
    }
    Ok((0..d.nodes().len()).any(|i| {
        mask & (1 << i) != 0 && (mask & !(1u64 << i)) & !d.parent_mask(i) == 0
    }))
}

/// Moebius route: `c(S) = 1 - sum_{T >= S} u(T)`, evaluated by a literal
/// loop over the stored support. Exponential in the node count; intended for
/// cross-checks at desk scale.
pub fn char_from_standard(u: &StandardImset) -> CharImset {
    let nodes = u.nodes();
    let n = nodes.len();
    assert!(n <= 24, "char_from_standard is an oracle for small graphs");
    // Masked copies of the support for the superset test.
    let support: Vec<(u64, i64)> = u
        .coeffs
        .iter()
        .map(|(s, &c)| {
            let mut m = 0u64;
            for l in s.labels() {
                let i = nodes.iter().position(|x| x == l).expect("support label");
                m |= 1 << i;
            }
            (m, c)
        })
        .collect();
    let mut ones = BTreeSet::new();
    for mask in 0u64..(1 << n) {
        if (mask.count_ones() as usize) < 2 {
            continue;
        }
        let total: i64 = support
            .iter()
            .filter(|(m, _)| m & mask == mask)
            .map(|(_, c)| *c)
            .sum();
        if 1 - total == 1 {
            ones.insert(NodeSubset::new(
                (0..n).filter(|i| mask & (1 << i) != 0).map(|i| nodes[i].clone()),
            ));
        } else {
            debug_assert_eq!(1 - total, 0, "characteristic imset must be 0/1");
        }
    }
    CharImset { ones }
}

/// One coordinate of the ambient polytope space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordEntry {
    pub subset: NodeSubset,
    /// Identically zero on `CIM_T^{I,J}`: around a degree-two target j the
    /// coordinates containing both tree neighbors of j vanish.
    pub zero_on_polytope: bool,
}

/// Ordered list of the star subsets (size >= 3, contained in a closed
/// neighborhood of the realized tree) on which vertex imsets can vary.
/// Size-2 subsets are skeleton edges, constantly 1, and are excluded; their
/// contribution to objectives is folded into an additive constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateSystem {
    entries: Vec<CoordEntry>,
    index: BTreeMap<NodeSubset, usize>,
}

impl CoordinateSystem {
    pub fn entries(&self) -> &[CoordEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, s: &NodeSubset) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn subset(&self, i: usize) -> &NodeSubset {
        &self.entries[i].subset
    }

    /// Dense 0/1 vector of an imset in coordinate order.
    pub fn densify(&self, c: &CharImset) -> Vec<u8> {
        self.entries
            .iter()
            .map(|e| u8::from(c.get(&e.subset)))
            .collect()
    }
}

/// Builds the coordinate system of the polytope for `tree` with leaf targets
/// `i_targets` and degree-two targets `j_targets`. Deterministic order: by
/// subset size, then lexicographically.
pub fn coordinate_system(
    tree: &UndirectedTree,
    i_targets: &[String],
    j_targets: &[String],
) -> Result<CoordinateSystem> {
    let mut all_targets: Vec<String> = i_targets.to_vec();
    all_targets.extend(j_targets.iter().cloned());
    let realized = realized_skeleton(tree, &all_targets)?;

    let mut subsets: BTreeSet<NodeSubset> = BTreeSet::new();
    for v in realized.nodes() {
        let neigh = realized.neighbors(v);
        if neigh.len() < 2 {
            continue;
        }
        for pick in 1u64..(1 << neigh.len()) {
            if pick.count_ones() < 2 {
                continue;
            }
            let mut labels: Vec<&str> = vec![v.as_str()];
            for (b, u) in neigh.iter().enumerate() {
                if pick & (1 << b) != 0 {
                    labels.push(u.as_str());
                }
            }
            subsets.insert(NodeSubset::new(labels));
        }
    }

    let mut entries: Vec<CoordEntry> = subsets
        .into_iter()
        .map(|subset| {
            let zero = j_targets.iter().any(|j| {
                let neigh = tree.neighbors(j);
                subset.contains(j) && neigh.iter().all(|u| subset.contains(u))
            });
            CoordEntry {
                subset,
                zero_on_polytope: zero,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        (a.subset.len(), a.subset.labels()).cmp(&(b.subset.len(), b.subset.labels()))
    });
    let index = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.subset.clone(), i))
        .collect();
    Ok(CoordinateSystem { entries, index })
}

/// The triple coordinate `{u, v, v_z}` for a targeted node `v` with tree
/// neighbor `u`.
pub fn target_triple(u: &str, v: &str) -> NodeSubset {
    NodeSubset::new(vec![u.to_string(), v.to_string(), intervention_label(v)])
}
