//! Node-labeled undirected trees, DAGs, interventional DAGs and
//! equivalence/essential-graph computations.
//!
//! Interventional nodes carry the reserved suffix `_z` (the paper-style
//! prime): the intervention targeting node `a` adds a node `a_z` and the arc
//! `a_z -> a`. Data variables must not use the suffix.

use crate::{QigError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;

/// Suffix appended to a node label to name its interventional parent.
pub const INTERVENTION_SUFFIX: &str = "_z";

/// Returns the label of the interventional node attached to `label`.
pub fn intervention_label(label: &str) -> String {
    format!("{label}{INTERVENTION_SUFFIX}")
}

/// True if `label` names an interventional node.
pub fn is_intervention_label(label: &str) -> bool {
    label.ends_with(INTERVENTION_SUFFIX)
}

fn canon_pair(u: &str, v: &str) -> (String, String) {
    if u <= v {
        (u.to_string(), v.to_string())
    } else {
        (v.to_string(), u.to_string())
    }
}

/// Simple undirected graph with string-labeled nodes. Not necessarily
/// connected; [`UndirectedTree`] adds the tree invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    nodes: Vec<String>,
    edges: BTreeSet<(String, String)>,
}

impl UndirectedGraph {
    pub fn new<S: Into<String>>(nodes: Vec<S>, edges: &[(&str, &str)]) -> Result<Self> {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let set: BTreeSet<&String> = nodes.iter().collect();
        if set.len() != nodes.len() {
            return Err(QigError::InvalidGraph("duplicate node label".into()));
        }
        let mut es = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(QigError::InvalidGraph(format!("self-loop at `{u}`")));
            }
            if !set.contains(&u.to_string()) {
                return Err(QigError::UnknownLabel(u.to_string()));
            }
            if !set.contains(&v.to_string()) {
                return Err(QigError::UnknownLabel(v.to_string()));
            }
            if !es.insert(canon_pair(u, v)) {
                return Err(QigError::InvalidGraph(format!("duplicate edge {u}-{v}")));
            }
        }
        Ok(UndirectedGraph { nodes, edges: es })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(String, String)> {
        &self.edges
    }

    pub fn has_edge(&self, u: &str, v: &str) -> bool {
        self.edges.contains(&canon_pair(u, v))
    }

    pub fn neighbors(&self, v: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (a, b) in &self.edges {
            if a == v {
                out.push(b.clone());
            } else if b == v {
                out.push(a.clone());
            }
        }
        out.sort();
        out
    }

    pub fn degree(&self, v: &str) -> usize {
        self.edges.iter().filter(|(a, b)| a == v || b == v).count()
    }

    fn is_connected_tree(&self) -> bool {
        if self.nodes.is_empty() || self.edges.len() + 1 != self.nodes.len() {
            return false;
        }
        // |E| = |V|-1 plus connectivity implies acyclicity.
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut stack = vec![self.nodes[0].as_str()];
        seen.insert(self.nodes[0].as_str());
        while let Some(v) = stack.pop() {
            for (a, b) in &self.edges {
                let w = if a == v {
                    b.as_str()
                } else if b == v {
                    a.as_str()
                } else {
                    continue;
                };
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.len() == self.nodes.len()
    }
}

/// Connected acyclic [`UndirectedGraph`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedTree(UndirectedGraph);

impl UndirectedTree {
    pub fn new<S: Into<String>>(nodes: Vec<S>, edges: &[(&str, &str)]) -> Result<Self> {
        let g = UndirectedGraph::new(nodes, edges)?;
        Self::from_graph(g)
    }

    pub fn from_graph(g: UndirectedGraph) -> Result<Self> {
        if !g.is_connected_tree() {
            return Err(QigError::InvalidGraph(
                "not a tree: need |E| = |V|-1 and connectivity".into(),
            ));
        }
        Ok(UndirectedTree(g))
    }

    pub fn graph(&self) -> &UndirectedGraph {
        &self.0
    }

    pub fn nodes(&self) -> &[String] {
        self.0.nodes()
    }

    pub fn edges(&self) -> &BTreeSet<(String, String)> {
        self.0.edges()
    }

    pub fn neighbors(&self, v: &str) -> Vec<String> {
        self.0.neighbors(v)
    }

    pub fn degree(&self, v: &str) -> usize {
        self.0.degree(v)
    }

    pub fn leaves(&self) -> Vec<String> {
        self.nodes()
            .iter()
            .filter(|v| self.degree(v) == 1)
            .cloned()
            .collect()
    }

    pub fn internal_nodes(&self) -> Vec<String> {
        self.nodes()
            .iter()
            .filter(|v| self.degree(v) >= 2)
            .cloned()
            .collect()
    }
}

/// Directed acyclic graph over string-labeled nodes.
///
/// Nodes are capped at 63 so subsets fit in a `u64` bitmask; every
/// brute-force oracle in the crate leans on that representation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    nodes: Vec<String>,
    arcs: BTreeSet<(String, String)>,
    index: BTreeMap<String, usize>,
    /// parents[i] = bitmask of parents of node i
    pa_masks: Vec<u64>,
    /// adj[i] = bitmask of nodes adjacent to i (either direction)
    adj_masks: Vec<u64>,
}

impl Dag {
    pub fn new<S: Into<String>>(nodes: Vec<S>, arcs: &[(&str, &str)]) -> Result<Self> {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        Self::from_owned(nodes, arcs.iter().map(|(t, h)| (t.to_string(), h.to_string())))
    }

    pub fn from_owned<I>(nodes: Vec<String>, arcs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        if nodes.len() > 63 {
            return Err(QigError::CapExceeded(format!(
                "{} nodes exceed the 63-node bitmask cap",
                nodes.len()
            )));
        }
        let mut index = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(QigError::InvalidGraph(format!("duplicate node label `{n}`")));
            }
        }
        let mut set = BTreeSet::new();
        let mut pa_masks = vec![0u64; nodes.len()];
        let mut adj_masks = vec![0u64; nodes.len()];
        for (t, h) in arcs {
            let ti = *index
                .get(&t)
                .ok_or_else(|| QigError::UnknownLabel(t.clone()))?;
            let hi = *index
                .get(&h)
                .ok_or_else(|| QigError::UnknownLabel(h.clone()))?;
            if ti == hi {
                return Err(QigError::InvalidGraph(format!("self-loop at `{t}`")));
            }
            if adj_masks[ti] & (1 << hi) != 0 {
                return Err(QigError::InvalidGraph(format!(
                    "nodes `{t}` and `{h}` already adjacent"
                )));
            }
            pa_masks[hi] |= 1 << ti;
            adj_masks[ti] |= 1 << hi;
            adj_masks[hi] |= 1 << ti;
            set.insert((t, h));
        }
        let dag = Dag {
            nodes,
            arcs: set,
            index,
            pa_masks,
            adj_masks,
        };
        dag.check_acyclic()?;
        Ok(dag)
    }

    fn check_acyclic(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut placed = 0u64;
        let mut count = 0;
        loop {
            let mut progressed = false;
            for i in 0..n {
                if placed & (1 << i) == 0 && self.pa_masks[i] & !placed == 0 {
                    placed |= 1 << i;
                    count += 1;
                    progressed = true;
                }
            }
            if count == n {
                return Ok(());
            }
            if !progressed {
                return Err(QigError::InvalidGraph("directed cycle".into()));
            }
        }
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn arcs(&self) -> &BTreeSet<(String, String)> {
        &self.arcs
    }

    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn parent_mask(&self, i: usize) -> u64 {
        self.pa_masks[i]
    }

    pub fn adjacency_mask(&self, i: usize) -> u64 {
        self.adj_masks[i]
    }

    pub fn parents(&self, v: &str) -> Vec<String> {
        let i = self.index[v];
        self.mask_labels(self.pa_masks[i])
    }

    pub fn family(&self, v: &str) -> Vec<String> {
        let i = self.index[v];
        self.mask_labels(self.pa_masks[i] | (1 << i))
    }

    pub fn mask_labels(&self, mask: u64) -> Vec<String> {
        let mut out: Vec<String> = (0..self.nodes.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| self.nodes[i].clone())
            .collect();
        out.sort();
        out
    }
}

/// A DAG together with singleton intervention targets. The realized graph
/// adds one interventional node and arc per target.
#[derive(Debug, Clone)]
pub struct IDag {
    base: Dag,
    targets: Vec<String>,
}

impl IDag {
    pub fn new(base: Dag, targets: &[String]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in targets {
            if base.node_index(t).is_none() {
                return Err(QigError::UnknownLabel(t.clone()));
            }
            if !seen.insert(t.clone()) {
                return Err(QigError::InvalidGraph(format!("duplicate target `{t}`")));
            }
        }
        for n in base.nodes() {
            if is_intervention_label(n) {
                return Err(QigError::InvalidGraph(format!(
                    "node label `{n}` uses the reserved interventional suffix"
                )));
            }
        }
        Ok(IDag {
            base,
            targets: targets.to_vec(),
        })
    }

    pub fn base(&self) -> &Dag {
        &self.base
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    /// The realized graph: base nodes plus `t_z -> t` for each target `t`.
    pub fn realize(&self) -> Dag {
        let mut nodes: Vec<String> = self.base.nodes().to_vec();
        let mut arcs: Vec<(String, String)> = self.base.arcs().iter().cloned().collect();
        for t in &self.targets {
            let z = intervention_label(t);
            nodes.push(z.clone());
            arcs.push((z, t.clone()));
        }
        Dag::from_owned(nodes, arcs).expect("realized I-DAG is acyclic by construction")
    }
}

/// Realizes the partially directed graph `T^I` of an undirected tree: the
/// tree edges stay undirected and each target gains a directed `t_z -> t`.
/// Returned as (all nodes, undirected tree edges, interventional arcs).
pub fn realized_skeleton(tree: &UndirectedTree, targets: &[String]) -> Result<UndirectedGraph> {
    let mut nodes: Vec<String> = tree.nodes().to_vec();
    let mut edges: Vec<(String, String)> = tree.edges().iter().cloned().collect();
    for t in targets {
        if !tree.nodes().contains(t) {
            return Err(QigError::UnknownLabel(t.clone()));
        }
        let z = intervention_label(t);
        edges.push((z.clone(), t.clone()));
        nodes.push(z);
    }
    let edge_refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    UndirectedGraph::new(nodes, &edge_refs)
}

/// Forgets arc directions.
pub fn skeleton(d: &Dag) -> UndirectedGraph {
    let edges: Vec<(String, String)> = d.arcs().iter().map(|(t, h)| canon_pair(t, h)).collect();
    let refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    UndirectedGraph::new(d.nodes().to_vec(), &refs).expect("skeleton of a valid DAG is simple")
}

/// All v-structures `i -> j <- k` with `i`, `k` nonadjacent, as triples
/// `(i, j, k)` with `i < k` lexicographically.
pub fn v_structures(d: &Dag) -> BTreeSet<(String, String, String)> {
    let n = d.nodes().len();
    let mut out = BTreeSet::new();
    for j in 0..n {
        let pa = d.parent_mask(j);
        let parents: Vec<usize> = (0..n).filter(|i| pa & (1 << i) != 0).collect();
        for (a, &i) in parents.iter().enumerate() {
            for &k in &parents[a + 1..] {
                if d.adjacency_mask(i) & (1 << k) == 0 {
                    let (x, y) = if d.nodes()[i] < d.nodes()[k] {
                        (i, k)
                    } else {
                        (k, i)
                    };
                    out.insert((
                        d.nodes()[x].clone(),
                        d.nodes()[j].clone(),
                        d.nodes()[y].clone(),
                    ));
                }
            }
        }
    }
    out
}

fn same_node_set(d1: &Dag, d2: &Dag) -> Result<()> {
    let a: BTreeSet<&String> = d1.nodes().iter().collect();
    let b: BTreeSet<&String> = d2.nodes().iter().collect();
    if a != b {
        return Err(QigError::NodeSetMismatch(format!(
            "{:?} vs {:?}",
            d1.nodes(),
            d2.nodes()
        )));
    }
    Ok(())
}

/// Verma-Pearl test: same skeleton and same v-structures.
pub fn markov_equivalent(d1: &Dag, d2: &Dag) -> Result<bool> {
    same_node_set(d1, d2)?;
    Ok(skeleton(d1).edges() == skeleton(d2).edges() && v_structures(d1) == v_structures(d2))
}

/// Interventional Markov equivalence: the realized I-DAGs have the same
/// skeleton and v-structures.
pub fn i_markov_equivalent(d1: &Dag, d2: &Dag, targets: &[String]) -> Result<bool> {
    same_node_set(d1, d2)?;
    let g1 = IDag::new(d1.clone(), targets)?.realize();
    let g2 = IDag::new(d2.clone(), targets)?.realize();
    markov_equivalent(&g1, &g2)
}

/// Streaming enumeration of all orientations of a tree, optionally with some
/// edges pinned to a fixed direction.
pub struct OrientationIter {
    nodes: Vec<String>,
    fixed: Vec<(String, String)>,
    free: Vec<(String, String)>,
    next: u64,
    total: u64,
}

impl Iterator for OrientationIter {
    type Item = Dag;

    fn next(&mut self) -> Option<Dag> {
        if self.next >= self.total {
            return None;
        }
        let bits = self.next;
        self.next += 1;
        let arcs = self
            .fixed
            .iter()
            .cloned()
            .chain(self.free.iter().enumerate().map(|(i, (u, v))| {
                if bits & (1 << i) == 0 {
                    (u.clone(), v.clone())
                } else {
                    (v.clone(), u.clone())
                }
            }));
        Some(
            Dag::from_owned(self.nodes.clone(), arcs)
                .expect("every orientation of a tree is acyclic"),
        )
    }
}

pub const DEFAULT_EDGE_CAP: usize = 22;

/// Enumerates the `2^(#unconstrained edges)` orientations of `tree` in a
/// deterministic order. `constraints` maps tree edges to a forced arc
/// (tail, head).
pub fn enumerate_orientations(
    tree: &UndirectedTree,
    constraints: &[(String, String)],
    cap: usize,
) -> Result<OrientationIter> {
    let mut fixed = Vec::new();
    let mut constrained = BTreeSet::new();
    for (t, h) in constraints {
        if !tree.graph().has_edge(t, h) {
            return Err(QigError::InvalidGraph(format!(
                "constraint {t}->{h} is not a tree edge"
            )));
        }
        if !constrained.insert(canon_pair(t, h)) {
            return Err(QigError::InvalidGraph(format!(
                "edge {t}-{h} constrained twice"
            )));
        }
        fixed.push((t.clone(), h.clone()));
    }
    let free: Vec<(String, String)> = tree
        .edges()
        .iter()
        .filter(|e| !constrained.contains(*e))
        .cloned()
        .collect();
    if free.len() > cap {
        return Err(QigError::CapExceeded(format!(
            "{} free edges exceed the cap of {cap}",
            free.len()
        )));
    }
    let total = 1u64 << free.len();
    Ok(OrientationIter {
        nodes: tree.nodes().to_vec(),
        fixed,
        free,
        total,
        next: 0,
    })
}

/// Partially directed graph: output container for essential graphs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pdag {
    pub nodes: Vec<String>,
    pub arcs: BTreeSet<(String, String)>,
    pub edges: BTreeSet<(String, String)>,
}

impl Pdag {
    /// Arcs between data variables only (interventional arcs dropped).
    pub fn variable_arcs(&self) -> BTreeSet<(String, String)> {
        self.arcs
            .iter()
            .filter(|(t, h)| !is_intervention_label(t) && !is_intervention_label(h))
            .cloned()
            .collect()
    }
}

/// The I-essential graph of a polytree: an arc appears iff it is oriented
/// identically in every member of the I-MEC.
///
/// Computed by orienting the v-structure arcs of the realized I-DAG and
/// closing under the single rule "w -> u, u - v undirected, w and v
/// nonadjacent implies u -> v". On trees all non-neighbors are nonadjacent
/// and there are no triangles or cycles, so this rule alone is exact; the
/// enumeration oracle in the test suite checks that claim rather than
/// assuming it.
pub fn essential_graph(d: &Dag, targets: &[String]) -> Result<Pdag> {
    let skel = skeleton(d);
    if !skel.is_connected_tree() {
        return Err(QigError::InvalidGraph(
            "essential graph supported for tree skeletons only".into(),
        ));
    }
    let realized = IDag::new(d.clone(), targets)?.realize();
    let n = realized.nodes().len();

    // Directed status per canonical edge of the realized tree.
    let mut arcs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut undirected: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (t, h) in realized.arcs() {
        let ti = realized.node_index(t).unwrap();
        let hi = realized.node_index(h).unwrap();
        undirected.insert((ti.min(hi), ti.max(hi)));
    }

    let orient = |arcs: &mut BTreeSet<(usize, usize)>,
                  undirected: &mut BTreeSet<(usize, usize)>,
                  t: usize,
                  h: usize| {
        if undirected.remove(&(t.min(h), t.max(h))) {
            arcs.insert((t, h));
        }
    };

    // v-structure arcs of the realized graph are essential.
    for j in 0..n {
        let pa = realized.parent_mask(j);
        let parents: Vec<usize> = (0..n).filter(|i| pa & (1 << i) != 0).collect();
        if parents.len() >= 2 {
            // On a tree any two parents are nonadjacent, so every arc into a
            // node with >= 2 parents lies in a v-structure.
            for &i in &parents {
                orient(&mut arcs, &mut undirected, i, j);
            }
        }
    }
    // Interventional arcs are always essential.
    for t in targets {
        let z = realized.node_index(&intervention_label(t)).unwrap();
        let ti = realized.node_index(t).unwrap();
        orient(&mut arcs, &mut undirected, z, ti);
    }

    // Meek rule 1 closure; the cycle/triangle rules are vacuous on trees.
    loop {
        let mut newly: Vec<(usize, usize)> = Vec::new();
        for &(_, u) in &arcs {
            for &(a, b) in &undirected {
                if a == u || b == u {
                    let v = if a == u { b } else { a };
                    newly.push((u, v));
                }
            }
        }
        if newly.is_empty() {
            break;
        }
        for (u, v) in newly {
            orient(&mut arcs, &mut undirected, u, v);
        }
    }

    let name = |i: usize| realized.nodes()[i].clone();
    Ok(Pdag {
        nodes: realized.nodes().to_vec(),
        arcs: arcs.iter().map(|&(t, h)| (name(t), name(h))).collect(),
        edges: undirected
            .iter()
            .map(|&(a, b)| (name(a), name(b)))
            .collect(),
    })
}

/// JSON schema shared by all graph kinds:
/// `{nodes:[...], arcs:[[t,h],...], edges:[[u,v],...], targets:[...]}`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arcs: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<String>,
}

impl GraphJson {
    pub fn from_dag(d: &Dag) -> Self {
        GraphJson {
            nodes: d.nodes().to_vec(),
            arcs: d.arcs().iter().cloned().collect(),
            ..Default::default()
        }
    }

    pub fn from_idag(d: &IDag) -> Self {
        let mut g = Self::from_dag(d.base());
        g.targets = d.targets().to_vec();
        g
    }

    pub fn from_tree(t: &UndirectedTree, targets: &[String]) -> Self {
        GraphJson {
            nodes: t.nodes().to_vec(),
            edges: t.edges().iter().cloned().collect(),
            targets: targets.to_vec(),
            ..Default::default()
        }
    }

    pub fn from_pdag(p: &Pdag) -> Self {
        GraphJson {
            nodes: p.nodes.clone(),
            arcs: p.arcs.iter().cloned().collect(),
            edges: p.edges.iter().cloned().collect(),
            ..Default::default()
        }
    }

    pub fn to_dag(&self) -> Result<Dag> {
        Dag::from_owned(self.nodes.clone(), self.arcs.iter().cloned())
    }

    pub fn to_tree(&self) -> Result<UndirectedTree> {
        let refs: Vec<(&str, &str)> = self
            .edges
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        UndirectedTree::new(self.nodes.clone(), &refs)
    }
}

/// DOT export. Arcs print as `->` and undirected edges as `--` (or as
/// unoriented arrows when mixed with arcs, since DOT digraphs reject `--`);
/// interventional nodes are drawn as boxes.
pub fn to_dot(g: &GraphJson) -> String {
    let undirected_only = g.arcs.is_empty();
    let mut s = String::from(if undirected_only { "graph {\n" } else { "digraph {\n" });
    for n in &g.nodes {
        if is_intervention_label(n) {
            s.push_str(&format!("  \"{n}\" [shape=box];\n"));
        } else {
            s.push_str(&format!("  \"{n}\";\n"));
        }
    }
    for (t, h) in &g.arcs {
        s.push_str(&format!("  \"{t}\" -> \"{h}\";\n"));
    }
    for (u, v) in &g.edges {
        if undirected_only {
            s.push_str(&format!("  \"{u}\" -- \"{v}\";\n"));
        } else {
            s.push_str(&format!("  \"{u}\" -> \"{v}\" [dir=none];\n"));
        }
    }
    s.push_str("}\n");
    s
}
