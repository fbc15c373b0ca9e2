//! Gluing trees, the three facet families, forked-subtree enumeration,
//! H-representations, vertex enumeration, interventional partings and
//! toric-fiber-product gluing.
//!
//! All constraint arithmetic is exact rational; floats never enter validity
//! or facet checks.

use crate::graphs::{enumerate_orientations, Dag, IDag, UndirectedTree};
use crate::imsets::{
    char_imset_interventional, coordinate_system, target_triple, CharImset, CoordinateSystem,
    NodeSubset,
};
use crate::{QigError, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub const DEFAULT_SUBTREE_CAP: usize = 1_000_000;

/// A tree with white nodes split into leaf targets `I` and degree-two
/// targets `J`; no two white nodes adjacent.
#[derive(Debug, Clone)]
pub struct GluingTree {
    tree: UndirectedTree,
    i_targets: Vec<String>,
    j_targets: Vec<String>,
}

impl GluingTree {
    pub fn new(tree: UndirectedTree, i_targets: &[String], j_targets: &[String]) -> Result<Self> {
        let mut i_targets = i_targets.to_vec();
        let mut j_targets = j_targets.to_vec();
        i_targets.sort();
        i_targets.dedup();
        j_targets.sort();
        j_targets.dedup();
        for t in &i_targets {
            if j_targets.contains(t) {
                return Err(QigError::InvalidGraph(format!(
                    "target `{t}` in both I and J"
                )));
            }
            if tree.degree(t) != 1 {
                return Err(QigError::InvalidGraph(format!(
                    "I-target `{t}` is not a leaf"
                )));
            }
        }
        for t in &j_targets {
            if tree.degree(t) != 2 {
                return Err(QigError::InvalidGraph(format!(
                    "J-target `{t}` does not have degree two"
                )));
            }
        }
        let white: BTreeSet<&String> = i_targets.iter().chain(j_targets.iter()).collect();
        for w in &white {
            if tree.nodes().iter().all(|n| n != *w) {
                return Err(QigError::UnknownLabel((*w).clone()));
            }
            for u in tree.neighbors(w) {
                if white.contains(&u) {
                    return Err(QigError::InvalidGraph(format!(
                        "white nodes `{w}` and `{u}` are adjacent"
                    )));
                }
            }
        }
        Ok(GluingTree {
            tree,
            i_targets,
            j_targets,
        })
    }

    pub fn tree(&self) -> &UndirectedTree {
        &self.tree
    }

    pub fn leaf_targets(&self) -> &[String] {
        &self.i_targets
    }

    pub fn degree_two_targets(&self) -> &[String] {
        &self.j_targets
    }

    pub fn all_targets(&self) -> Vec<String> {
        let mut t = self.i_targets.clone();
        t.extend(self.j_targets.iter().cloned());
        t.sort();
        t
    }

    pub fn is_white(&self, v: &str) -> bool {
        self.i_targets.iter().any(|t| t == v) || self.j_targets.iter().any(|t| t == v)
    }

    pub fn coordinate_system(&self) -> Result<CoordinateSystem> {
        coordinate_system(&self.tree, &self.i_targets, &self.j_targets)
    }

    /// Degree in the realized graph `T^{I u J}`.
    fn realized_degree(&self, v: &str) -> usize {
        self.tree.degree(v) + usize::from(self.is_white(v))
    }

    /// Tree edges whose endpoints are both internal in `T^{I u J}`.
    pub fn internal_edges(&self) -> Vec<(String, String)> {
        self.tree
            .edges()
            .iter()
            .filter(|(u, v)| self.realized_degree(u) >= 2 && self.realized_degree(v) >= 2)
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintTag {
    Star,
    Bidirected,
    Forked,
    AffineSpan,
}

/// Sparse rational functional over star-subset coordinates with a sense and
/// a rational bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub coeffs: BTreeMap<NodeSubset, BigRational>,
    pub sense: Sense,
    pub rhs: BigRational,
    pub tag: ConstraintTag,
}

fn ratio(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl LinearConstraint {
    fn from_int_terms(
        terms: BTreeMap<NodeSubset, i64>,
        sense: Sense,
        rhs: i64,
        tag: ConstraintTag,
    ) -> Self {
        LinearConstraint {
            coeffs: terms
                .into_iter()
                .filter(|(_, c)| *c != 0)
                .map(|(s, c)| (s, ratio(c)))
                .collect(),
            sense,
            rhs: ratio(rhs),
            tag,
        }
    }

    pub fn eval(&self, c: &CharImset) -> BigRational {
        let mut acc = BigRational::zero();
        for (s, coef) in &self.coeffs {
            if c.get(s) {
                acc += coef;
            }
        }
        acc
    }

    pub fn satisfied_by(&self, c: &CharImset) -> bool {
        let v = self.eval(c);
        match self.sense {
            Sense::Le => v <= self.rhs,
            Sense::Ge => v >= self.rhs,
            Sense::Eq => v == self.rhs,
        }
    }

    pub fn is_tight_on(&self, c: &CharImset) -> bool {
        self.eval(c) == self.rhs
    }

    /// Canonical form for comparisons up to positive rational scaling:
    /// integer coefficients and rhs with overall gcd 1 (equalities also get
    /// a positive leading coefficient).
    pub fn normalized(&self) -> (Vec<(NodeSubset, BigInt)>, Sense, BigInt) {
        let mut denom_lcm = BigInt::one();
        for c in self.coeffs.values().chain(std::iter::once(&self.rhs)) {
            denom_lcm = denom_lcm.lcm(c.denom());
        }
        let scale = |c: &BigRational| -> BigInt { (c * BigRational::from_integer(denom_lcm.clone())).to_integer() };
        let mut ints: Vec<(NodeSubset, BigInt)> = self
            .coeffs
            .iter()
            .map(|(s, c)| (s.clone(), scale(c)))
            .collect();
        let mut rhs = scale(&self.rhs);
        let mut g = rhs.abs();
        for (_, c) in &ints {
            g = g.gcd(&c.abs());
        }
        if !g.is_zero() && !g.is_one() {
            for (_, c) in ints.iter_mut() {
                *c /= &g;
            }
            rhs /= &g;
        }
        let mut sense = self.sense;
        if sense == Sense::Eq {
            if let Some((_, first)) = ints.iter().find(|(_, c)| !c.is_zero()) {
                if first.is_negative() {
                    for (_, c) in ints.iter_mut() {
                        *c = -c.clone();
                    }
                    rhs = -rhs;
                }
            }
        } else if sense == Sense::Ge {
            // Flip to <= for a single canonical sense.
            for (_, c) in ints.iter_mut() {
                *c = -c.clone();
            }
            rhs = -rhs;
            sense = Sense::Le;
        }
        (ints, sense, rhs)
    }
}

impl fmt::Display for LinearConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms: Vec<(&NodeSubset, &BigRational)> = self.coeffs.iter().collect();
        terms.sort_by(|a, b| (a.0.len(), a.0.labels()).cmp(&(b.0.len(), b.0.labels())));
        if terms.is_empty() {
            write!(f, "0")?;
        }
        for (i, (s, c)) in terms.iter().enumerate() {
            let mag = c.abs();
            let sign = if c.is_negative() { "-" } else { "+" };
            if i == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            if mag.is_one() {
                write!(f, "x_{{{}}}", s.display())?;
            } else {
                write!(f, "{mag} x_{{{}}}", s.display())?;
            }
        }
        let sense = match self.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        write!(f, " {sense} {}", self.rhs)
    }
}

/// H-representation: inequalities plus the affine-span equalities recording
/// the constant coordinates around degree-two targets.
#[derive(Debug, Clone)]
pub struct HRepresentation {
    pub coords: CoordinateSystem,
    pub inequalities: Vec<LinearConstraint>,
    pub equalities: Vec<LinearConstraint>,
}

/// Star inequalities: one per internal black node and per substar with at
/// least two leaves.
pub fn star_inequalities(gt: &GluingTree) -> Vec<LinearConstraint> {
    let tree = gt.tree();
    let mut out = Vec::new();
    for center in tree.nodes() {
        if tree.degree(center) < 2 || gt.is_white(center) {
            continue;
        }
        let neigh = tree.neighbors(center);
        let mut picks: Vec<u64> = (1u64..(1 << neigh.len()))
            .filter(|p| p.count_ones() >= 2)
            .collect();
        picks.sort_by_key(|p| {
            let labels: Vec<&String> = neigh
                .iter()
                .enumerate()
                .filter(|(b, _)| p & (1 << b) != 0)
                .map(|(_, u)| u)
                .collect();
            (labels.len(), labels.into_iter().cloned().collect::<Vec<_>>())
        });
        for pick in picks {
            let substar: Vec<&String> = neigh
                .iter()
                .enumerate()
                .filter(|(b, _)| pick & (1 << b) != 0)
                .map(|(_, u)| u)
                .collect();
            let rest: Vec<&String> = neigh
                .iter()
                .enumerate()
                .filter(|(b, _)| pick & (1 << b) == 0)
                .map(|(_, u)| u)
                .collect();
            let mut terms: BTreeMap<NodeSubset, i64> = BTreeMap::new();
            for extra in 0u64..(1 << rest.len()) {
                let mut labels: Vec<String> = substar.iter().map(|s| (*s).clone()).collect();
                labels.push(center.clone());
                for (b, u) in rest.iter().enumerate() {
                    if extra & (1 << b) != 0 {
                        labels.push((*u).clone());
                    }
                }
                let sign = if extra.count_ones() % 2 == 0 { 1 } else { -1 };
                *terms.entry(NodeSubset::new(labels)).or_insert(0) += sign;
            }
            out.push(LinearConstraint::from_int_terms(
                terms,
                Sense::Ge,
                0,
                ConstraintTag::Star,
            ));
        }
    }
    out
}

/// The functional `1_{v <- u}`: indicator that `v <- u` lies in a
/// v-structure. For targeted `v` this is the triple coordinate `x_{uvv'}`.
pub fn indicator_v(u: &str, v: &str, gt: &GluingTree) -> Result<BTreeMap<NodeSubset, i64>> {
    let tree = gt.tree();
    if !tree.graph().has_edge(u, v) {
        return Err(QigError::InvalidGraph(format!("{u}-{v} is not a tree edge")));
    }
    let mut terms: BTreeMap<NodeSubset, i64> = BTreeMap::new();
    if gt.is_white(v) {
        terms.insert(target_triple(u, v), 1);
        return Ok(terms);
    }
    if tree.degree(v) < 2 {
        return Err(QigError::InvalidGraph(format!(
            "`{v}` is an untargeted leaf; 1_{{{v} <- {u}}} is undefined"
        )));
    }
    let others: Vec<String> = tree.neighbors(v).into_iter().filter(|w| w != u).collect();
    for pick in 1u64..(1 << others.len()) {
        let mut labels: Vec<String> = vec![u.to_string(), v.to_string()];
        for (b, w) in others.iter().enumerate() {
            if pick & (1 << b) != 0 {
                labels.push(w.clone());
            }
        }
        let sign = if pick.count_ones() % 2 == 1 { 1 } else { -1 };
        *terms.entry(NodeSubset::new(labels)).or_insert(0) += sign;
    }
    Ok(terms)
}

/// Bidirected-edge inequalities: `1_{v <- u} + 1_{u <- v} <= 1` per internal
/// edge of the realized tree.
pub fn bidirected_edge_inequalities(gt: &GluingTree) -> Vec<LinearConstraint> {
    let mut out = Vec::new();
    for (u, v) in gt.internal_edges() {
        let mut terms = indicator_v(&v, &u, gt).expect("internal edge endpoints");
        for (s, c) in indicator_v(&u, &v, gt).expect("internal edge endpoints") {
            *terms.entry(s).or_insert(0) += c;
        }
        out.push(LinearConstraint::from_int_terms(
            terms,
            Sense::Le,
            1,
            ConstraintTag::Bidirected,
        ));
    }
    out
}

/// The functional `1_{c -> L}` over the star `N_T[c]`: indicator that a
/// v-structure at `c` forces all edges `c -> l`, `l in L`, to be essential.
pub fn forced_out_functional(
    center: &str,
    l_set: &[String],
    gt: &GluingTree,
) -> BTreeMap<NodeSubset, i64> {
    let tree = gt.tree();
    let neigh = tree.neighbors(center);
    let a_pool: Vec<&String> = neigh.iter().filter(|w| !l_set.contains(w)).collect();
    let mut terms: BTreeMap<NodeSubset, i64> = BTreeMap::new();
    for apick in 0u64..(1 << a_pool.len()) {
        // A = {center} u (chosen non-L neighbors); need |A| >= 3.
        let asize = apick.count_ones() as usize + 1;
        if asize < 3 {
            continue;
        }
        for bpick in 0u64..(1 << l_set.len()) {
            let total = asize + bpick.count_ones() as usize;
            let mut labels: Vec<String> = vec![center.to_string()];
            for (b, w) in a_pool.iter().enumerate() {
                if apick & (1 << b) != 0 {
                    labels.push((*w).clone());
                }
            }
            for (b, w) in l_set.iter().enumerate() {
                if bpick & (1 << b) != 0 {
                    labels.push(w.clone());
                }
            }
            let sign = if (total - 1).is_multiple_of(2) { 1 } else { -1 };
            *terms.entry(NodeSubset::new(labels)).or_insert(0) += sign * (asize as i64 - 2);
        }
    }
    terms.retain(|_, c| *c != 0);
    terms
}

/// The functional `#^S` for the star `S` with center `c` on node set
/// `star_nodes` (which must contain `c`): counts parents of `c` inside the
/// star, minus one, when positive.
pub fn hash_functional(center: &str, star_nodes: &[String]) -> BTreeMap<NodeSubset, i64> {
    let others: Vec<&String> = star_nodes.iter().filter(|w| *w != center).collect();
    let mut terms: BTreeMap<NodeSubset, i64> = BTreeMap::new();
    for pick in 0u64..(1 << others.len()) {
        let size = pick.count_ones() as usize + 1;
        if size < 3 {
            continue;
        }
        let mut labels: Vec<String> = vec![center.to_string()];
        for (b, w) in others.iter().enumerate() {
            if pick & (1 << b) != 0 {
                labels.push((*w).clone());
            }
        }
        let sign = if (size - 1).is_multiple_of(2) { 1 } else { -1 };
        *terms.entry(NodeSubset::new(labels)).or_insert(0) += sign;
    }
    terms
}

/// A forked subtree with its derived node classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForkedSubtree {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
    pub leaves: BTreeSet<String>,
    pub interior: BTreeSet<String>,
    /// Nodes with at least two tree neighbors outside the subtree.
    pub fork_nodes: BTreeSet<String>,
    /// Leaf edges `(c, d)` with targeted `c`.
    pub target_leaf_edges: BTreeSet<(String, String)>,
}

fn subtree_from_mask(gt: &GluingTree, nodes: &[String], mask: u64) -> ForkedSubtree {
    let tree = gt.tree();
    let members: Vec<&String> = nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, n)| n)
        .collect();
    let node_set: BTreeSet<String> = members.iter().map(|n| (*n).clone()).collect();
    let mut edges = BTreeSet::new();
    for (u, v) in tree.edges() {
        if node_set.contains(u) && node_set.contains(v) {
            edges.insert((u.clone(), v.clone()));
        }
    }
    let deg_sub = |v: &str| -> usize {
        edges.iter().filter(|(a, b)| a == v || b == v).count()
    };
    let leaves: BTreeSet<String> = if node_set.len() == 1 {
        node_set.clone()
    } else {
        node_set.iter().filter(|v| deg_sub(v) == 1).cloned().collect()
    };
    let interior: BTreeSet<String> = node_set
        .iter()
        .filter(|v| deg_sub(v) >= 2)
        .cloned()
        .collect();
    let fork_nodes: BTreeSet<String> = node_set
        .iter()
        .filter(|v| tree.degree(v) >= deg_sub(v) + 2)
        .cloned()
        .collect();
    let mut target_leaf_edges = BTreeSet::new();
    for w in &leaves {
        if gt.is_white(w) {
            for u in tree.neighbors(w) {
                if node_set.contains(&u) {
                    target_leaf_edges.insert((w.clone(), u));
                }
            }
        }
    }
    ForkedSubtree {
        nodes: node_set,
        edges,
        leaves,
        interior,
        fork_nodes,
        target_leaf_edges,
    }
}

fn is_forked(gt: &GluingTree, sub: &ForkedSubtree) -> bool {
    let tree = gt.tree();
    // Must avoid untargeted leaves of the tree.
    for v in &sub.nodes {
        if tree.degree(v) == 1 && !gt.is_white(v) {
            return false;
        }
    }
    // (2) every white node adjacent to (or inside) the subtree belongs to it.
    for w in gt.leaf_targets().iter().chain(gt.degree_two_targets()) {
        let touches = sub.nodes.contains(w)
            || tree.neighbors(w).iter().any(|u| sub.nodes.contains(u));
        if touches && !sub.nodes.contains(w) {
            return false;
        }
    }
    if sub.nodes.len() == 1 {
        // A singleton counts as its own leaf only when black; white
        // singletons fail condition (3).
        let v = sub.nodes.iter().next().unwrap();
        return !gt.is_white(v) && tree.degree(v) >= 2;
    }
    // (3) white nodes only at leaves of the subtree.
    for v in &sub.nodes {
        if gt.is_white(v) && !sub.leaves.contains(v) {
            return false;
        }
    }
    // (1) black subtree leaves keep at least two tree neighbors outside.
    // A black leaf whose unique subtree neighbor is white is exempt: the
    // star case (substar on the center and one targeted leaf) requires it,
    // and the vertex-enumeration suites confirm validity of the resulting
    // inequalities.
    for v in &sub.leaves {
        if gt.is_white(v) || sub.fork_nodes.contains(v) {
            continue;
        }
        let whites_only = gt
            .tree()
            .neighbors(v)
            .iter()
            .all(|u| !sub.nodes.contains(u) || gt.is_white(u));
        if !whites_only {
            return false;
        }
    }
    true
}

fn mask_connected(mask: u64, adj: &[u64]) -> bool {
    let start = mask.trailing_zeros() as usize;
    let mut seen = 1u64 << start;
    loop {
        let mut next = seen;
        let mut f = seen;
        while f != 0 {
            let v = f.trailing_zeros() as usize;
            f &= f - 1;
            next |= adj[v] & mask;
        }
        if next == seen {
            return seen == mask;
        }
        seen = next;
    }
}

/// All forked subtrees, in deterministic (node-set) order.
pub fn enumerate_forked_subtrees(gt: &GluingTree, cap: usize) -> Result<Vec<ForkedSubtree>> {
    let nodes = gt.tree().nodes().to_vec();
    let n = nodes.len();
    if n > 25 || (1u64 << n) > cap as u64 * 2 {
        return Err(QigError::CapExceeded(format!(
            "subtree scan over {n} nodes exceeds the cap of {cap}"
        )));
    }
    let mut adj = vec![0u64; n];
    for (u, v) in gt.tree().edges() {
        let ui = nodes.iter().position(|x| x == u).unwrap();
        let vi = nodes.iter().position(|x| x == v).unwrap();
        adj[ui] |= 1 << vi;
        adj[vi] |= 1 << ui;
    }
    let mut out = Vec::new();
    let mut count = 0usize;
    for mask in 1u64..(1 << n) {
        if !mask_connected(mask, &adj) {
            continue;
        }
        count += 1;
        if count > cap {
            return Err(QigError::CapExceeded(format!(
                "more than {cap} connected subtrees"
            )));
        }
        let sub = subtree_from_mask(gt, &nodes, mask);
        if is_forked(gt, &sub) {
            out.push(sub);
        }
    }
    out.sort_by(|a, b| a.nodes.cmp(&b.nodes));
    Ok(out)
}

/// The forked-tree inequality of a forked subtree.
pub fn forked_tree_inequality(sub: &ForkedSubtree, gt: &GluingTree) -> LinearConstraint {
    let tree = gt.tree();
    let mut terms: BTreeMap<NodeSubset, i64> = BTreeMap::new();
    for c in &sub.fork_nodes {
        let l_set: Vec<String> = tree
            .neighbors(c)
            .into_iter()
            .filter(|u| sub.nodes.contains(u))
            .collect();
        for (s, v) in forced_out_functional(c, &l_set, gt) {
            *terms.entry(s).or_insert(0) += v;
        }
    }
    for (c, d) in &sub.target_leaf_edges {
        *terms.entry(target_triple(d, c)).or_insert(0) -= 1;
    }
    for c in &sub.interior {
        let mut star: Vec<String> = tree
            .neighbors(c)
            .into_iter()
            .filter(|u| sub.nodes.contains(u))
            .collect();
        star.push(c.clone());
        for (s, v) in hash_functional(c, &star) {
            *terms.entry(s).or_insert(0) -= v;
        }
    }
    let rhs = 1 - sub.target_leaf_edges.len() as i64;
    LinearConstraint::from_int_terms(terms, Sense::Le, rhs, ConstraintTag::Forked)
}

/// Affine-span equalities for each degree-two target `j` with neighbors
/// `i < k`: `x_ijk = 0`, `x_ijj'k = 0`, `x_ijj' + x_jj'k = 1`.
pub fn affine_span_equalities(gt: &GluingTree) -> Vec<LinearConstraint> {
    let mut out = Vec::new();
    for j in gt.degree_two_targets() {
        let neigh = gt.tree().neighbors(j);
        let (i, k) = (&neigh[0], &neigh[1]);
        let jz = crate::graphs::intervention_label(j);
        let mk = |labels: Vec<String>| NodeSubset::new(labels);
        let mut zero1 = BTreeMap::new();
        zero1.insert(mk(vec![i.clone(), j.clone(), k.clone()]), 1);
        out.push(LinearConstraint::from_int_terms(
            zero1,
            Sense::Eq,
            0,
            ConstraintTag::AffineSpan,
        ));
        let mut zero2 = BTreeMap::new();
        zero2.insert(mk(vec![i.clone(), j.clone(), jz.clone(), k.clone()]), 1);
        out.push(LinearConstraint::from_int_terms(
            zero2,
            Sense::Eq,
            0,
            ConstraintTag::AffineSpan,
        ));
        let mut hyper = BTreeMap::new();
        hyper.insert(mk(vec![i.clone(), j.clone(), jz.clone()]), 1);
        hyper.insert(mk(vec![j.clone(), jz.clone(), k.clone()]), 1);
        out.push(LinearConstraint::from_int_terms(
            hyper,
            Sense::Eq,
            1,
            ConstraintTag::AffineSpan,
        ));
    }
    out
}

/// The full H-representation: star, bidirected-edge and forked-tree
/// inequalities plus the affine-span equalities, in deterministic order.
pub fn h_representation(gt: &GluingTree) -> Result<HRepresentation> {
    h_representation_capped(gt, DEFAULT_SUBTREE_CAP)
}

pub fn h_representation_capped(gt: &GluingTree, cap: usize) -> Result<HRepresentation> {
    if gt.tree().nodes().len() < 3 {
        return Err(QigError::InvalidGraph(
            "H-representation needs at least 3 nodes (stars have >= 2 leaves)".into(),
        ));
    }
    let coords = gt.coordinate_system()?;
    let mut inequalities = star_inequalities(gt);
    inequalities.extend(bidirected_edge_inequalities(gt));
    for sub in enumerate_forked_subtrees(gt, cap)? {
        inequalities.push(forked_tree_inequality(&sub, gt));
    }
    Ok(HRepresentation {
        coords,
        inequalities,
        equalities: affine_span_equalities(gt),
    })
}

/// Enumerates the polytope's vertices: distinct realized imsets of
/// orientations where every degree-two target is a non-collider non-fork,
/// with one representative orientation each. Sorted by imset.
pub fn enumerate_vertices(gt: &GluingTree, cap: usize) -> Result<Vec<(CharImset, Dag)>> {
    let targets = gt.all_targets();
    let mut seen: BTreeMap<CharImset, Dag> = BTreeMap::new();
    for d in enumerate_orientations(gt.tree(), &[], cap)? {
        let mut through = true;
        for j in gt.degree_two_targets() {
            let neigh = gt.tree().neighbors(j);
            let pa = d.parents(j);
            let inner = neigh.iter().filter(|u| pa.contains(u)).count();
            if inner != 1 {
                through = false;
                break;
            }
        }
        if !through {
            continue;
        }
        let imset = char_imset_interventional(&IDag::new(d.clone(), &targets)?);
        seen.entry(imset).or_insert(d);
    }
    Ok(seen.into_iter().collect())
}

/// Splits a gluing tree at a degree-two target `j`, yielding the two
/// component gluing trees with `j` demoted to a leaf target on each side.
pub fn interventional_parting(gt: &GluingTree, j: &str) -> Result<(GluingTree, GluingTree)> {
    if !gt.degree_two_targets().iter().any(|t| t == j) {
        return Err(QigError::InvalidGraph(format!("`{j}` is not in J")));
    }
    let neigh = gt.tree().neighbors(j);
    let (i, k) = (neigh[0].clone(), neigh[1].clone());
    let component = |keep: &str, drop: &str| -> Result<GluingTree> {
        // Nodes reachable from `keep` without using the edge j-drop.
        let mut nodes: BTreeSet<String> = BTreeSet::new();
        let mut stack = vec![keep.to_string()];
        nodes.insert(j.to_string());
        nodes.insert(keep.to_string());
        while let Some(v) = stack.pop() {
            for u in gt.tree().neighbors(&v) {
                if v == j && u == drop {
                    continue;
                }
                if u == j {
                    continue;
                }
                if nodes.insert(u.clone()) {
                    stack.push(u);
                }
            }
        }
        let edges: Vec<(String, String)> = gt
            .tree()
            .edges()
            .iter()
            .filter(|(a, b)| {
                nodes.contains(a)
                    && nodes.contains(b)
                    && !(a == j && b == drop)
                    && !(b == j && a == drop)
            })
            .cloned()
            .collect();
        let node_vec: Vec<String> = gt
            .tree()
            .nodes()
            .iter()
            .filter(|n| nodes.contains(*n))
            .cloned()
            .collect();
        let refs: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let tree = UndirectedTree::new(node_vec, &refs)?;
        let mut i_t: Vec<String> = gt
            .leaf_targets()
            .iter()
            .filter(|t| nodes.contains(*t))
            .cloned()
            .collect();
        i_t.push(j.to_string());
        let j_t: Vec<String> = gt
            .degree_two_targets()
            .iter()
            .filter(|t| *t != j && nodes.contains(*t))
            .cloned()
            .collect();
        GluingTree::new(tree, &i_t, &j_t)
    };
    Ok((component(&i, &k)?, component(&k, &i)?))
}

/// Toric fiber product over a segment: pairs `(v, w)` with
/// `v[match1] = 1 - w[match2]`, concatenated as imsets.
pub fn tfp_glue(
    verts1: &[CharImset],
    verts2: &[CharImset],
    match1: &NodeSubset,
    match2: &NodeSubset,
) -> Vec<CharImset> {
    let mut out = Vec::new();
    for v in verts1 {
        for w in verts2 {
            if v.get(match1) != w.get(match2) {
                out.push(CharImset::from_ones(
                    v.ones().iter().chain(w.ones().iter()).cloned(),
                ));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_gluing() -> GluingTree {
        let tree = UndirectedTree::new(
            vec!["a", "b", "c", "d"],
            &[("a", "c"), ("b", "c"), ("c", "d")],
        )
        .unwrap();
        GluingTree::new(tree, &["a".into(), "d".into()], &[]).unwrap()
    }

    /// The Fig. 2 tree: center 4 joined to 3, 5 and targeted leaf 8; 3 has
    /// leaves 1, 2; 5 has leaves 6, 7.
    fn example_tree() -> GluingTree {
        let tree = UndirectedTree::new(
            vec!["1", "2", "3", "4", "5", "6", "7", "8"],
            &[
                ("1", "3"),
                ("2", "3"),
                ("3", "4"),
                ("4", "5"),
                ("4", "8"),
                ("5", "6"),
                ("5", "7"),
            ],
        )
        .unwrap();
        GluingTree::new(tree, &["8".into()], &[]).unwrap()
    }

    fn subset(labels: &[&str]) -> NodeSubset {
        NodeSubset::new(labels.to_vec())
    }

    fn coeff_map(entries: &[(&[&str], i64)]) -> BTreeMap<NodeSubset, BigRational> {
        entries
            .iter()
            .map(|(s, c)| (subset(s), ratio(*c)))
            .collect()
    }

    #[test]
    fn star_inequalities_match_paper() {
        let gt = star_gluing();
        let stars = star_inequalities(&gt);
        assert_eq!(stars.len(), 4);
        let expected = [
            coeff_map(&[(&["a", "b", "c"], 1), (&["a", "b", "c", "d"], -1)]),
            coeff_map(&[(&["a", "c", "d"], 1), (&["a", "b", "c", "d"], -1)]),
            coeff_map(&[(&["b", "c", "d"], 1), (&["a", "b", "c", "d"], -1)]),
            coeff_map(&[(&["a", "b", "c", "d"], 1)]),
        ];
        for e in &expected {
            assert!(
                stars.iter().any(|c| &c.coeffs == e && c.rhs == ratio(0)),
                "missing star inequality {e:?}"
            );
        }
    }

    #[test]
    fn star_inequality_path() {
        let tree = UndirectedTree::new(vec!["1", "2", "3"], &[("1", "2"), ("2", "3")]).unwrap();
        let gt = GluingTree::new(tree, &[], &[]).unwrap();
        let stars = star_inequalities(&gt);
        assert_eq!(stars.len(), 1);
        assert_eq!(stars[0].coeffs, coeff_map(&[(&["1", "2", "3"], 1)]));
    }

    #[test]
    fn indicator_examples() {
        let gt = star_gluing();
        let f = indicator_v("a", "c", &gt).unwrap();
        let expected: BTreeMap<NodeSubset, i64> = [
            (subset(&["a", "b", "c"]), 1),
            (subset(&["a", "c", "d"]), 1),
            (subset(&["a", "b", "c", "d"]), -1),
        ]
        .into_iter()
        .collect();
        assert_eq!(f, expected);

        let f = indicator_v("c", "a", &gt).unwrap();
        assert_eq!(f, [(subset(&["a", "a_z", "c"]), 1)].into_iter().collect());

        assert!(indicator_v("c", "b", &gt).is_err());
    }

    #[test]
    fn indicator_semantics_oracle() {
        // 1_{v <- u} evaluates to 1 iff v <- u lies in a v-structure of the
        // realized graph, checked by a direct graph scan.
        let gt = star_gluing();
        let targets = gt.all_targets();
        for d in enumerate_orientations(gt.tree(), &[], 22).unwrap() {
            let realized = IDag::new(d.clone(), &targets).unwrap().realize();
            let imset = char_imset_interventional(&IDag::new(d.clone(), &targets).unwrap());
            for (u, v) in gt.internal_edges() {
                for (tail, head) in [(&u, &v), (&v, &u)] {
                    let f = indicator_v(tail, head, &gt).unwrap();
                    let val: i64 = f
                        .iter()
                        .filter(|(s, _)| imset.get(s))
                        .map(|(_, c)| *c)
                        .sum();
                    let in_vstruct = crate::graphs::v_structures(&realized)
                        .iter()
                        .any(|(i, j, k)| j == head && (i == tail || k == tail));
                    assert_eq!(val, i64::from(in_vstruct), "{tail}->{head} in {d:?}");
                }
            }
        }
    }

    #[test]
    fn bidirected_star_matches_paper() {
        let gt = star_gluing();
        let bids = bidirected_edge_inequalities(&gt);
        assert_eq!(bids.len(), 2);
        let e1 = coeff_map(&[
            (&["a", "a_z", "c"], 1),
            (&["a", "b", "c"], 1),
            (&["a", "c", "d"], 1),
            (&["a", "b", "c", "d"], -1),
        ]);
        let e2 = coeff_map(&[
            (&["c", "d", "d_z"], 1),
            (&["a", "c", "d"], 1),
            (&["b", "c", "d"], 1),
            (&["a", "b", "c", "d"], -1),
        ]);
        for e in [&e1, &e2] {
            assert!(bids.iter().any(|c| &c.coeffs == e && c.rhs == ratio(1)));
        }

        // Path without targets has no internal edges.
        let tree = UndirectedTree::new(vec!["1", "2", "3"], &[("1", "2"), ("2", "3")]).unwrap();
        let gt = GluingTree::new(tree, &[], &[]).unwrap();
        assert!(bidirected_edge_inequalities(&gt).is_empty());
    }

    #[test]
    fn forced_out_functional_examples() {
        let gt = example_tree();
        // 1_{3 -> {}} = x123 + x134 + x234 - 2 x1234.
        let f = forced_out_functional("3", &[], &gt);
        let expected: BTreeMap<NodeSubset, i64> = [
            (subset(&["1", "2", "3"]), 1),
            (subset(&["1", "3", "4"]), 1),
            (subset(&["2", "3", "4"]), 1),
            (subset(&["1", "2", "3", "4"]), -2),
        ]
        .into_iter()
        .collect();
        assert_eq!(f, expected);

        // On the star with L covering all-but-one leaf, no admissible A exists.
        let gt = star_gluing();
        let f = forced_out_functional("c", &["a".into(), "d".into()], &gt);
        assert!(f.is_empty());
    }

    #[test]
    fn forced_out_semantics_oracle() {
        // 1_{c -> L} = 1 iff |pa(c)| >= 2 and pa(c) disjoint from L.
        let gt = example_tree();
        let targets = gt.all_targets();
        for d in enumerate_orientations(gt.tree(), &[], 22).unwrap() {
            let imset = char_imset_interventional(&IDag::new(d.clone(), &targets).unwrap());
            for (center, l_set) in [
                ("3", vec![]),
                ("3", vec!["4".to_string()]),
                ("4", vec!["3".to_string(), "8".to_string()]),
                ("4", vec!["5".to_string()]),
            ] {
                let f = forced_out_functional(center, &l_set, &gt);
                let val: i64 = f.iter().filter(|(s, _)| imset.get(s)).map(|(_, c)| *c).sum();
                let pa = d.parents(center);
                let expected = i64::from(pa.len() >= 2 && pa.iter().all(|p| !l_set.contains(p)));
                assert_eq!(val, expected, "center {center} L {l_set:?} dag {d:?}");
            }
        }
    }

    #[test]
    fn hash_functional_examples() {
        // Substar {a, c, d} of the star: #^S = x_acd.
        let f = hash_functional("c", &["a".into(), "c".into(), "d".into()]);
        assert_eq!(f, [(subset(&["a", "c", "d"]), 1)].into_iter().collect());
        // Neighborhood of size 2 gives the zero functional.
        let f = hash_functional("c", &["a".into(), "c".into()]);
        assert!(f.is_empty());
    }

    #[test]
    fn hash_semantics_oracle() {
        // #^S = max(|pa(c) /\ S| - 1, 0) on every orientation.
        let gt = example_tree();
        let targets = gt.all_targets();
        let star: Vec<String> = vec!["3".into(), "4".into(), "5".into(), "8".into()];
        for d in enumerate_orientations(gt.tree(), &[], 22).unwrap() {
            let imset = char_imset_interventional(&IDag::new(d.clone(), &targets).unwrap());
            let f = hash_functional("4", &star);
            let val: i64 = f.iter().filter(|(s, _)| imset.get(s)).map(|(_, c)| *c).sum();
            let pa = d
                .parents("4")
                .iter()
                .filter(|p| star.contains(p))
                .count() as i64;
            assert_eq!(val, (pa - 1).max(0));
        }
    }

    #[test]
    fn forked_subtrees_star() {
        let gt = star_gluing();
        let subs = enumerate_forked_subtrees(&gt, DEFAULT_SUBTREE_CAP).unwrap();
        assert_eq!(subs.len(), 1);
        let nodes: Vec<&String> = subs[0].nodes.iter().collect();
        assert_eq!(nodes, ["a", "c", "d"]);
        assert!(subs[0].fork_nodes.is_empty());
        assert_eq!(subs[0].interior.len(), 1);
        assert_eq!(subs[0].target_leaf_edges.len(), 2);
    }

    #[test]
    fn forked_subtrees_path() {
        let tree = UndirectedTree::new(vec!["1", "2", "3"], &[("1", "2"), ("2", "3")]).unwrap();
        let gt = GluingTree::new(tree, &[], &[]).unwrap();
        let subs = enumerate_forked_subtrees(&gt, DEFAULT_SUBTREE_CAP).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(subs[0].nodes.iter().collect::<Vec<_>>(), ["2"]);
    }

    #[test]
    fn forked_subtrees_example_tree() {
        // The literal subtree conditions admit {3}, {5}, {4,8}, {3,4,8},
        // {4,5,8} and {3,4,5,8}; the paper's example lists only the four
        // facet-defining ones. Validity of all six is asserted below and the
        // facet filter is exercised in the solver tests.
        let gt = example_tree();
        let subs = enumerate_forked_subtrees(&gt, DEFAULT_SUBTREE_CAP).unwrap();
        let sets: Vec<Vec<&String>> = subs.iter().map(|s| s.nodes.iter().collect()).collect();
        assert_eq!(
            sets,
            vec![
                vec!["3"],
                vec!["3", "4", "5", "8"],
                vec!["3", "4", "8"],
                vec!["4", "5", "8"],
                vec!["4", "8"],
                vec!["5"],
            ]
        );
    }

    #[test]
    fn forked_inequality_star() {
        let gt = star_gluing();
        let subs = enumerate_forked_subtrees(&gt, DEFAULT_SUBTREE_CAP).unwrap();
        let ineq = forked_tree_inequality(&subs[0], &gt);
        // (1 - x_aa'c) + (1 - x_cdd') <= 1 + x_acd, i.e.
        // -x_aa'c - x_cdd' - x_acd <= -1.
        let expected = coeff_map(&[
            (&["a", "a_z", "c"], -1),
            (&["c", "d", "d_z"], -1),
            (&["a", "c", "d"], -1),
        ]);
        assert_eq!(ineq.coeffs, expected);
        assert_eq!(ineq.rhs, ratio(-1));
    }

    #[test]
    fn forked_inequality_singleton_untargeted() {
        // Singleton {c} of an untargeted star: 1_{c -> {}} <= 1.
        let tree = UndirectedTree::new(
            vec!["a", "b", "c", "d"],
            &[("a", "c"), ("b", "c"), ("c", "d")],
        )
        .unwrap();
        let gt = GluingTree::new(tree, &[], &[]).unwrap();
        let subs = enumerate_forked_subtrees(&gt, DEFAULT_SUBTREE_CAP).unwrap();
        assert_eq!(subs.len(), 1);
        let ineq = forked_tree_inequality(&subs[0], &gt);
        let expected = coeff_map(&[
            (&["a", "b", "c"], 1),
            (&["a", "c", "d"], 1),
            (&["b", "c", "d"], 1),
            (&["a", "b", "c", "d"], -2),
        ]);
        assert_eq!(ineq.coeffs, expected);
        assert_eq!(ineq.rhs, ratio(1));
    }

    #[test]
    fn h_representation_counts() {
        // Star with n leaves and k targets: 2^n - n + k inequalities.
        for n in 2..=5usize {
            for k in 0..=n {
                let mut nodes: Vec<String> = vec!["c".into()];
                let mut edges = Vec::new();
                for i in 0..n {
                    let l = format!("l{i}");
                    nodes.push(l.clone());
                    edges.push(("c".to_string(), l));
                }
                let refs: Vec<(&str, &str)> =
                    edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
                let tree = UndirectedTree::new(nodes, &refs).unwrap();
                let targets: Vec<String> = (0..k).map(|i| format!("l{i}")).collect();
                let gt = GluingTree::new(tree, &targets, &[]).unwrap();
                let h = h_representation(&gt).unwrap();
                assert_eq!(
                    h.inequalities.len(),
                    (1 << n) - n + k,
                    "star n={n} k={k}"
                );
                assert!(h.equalities.is_empty());
            }
        }
    }

    #[test]
    fn h_representation_valid_on_all_vertices() {
        for gt in [star_gluing(), example_tree()] {
            let h = h_representation(&gt).unwrap();
            let verts = enumerate_vertices(&gt, 22).unwrap();
            for (imset, _) in &verts {
                for c in h.inequalities.iter().chain(&h.equalities) {
                    assert!(c.satisfied_by(imset), "violated: {c} on {imset:?}");
                }
            }
        }
    }

    #[test]
    fn vertex_counts() {
        // Path 1-2-3: two vertices.
        let tree = UndirectedTree::new(vec!["1", "2", "3"], &[("1", "2"), ("2", "3")]).unwrap();
        let gt = GluingTree::new(tree, &[], &[]).unwrap();
        assert_eq!(enumerate_vertices(&gt, 22).unwrap().len(), 2);

        // Stars: 2^n - n + k vertices over the n leaves.
        let gt = star_gluing();
        assert_eq!(enumerate_vertices(&gt, 22).unwrap().len(), 8 - 3 + 2);
    }

    #[test]
    fn parting_and_tfp_glue_round_trip() {
        // Fig. 3: a-i, b-i, i-j, j-k, k-c, k-d with J = {j}.
        let tree = UndirectedTree::new(
            vec!["a", "b", "c", "d", "i", "j", "k"],
            &[("a", "i"), ("b", "i"), ("i", "j"), ("j", "k"), ("k", "c"), ("k", "d")],
        )
        .unwrap();
        let gt = GluingTree::new(tree, &[], &["j".into()]).unwrap();
        let (left, right) = interventional_parting(&gt, "j").unwrap();
        assert_eq!(left.leaf_targets(), ["j"]);
        assert_eq!(right.leaf_targets(), ["j"]);
        assert!(left.degree_two_targets().is_empty());
        assert_eq!(left.tree().nodes().len(), 4);
        assert_eq!(right.tree().nodes().len(), 4);

        let lv: Vec<CharImset> = enumerate_vertices(&left, 22)
            .unwrap()
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        let rv: Vec<CharImset> = enumerate_vertices(&right, 22)
            .unwrap()
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        let glued = tfp_glue(
            &lv,
            &rv,
            &subset(&["i", "j", "j_z"]),
            &subset(&["j", "j_z", "k"]),
        );
        let direct: Vec<CharImset> = enumerate_vertices(&gt, 22)
            .unwrap()
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        assert_eq!(glued, direct);

        assert!(matches!(
            interventional_parting(&gt, "i"),
            Err(QigError::InvalidGraph(_))
        ));
    }

    #[test]
    fn glued_hrep_is_the_product_hrep_plus_hyperplane() {
        // For the two-star gluing tree, the generated H-representation rows
        // are exactly the union of the parts' rows, and the equalities add
        // the x_{ijj'} + x_{jj'k} = 1 hyperplane with the two vanishing
        // coordinates.
        let tree = UndirectedTree::new(
            vec!["a", "b", "c", "d", "i", "j", "k"],
            &[("a", "i"), ("b", "i"), ("i", "j"), ("j", "k"), ("k", "c"), ("k", "d")],
        )
        .unwrap();
        let gt = GluingTree::new(tree, &[], &["j".into()]).unwrap();
        let whole = h_representation(&gt).unwrap();
        let (left, right) = interventional_parting(&gt, "j").unwrap();
        let mut product_rows: Vec<String> = Vec::new();
        for part in [&left, &right] {
            for c in h_representation(part).unwrap().inequalities {
                product_rows.push(c.to_string());
            }
        }
        let mut whole_rows: Vec<String> =
            whole.inequalities.iter().map(|c| c.to_string()).collect();
        product_rows.sort();
        whole_rows.sort();
        assert_eq!(whole_rows, product_rows);
        assert_eq!(whole.equalities.len(), 3);
        let texts: Vec<String> = whole.equalities.iter().map(|c| c.to_string()).collect();
        assert!(texts.contains(&"x_{ijj'} + x_{jj'k} = 1".to_string()));
        assert!(texts.contains(&"x_{ijk} = 0".to_string()));
        assert!(texts.contains(&"x_{ijj'k} = 0".to_string()));
    }

    #[test]
    fn tfp_glue_empty_when_projections_disagree() {
        // All-0 against all-1 matching values glue to nothing... here both
        // sides project to the same constant so no pair satisfies
        // pi1 = pi2.
        let v1 = vec![CharImset::from_ones(vec![subset(&["x", "j", "j_z"])])];
        let v2 = vec![CharImset::from_ones(vec![subset(&["j", "j_z", "y"])])];
        let glued = tfp_glue(
            &v1,
            &v2,
            &subset(&["x", "j", "j_z"]),
            &subset(&["j", "j_z", "y"]),
        );
        assert!(glued.is_empty());
    }

    #[test]
    fn j_node_equalities_and_vertices() {
        let tree = UndirectedTree::new(vec!["1", "2", "3"], &[("1", "2"), ("2", "3")]).unwrap();
        let gt = GluingTree::new(tree, &[], &["2".into()]).unwrap();
        let h = h_representation(&gt).unwrap();
        assert_eq!(h.equalities.len(), 3);
        let verts = enumerate_vertices(&gt, 22).unwrap();
        // Only the two through-orientations survive, with distinct imsets.
        assert_eq!(verts.len(), 2);
        for (imset, _) in &verts {
            for eq in &h.equalities {
                assert!(eq.satisfied_by(imset));
            }
        }
    }

    #[test]
    fn constraint_display() {
        let gt = star_gluing();
        let stars = star_inequalities(&gt);
        let texts: Vec<String> = stars.iter().map(|c| c.to_string()).collect();
        assert!(texts.contains(&"x_{abc} - x_{abcd} >= 0".to_string()));
        assert!(texts.contains(&"x_{abcd} >= 0".to_string()));
    }
}
