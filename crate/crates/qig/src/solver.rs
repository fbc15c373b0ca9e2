//! Exact LP over the H-representation, brute-force optimum oracle,
//! imset-to-DAG reconstruction and facet verification.
//!
//! The simplex works on an integer tableau with a common denominator
//! (fraction-free pivoting), so no floating point and no gcd churn enters
//! the pivot loop. Bland's rule guarantees termination; a big-M row handles
//! the rows that are infeasible at the origin.

use crate::graphs::{intervention_label, Dag, IDag, UndirectedTree};
use crate::imsets::{char_imset_interventional, CharImset, CoordinateSystem, NodeSubset};
use crate::polytope::{HRepresentation, LinearConstraint, Sense};
use crate::{QigError, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;

/// Denominator cap used when rationalizing floating-point objectives.
pub const RATIONALIZE_DENOM_BITS: u32 = 40;

/// Continued-fraction rationalization with bounded denominator.
pub fn rationalize(x: f64, denom_bits: u32) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(QigError::Rationalize(x));
    }
    let cap = BigInt::one() << denom_bits;
    let negative = x < 0.0;
    let mut target = x.abs();
    if target > 1e30 {
        return Err(QigError::Rationalize(x));
    }
    // Continued fraction expansion h_k / k_k.
    let (mut h0, mut k0) = (BigInt::zero(), BigInt::one());
    let (mut h1, mut k1) = (BigInt::one(), BigInt::zero());
    for _ in 0..64 {
        let a = target.floor();
        if !a.is_finite() {
            break;
        }
        let ab = BigInt::from(a as i128);
        let h2 = &ab * &h1 + &h0;
        let k2 = &ab * &k1 + &k0;
        if k2 > cap {
            break;
        }
        h0 = std::mem::replace(&mut h1, h2);
        k0 = std::mem::replace(&mut k1, k2);
        let frac = target - a;
        if frac.abs() < 1e-18 {
            break;
        }
        target = 1.0 / frac;
    }
    if k1.is_zero() {
        return Err(QigError::Rationalize(x));
    }
    let r = BigRational::new(h1, k1);
    Ok(if negative { -r } else { r })
}

/// Maximization problem over an H-representation.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub hrep: HRepresentation,
    /// Dense objective over the coordinate system.
    pub objective: Vec<BigRational>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Optimal point in coordinate order.
    pub point: Vec<BigRational>,
    pub value: BigRational,
    /// Basic variable indices of the final tableau, in row order.
    pub basis: Vec<usize>,
    /// All coordinates in {0, 1}.
    pub vertex_flag: bool,
}

/// What a coordinate is replaced with once the affine-span equalities are
/// eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Subst {
    Keep(usize),
    Zero,
    /// x = 1 - x_other where `other` is a kept reduced index.
    OneMinus(usize),
}

fn build_substitutions(h: &HRepresentation) -> Result<(Vec<Subst>, usize)> {
    let d = h.coords.len();
    let mut subst: Vec<Option<Subst>> = vec![None; d];
    // Zero coordinates first.
    for eq in &h.equalities {
        if eq.rhs.is_zero() && eq.coeffs.len() == 1 {
            let (s, _) = eq.coeffs.iter().next().unwrap();
            let i = h
                .coords
                .position(s)
                .ok_or_else(|| QigError::InvalidGraph(format!("unknown coordinate {s}")))?;
            subst[i] = Some(Subst::Zero);
        }
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for eq in &h.equalities {
        if eq.rhs.is_one() && eq.coeffs.len() == 2 {
            let mut it = eq.coeffs.iter();
            let (s1, _) = it.next().unwrap();
            let (s2, _) = it.next().unwrap();
            let i1 = h.coords.position(s1).unwrap();
            let i2 = h.coords.position(s2).unwrap();
            pairs.push((i1.min(i2), i1.max(i2)));
        }
    }
    // Kept coordinates get consecutive reduced indices.
    let mut reduced = 0usize;
    let mut keep_index: Vec<Option<usize>> = vec![None; d];
    for i in 0..d {
        if subst[i].is_some() || pairs.iter().any(|&(_, hi)| hi == i) {
            continue;
        }
        keep_index[i] = Some(reduced);
        reduced += 1;
    }
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        if let Some(s) = subst[i] {
            out.push(s);
        } else if let Some(&(lo, _)) = pairs.iter().find(|&&(_, hi)| hi == i) {
            out.push(Subst::OneMinus(keep_index[lo].expect("lower pair coordinate kept")));
        } else {
            out.push(Subst::Keep(keep_index[i].unwrap()));
        }
    }
    Ok((out, reduced))
}

/// A row `coeffs . x <= rhs` over reduced coordinates.
struct ReducedRow {
    coeffs: Vec<BigRational>,
    rhs: BigRational,
}

fn reduce_constraint(
    c: &LinearConstraint,
    coords: &CoordinateSystem,
    subst: &[Subst],
    reduced: usize,
) -> Vec<ReducedRow> {
    let mut coeffs = vec![BigRational::zero(); reduced];
    let mut rhs = c.rhs.clone();
    for (s, a) in &c.coeffs {
        let i = coords.position(s).expect("constraint coordinate in system");
        match subst[i] {
            Subst::Keep(r) => coeffs[r] += a,
            Subst::Zero => {}
            Subst::OneMinus(r) => {
                rhs -= a;
                coeffs[r] -= a;
            }
        }
    }
    match c.sense {
        Sense::Le => vec![ReducedRow { coeffs, rhs }],
        Sense::Ge => vec![ReducedRow {
            coeffs: coeffs.into_iter().map(|x| -x).collect(),
            rhs: -rhs,
        }],
        Sense::Eq => {
            let neg = ReducedRow {
                coeffs: coeffs.iter().map(|x| -x.clone()).collect(),
                rhs: -rhs.clone(),
            };
            vec![ReducedRow { coeffs, rhs }, neg]
        }
    }
}

/// Fraction-free big-M simplex for `max c.y` s.t. `A y <= b`, `y` free
/// (split internally as y = y+ - y-). Deterministic under Bland's rule.
struct Simplex {
    /// Integer tableau over the common denominator `den`; rows 0..m are
    /// constraints, row m is the M-objective, row m+1 the real objective.
    tab: Vec<Vec<BigInt>>,
    den: BigInt,
    basis: Vec<usize>,
    ncols: usize,
    first_artificial: usize,
}

impl Simplex {
    fn new(rows: &[ReducedRow], objective: &[BigRational], nfree: usize) -> Self {
        let m = rows.len();
        let nvars = 2 * nfree;
        let nart = rows.iter().filter(|r| r.rhs.is_negative()).count();
        let ncols = nvars + m + nart + 1; // + rhs column
        let rhs_col = ncols - 1;
        let mut tab: Vec<Vec<BigInt>> = Vec::with_capacity(m + 2);
        let mut basis = Vec::with_capacity(m);
        let mut art = 0usize;
        for (r, row) in rows.iter().enumerate() {
            // Scale the row to integers with a positive factor; slack and
            // artificial coefficients are absorbed into rescaled variables.
            let mut lcm = row.rhs.denom().clone();
            for c in &row.coeffs {
                lcm = lcm.lcm(c.denom());
            }
            let scale = BigRational::from_integer(lcm);
            let negate = row.rhs.is_negative();
            let sgn = if negate { -BigInt::one() } else { BigInt::one() };
            let mut t = vec![BigInt::zero(); ncols];
            for (j, c) in row.coeffs.iter().enumerate() {
                let v = (c * &scale).to_integer() * &sgn;
                t[2 * j] = v.clone();
                t[2 * j + 1] = -v;
            }
            t[nvars + r] = &sgn * BigInt::one(); // slack (negated when row flipped)
            t[rhs_col] = (&row.rhs * &scale).to_integer() * &sgn;
            if negate {
                t[nvars + m + art] = BigInt::one();
                basis.push(nvars + m + art);
                art += 1;
            } else {
                basis.push(nvars + r);
            }
            tab.push(t);
        }
        // M-row: reduced cost of -sum(artificials) under the initial basis.
        let mut mrow = vec![BigInt::zero(); ncols];
        for j in 0..nart {
            mrow[nvars + m + j] = -BigInt::one();
        }
        for (r, row) in rows.iter().enumerate() {
            if row.rhs.is_negative() {
                for k in 0..ncols {
                    let add = tab[r][k].clone();
                    mrow[k] += add;
                }
            }
        }
        // Real objective row, scaled to integers.
        let mut lcm = BigInt::one();
        for c in objective {
            lcm = lcm.lcm(c.denom());
        }
        let scale = BigRational::from_integer(lcm);
        let mut crow = vec![BigInt::zero(); ncols];
        for (j, c) in objective.iter().enumerate() {
            let v = (c * &scale).to_integer();
            crow[2 * j] = v.clone();
            crow[2 * j + 1] = -v;
        }
        tab.push(mrow);
        tab.push(crow);
        Simplex {
            tab,
            den: BigInt::one(),
            basis,
            ncols,

            first_artificial: nvars + m,
        }
    }

    fn m_rows(&self) -> usize {
        self.tab.len() - 2
    }

    /// Lexicographic reduced cost: improving iff (M, c) > (0, 0).
    fn improving(&self, j: usize) -> bool {
        let m = self.m_rows();
        let mc = &self.tab[m][j];
        if mc.is_positive() {
            return true;
        }
        if mc.is_negative() {
            return false;
        }
        self.tab[m + 1][j].is_positive()
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.tab[row][col].clone();
        debug_assert!(piv.is_positive());
        let nrows = self.tab.len();
        for i in 0..nrows {
            if i == row {
                continue;
            }
            let factor = self.tab[i][col].clone();
            for k in 0..self.ncols {
                let num = &self.tab[i][k] * &piv - &factor * &self.tab[row][k];
                let (q, r) = num.div_rem(&self.den);
                debug_assert!(r.is_zero(), "fraction-free pivot division must be exact");
                self.tab[i][k] = q;
            }
        }
        self.den = piv;
        self.basis[row] = col;
    }

    /// Runs Bland's rule to optimality. Returns Err on unboundedness.
    fn solve(&mut self) -> Result<()> {
        let rhs_col = self.ncols - 1;
        let max_iters = 2_000_000usize;
        for _ in 0..max_iters {
            // Entering: smallest improving non-artificial column.
            let mut entering = None;
            for j in 0..self.first_artificial {
                if self.improving(j) {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };
            // Ratio test with Bland tie-breaking on the basic variable.
            let mut best: Option<(usize, BigInt, BigInt)> = None; // (row, rhs, piv)
            for i in 0..self.m_rows() {
                if !self.tab[i][col].is_positive() {
                    continue;
                }
                let rhs = self.tab[i][rhs_col].clone();
                let piv = self.tab[i][col].clone();
                let better = match &best {
                    None => true,
                    Some((bi, brhs, bpiv)) => {
                        // rhs/piv < brhs/bpiv  <=>  rhs*bpiv < brhs*piv
                        match (&rhs * bpiv).cmp(&(brhs * &piv)) {
                            std::cmp::Ordering::Less => true,
                            std::cmp::Ordering::Greater => false,
                            std::cmp::Ordering::Equal => self.basis[i] < self.basis[*bi],
                        }
                    }
                };
                if better {
                    best = Some((i, rhs, piv));
                }
            }
            match best {
                Some((row, _, _)) => self.pivot(row, col),
                None => {
                    // M-improving columns cannot be unbounded rays of the
                    // original problem, but either way the representation
                    // fails to bound the region.
                    return Err(QigError::Unbounded);
                }
            }
        }
        Err(QigError::Solver("simplex iteration cap exceeded".into()))
    }

    fn infeasible(&self) -> bool {
        let m = self.m_rows();
        !self.tab[m][self.ncols - 1].is_zero()
    }

    /// Value of variable `v` at the current basis.
    fn var_value(&self, v: usize) -> BigRational {
        for (i, &b) in self.basis.iter().enumerate() {
            if b == v {
                return BigRational::new(self.tab[i][self.ncols - 1].clone(), self.den.clone());
            }
        }
        BigRational::zero()
    }
}

fn solve_reduced(
    rows: &[ReducedRow],
    objective: &[BigRational],
    nfree: usize,
) -> Result<(Vec<BigRational>, BigRational, Vec<usize>)> {
    let mut sx = Simplex::new(rows, objective, nfree);
    sx.solve()?;
    if sx.infeasible() {
        return Err(QigError::Solver(
            "infeasible linear program; the H-representation excludes every point".into(),
        ));
    }
    let mut point = Vec::with_capacity(nfree);
    for j in 0..nfree {
        point.push(sx.var_value(2 * j) - sx.var_value(2 * j + 1));
    }
    let value: BigRational = objective
        .iter()
        .zip(&point)
        .map(|(c, x)| c * x)
        .sum();
    Ok((point, value, sx.basis.clone()))
}

/// Exact maximization of `p.objective` over the H-representation. The
/// degree-two-target equalities are eliminated by substitution before
/// pivoting.
pub fn lp_maximize(p: &LpProblem) -> Result<LpSolution> {
    if p.objective.len() != p.hrep.coords.len() {
        return Err(QigError::Solver(format!(
            "objective length {} does not match {} coordinates",
            p.objective.len(),
            p.hrep.coords.len()
        )));
    }
    let (subst, reduced) = build_substitutions(&p.hrep)?;
    let mut rows = Vec::new();
    for c in &p.hrep.inequalities {
        rows.extend(reduce_constraint(c, &p.hrep.coords, &subst, reduced));
    }
    // Reduced objective plus constant offset from the 1 - x substitutions.
    let mut obj = vec![BigRational::zero(); reduced];
    let mut offset = BigRational::zero();
    for (i, c) in p.objective.iter().enumerate() {
        match subst[i] {
            Subst::Keep(r) => obj[r] += c,
            Subst::Zero => {}
            Subst::OneMinus(r) => {
                offset += c;
                obj[r] -= c;
            }
        }
    }
    let (rpoint, rvalue, basis) = solve_reduced(&rows, &obj, reduced)?;
    let point: Vec<BigRational> = subst
        .iter()
        .map(|s| match s {
            Subst::Keep(r) => rpoint[*r].clone(),
            Subst::Zero => BigRational::zero(),
            Subst::OneMinus(r) => BigRational::one() - &rpoint[*r],
        })
        .collect();
    let vertex_flag = point.iter().all(|x| x.is_zero() || x.is_one());
    Ok(LpSolution {
        point,
        value: rvalue + offset,
        basis,
        vertex_flag,
    })
}

/// [`lp_maximize`] followed, when the optimum is not a 0/1 point, by a
/// lexicographic sequence of solves over the optimal face to force a vertex.
/// Returns the solution and whether the fallback fired.
pub fn lp_maximize_vertex(p: &LpProblem) -> Result<(LpSolution, bool)> {
    let first = lp_maximize(p)?;
    if first.vertex_flag {
        return Ok((first, false));
    }
    log::warn!("LP optimum is not a vertex; running lexicographic refinement");
    let mut hrep = p.hrep.clone();
    // Pin the optimal value, then maximize coordinates one at a time.
    let coords = hrep.coords.clone();
    let value_row = LinearConstraint {
        coeffs: (0..coords.len())
            .filter(|i| !p.objective[*i].is_zero())
            .map(|i| (coords.subset(i).clone(), p.objective[i].clone()))
            .collect(),
        sense: Sense::Eq,
        rhs: first.value.clone(),
        tag: crate::polytope::ConstraintTag::AffineSpan,
    };
    hrep.inequalities.push(value_row);
    let mut last = first;
    for i in 0..coords.len() {
        let mut obj = vec![BigRational::zero(); coords.len()];
        obj[i] = BigRational::one();
        let sol = lp_maximize(&LpProblem {
            hrep: hrep.clone(),
            objective: obj,
        })?;
        hrep.inequalities.push(LinearConstraint {
            coeffs: [(coords.subset(i).clone(), BigRational::one())]
                .into_iter()
                .collect(),
            sense: Sense::Eq,
            rhs: sol.point[i].clone(),
            tag: crate::polytope::ConstraintTag::AffineSpan,
        });
        last = sol;
        if last.vertex_flag {
            break;
        }
    }
    let value: BigRational = p
        .objective
        .iter()
        .zip(&last.point)
        .map(|(c, x)| c * x)
        .sum();
    last.value = value;
    Ok((last, true))
}

/// Brute-force maximizer over an explicit vertex list; ties resolve to the
/// lexicographically smallest dense vector.
pub fn brute_force_optimum<'a>(
    vertices: &'a [(CharImset, Dag)],
    coords: &CoordinateSystem,
    objective: &[BigRational],
) -> (&'a CharImset, BigRational) {
    assert!(!vertices.is_empty(), "vertex list must be nonempty");
    let mut best: Option<(&CharImset, BigRational, Vec<u8>)> = None;
    for (imset, _) in vertices {
        let dense = coords.densify(imset);
        let value: BigRational = dense
            .iter()
            .zip(objective)
            .filter(|(d, _)| **d == 1)
            .map(|(_, c)| c.clone())
            .sum();
        let replace = match &best {
            None => true,
            Some((_, bv, bd)) => value > *bv || (value == *bv && dense < *bd),
        };
        if replace {
            best = Some((imset, value, dense));
        }
    }
    let (imset, value, _) = best.unwrap();
    (imset, value)
}

/// Builds a full imset (skeleton edges included) from a 0/1 point over the
/// coordinate system.
pub fn imset_from_point(
    point: &[BigRational],
    coords: &CoordinateSystem,
    tree: &UndirectedTree,
    targets: &[String],
) -> Result<CharImset> {
    let mut ones: Vec<NodeSubset> = Vec::new();
    for (i, x) in point.iter().enumerate() {
        if x.is_one() {
            ones.push(coords.subset(i).clone());
        } else if !x.is_zero() {
            return Err(QigError::InconsistentImset(format!(
                "coordinate {} has non-binary value {x}",
                coords.subset(i)
            )));
        }
    }
    for (u, v) in tree.edges() {
        ones.push(NodeSubset::new(vec![u.clone(), v.clone()]));
    }
    for t in targets {
        ones.push(NodeSubset::new(vec![t.clone(), intervention_label(t)]));
    }
    Ok(CharImset::from_ones(ones))
}

/// Recovers a representative DAG whose realized imset equals `c`.
///
/// Orientation forced by the size-3 coordinates, then the essential-graph
/// closure, then free components oriented away from a deterministic root.
/// The result is verified by recomputing the imset; failure means `c` is not
/// a vertex of the polytope.
pub fn reconstruct_dag(c: &CharImset, tree: &UndirectedTree, targets: &[String]) -> Result<Dag> {
    for t in targets {
        if tree.degree(t) != 1 {
            return Err(QigError::InvalidGraph(format!(
                "target `{t}` is not a leaf of the skeleton"
            )));
        }
    }
    let nodes = tree.nodes().to_vec();
    let idx = |v: &str| nodes.iter().position(|n| n == v).unwrap();
    let mut arcs: BTreeMap<(usize, usize), ()> = BTreeMap::new();
    let mut undirected: Vec<(usize, usize)> = tree
        .edges()
        .iter()
        .map(|(u, v)| (idx(u), idx(v)))
        .collect();

    let orient = |arcs: &mut BTreeMap<(usize, usize), ()>,
                  undirected: &mut Vec<(usize, usize)>,
                  t: usize,
                  h: usize|
     -> Result<()> {
        if let Some(pos) = undirected
            .iter()
            .position(|&(a, b)| (a, b) == (t.min(h), t.max(h)) || (b, a) == (t.min(h), t.max(h)))
        {
            undirected.remove(pos);
            arcs.insert((t, h), ());
            Ok(())
        } else if arcs.contains_key(&(t, h)) {
            Ok(())
        } else {
            Err(QigError::InconsistentImset(format!(
                "conflicting orientations for edge {}-{}",
                nodes[t], nodes[h]
            )))
        }
    };

    // (1) triples around internal nodes give parent pairs.
    for v in tree.internal_nodes() {
        let neigh = tree.neighbors(&v);
        for (a, u) in neigh.iter().enumerate() {
            for w in &neigh[a + 1..] {
                let s = NodeSubset::new(vec![u.clone(), v.clone(), w.clone()]);
                if c.get(&s) {
                    orient(&mut arcs, &mut undirected, idx(u), idx(&v))?;
                    orient(&mut arcs, &mut undirected, idx(w), idx(&v))?;
                }
            }
        }
    }
    // (2) targeted leaves are decided by their triple coordinate.
    for t in targets {
        let u = &tree.neighbors(t)[0];
        let s = crate::imsets::target_triple(u, t);
        if c.get(&s) {
            orient(&mut arcs, &mut undirected, idx(u), idx(t))?;
        } else {
            orient(&mut arcs, &mut undirected, idx(t), idx(u))?;
        }
    }
    // (3) closure: w -> u and u - v undirected forces u -> v.
    loop {
        let mut fire: Option<(usize, usize)> = None;
        'scan: for (&(_, u), ()) in arcs.iter() {
            for &(a, b) in undirected.iter() {
                if a == u || b == u {
                    fire = Some((u, if a == u { b } else { a }));
                    break 'scan;
                }
            }
        }
        match fire {
            Some((u, v)) => orient(&mut arcs, &mut undirected, u, v)?,
            None => break,
        }
    }
    // (4) remaining components: orient away from the first node in order.
    while let Some(&(a, b)) = undirected.first() {
        let root = a.min(b);
        // BFS through undirected edges from the root.
        let mut queue = vec![root];
        while let Some(v) = queue.pop() {
            let incident: Vec<(usize, usize)> = undirected
                .iter()
                .copied()
                .filter(|&(x, y)| x == v || y == v)
                .collect();
            for (x, y) in incident {
                let w = if x == v { y } else { x };
                orient(&mut arcs, &mut undirected, v, w)?;
                queue.push(w);
            }
        }
    }

    let dag = Dag::from_owned(
        nodes.clone(),
        arcs.keys().map(|&(t, h)| (nodes[t].clone(), nodes[h].clone())),
    )?;
    let realized = char_imset_interventional(&IDag::new(dag.clone(), targets)?);
    if &realized != c {
        return Err(QigError::InconsistentImset(
            "reconstructed DAG does not reproduce the imset".into(),
        ));
    }
    Ok(dag)
}

/// Exact rank of a rational matrix by Gaussian elimination.
fn rational_rank(mut m: Vec<Vec<BigRational>>) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut rank = 0;
    let mut row = 0;
    for col in 0..cols {
        let Some(p) = (row..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        for r in 0..rows {
            if r != row && !m[r][col].is_zero() {
                let f = &m[r][col] / &m[row][col];
                for k in col..cols {
                    let sub = &f * &m[row][k];
                    m[r][k] -= sub;
                }
            }
        }
        rank += 1;
        row += 1;
        if row == rows {
            break;
        }
    }
    rank
}

/// Affine dimension of a point set: rank of the difference matrix. Empty
/// input yields -1.
pub fn affine_dim(points: &[Vec<BigRational>]) -> i64 {
    if points.is_empty() {
        return -1;
    }
    let base = &points[0];
    let diffs: Vec<Vec<BigRational>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    rational_rank(diffs) as i64
}

fn densify_rational(coords: &CoordinateSystem, c: &CharImset) -> Vec<BigRational> {
    coords
        .densify(c)
        .into_iter()
        .map(|b| BigRational::from_integer(BigInt::from(b)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FacetReport {
    pub valid: bool,
    pub tight_dim: i64,
    pub facet: bool,
}

/// Checks one inequality against an explicit vertex list: validity, the
/// affine dimension of the tight vertices, and facet-ness relative to the
/// affine dimension of the whole vertex set.
pub fn facet_check(
    coords: &CoordinateSystem,
    vertices: &[(CharImset, Dag)],
    ineq: &LinearConstraint,
) -> FacetReport {
    assert!(!vertices.is_empty());
    let mut valid = true;
    let mut tight: Vec<Vec<BigRational>> = Vec::new();
    let mut all: Vec<Vec<BigRational>> = Vec::new();
    for (imset, _) in vertices {
        if !ineq.satisfied_by(imset) {
            valid = false;
        }
        let dense = densify_rational(coords, imset);
        if ineq.is_tight_on(imset) {
            tight.push(dense.clone());
        }
        all.push(dense);
    }
    let tight_dim = affine_dim(&tight);
    let facet = valid && tight_dim == affine_dim(&all) - 1;
    FacetReport {
        valid,
        tight_dim,
        facet,
    }
}
