//! The end-to-end tree learner: mutual-information skeleton, leaf-target
//! filtering, BIC objective, exact LP over the H-representation, and
//! essential-graph reporting.

use crate::data::{Context, InterventionalDataset};
use crate::gaussian::{bic_direct, mi_weights, kruskal_mst, objective_vector};
use crate::graphs::{essential_graph, GraphJson, Pdag, UndirectedTree};
use crate::imsets::CharImset;
use crate::polytope::{h_representation_capped, GluingTree};
use crate::solver::{imset_from_point, lp_maximize_vertex, rationalize, LpProblem};
use crate::{QigError, Result};
use serde::Serialize;
use std::time::Instant;

/// Knobs for one learning run.
#[derive(Debug, Clone)]
pub struct LearnOptions {
    /// Pool all contexts into the mutual-information weights instead of
    /// using the observational context only.
    pub mi_pool: bool,
    /// Subtract per-context column means before scoring.
    pub center: bool,
    /// Cap on free edges in enumeration fallbacks.
    pub edge_cap: usize,
    /// Cap on the connected-subtree scan.
    pub subtree_cap: usize,
    /// Denominator bits when rationalizing the LP objective.
    pub rational_bits: u32,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            mi_pool: false,
            center: false,
            edge_cap: crate::graphs::DEFAULT_EDGE_CAP,
            subtree_cap: crate::polytope::DEFAULT_SUBTREE_CAP,
            rational_bits: crate::solver::RATIONALIZE_DENOM_BITS,
        }
    }
}

/// Everything the learner found, JSON-serializable for the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct LearnReport {
    pub skeleton: GraphJson,
    pub retained_targets: Vec<String>,
    pub discarded_targets: Vec<String>,
    /// Optimal imset over the coordinate system, `key -> 0/1`.
    pub optimal_imset: serde_json::Value,
    pub representative_dag: GraphJson,
    pub essential_graph: GraphJson,
    /// BIC of the representative DAG.
    pub score: f64,
    /// The lexicographic vertex fallback fired (anomaly; logged).
    pub lex_fallback: bool,
    pub elapsed_ms: u128,
}

#[derive(Debug)]
pub struct LearnOutcome {
    pub report: LearnReport,
    pub skeleton: UndirectedTree,
    pub imset: CharImset,
    pub representative: crate::graphs::Dag,
    pub essential: Pdag,
}

/// Runs the full pipeline on a dataset.
pub fn qig_learn(ds: &InterventionalDataset, opts: &LearnOptions) -> Result<LearnOutcome> {
    let start = Instant::now();
    if ds.variables().len() < 2 {
        return Err(QigError::InvalidData("need at least two variables".into()));
    }
    let mut ds = ds.clone();
    if opts.center {
        ds.center();
    }

    // Skeleton phase: negative mutual information + Kruskal.
    let weights = mi_weights(&ds, opts.mi_pool)?;
    let skeleton = kruskal_mst(&weights, ds.variables())?;

    // Keep only interventions that target leaves of the estimated skeleton.
    let leaves = skeleton.leaves();
    let mut retained_contexts: Vec<Context> = vec![ds.contexts()[0].clone()];
    let mut retained_targets = Vec::new();
    let mut discarded_targets = Vec::new();
    for ctx in &ds.contexts()[1..] {
        let t = ctx.target.clone().unwrap();
        if leaves.contains(&t) {
            retained_targets.push(t);
            retained_contexts.push(ctx.clone());
        } else {
            discarded_targets.push(t);
        }
    }
    if !discarded_targets.is_empty() {
        log::warn!(
            "dropping interventional contexts with non-leaf targets: {}",
            discarded_targets.join(", ")
        );
    }
    let ds = InterventionalDataset::new(ds.variables().to_vec(), retained_contexts)?;

    let (imset, representative, lex_fallback) = if ds.variables().len() == 2 {
        // Degenerate two-node skeleton: the polytope machinery needs a star
        // with two leaves, so score the two orientations directly.
        let nodes = skeleton.nodes().to_vec();
        let (u, v) = skeleton.edges().iter().next().cloned().unwrap();
        let cands = [
            crate::graphs::Dag::from_owned(nodes.clone(), [(u.clone(), v.clone())])?,
            crate::graphs::Dag::from_owned(nodes.clone(), [(v.clone(), u.clone())])?,
        ];
        let mut best: Option<(f64, crate::graphs::Dag)> = None;
        for d in cands {
            let s = bic_direct(&d, &retained_targets, &ds)?;
            if best.as_ref().is_none_or(|(bs, _)| s > *bs) {
                best = Some((s, d));
            }
        }
        let (_, d) = best.unwrap();
        let imset = crate::imsets::char_imset_interventional(&crate::graphs::IDag::new(
            d.clone(),
            &retained_targets,
        )?);
        (imset, d, false)
    } else {
        let gt = GluingTree::new(skeleton.clone(), &retained_targets, &[])?;
        let hrep = h_representation_capped(&gt, opts.subtree_cap)?;
        let objective = objective_vector(&skeleton, &retained_targets, &ds)?;
        let dense = hrep
            .coords
            .entries()
            .iter()
            .map(|e| {
                let c = objective.coeffs.get(&e.subset).copied().unwrap_or(0.0);
                rationalize(c, opts.rational_bits)
            })
            .collect::<Result<Vec<_>>>()?;
        let (solution, lex_fallback) = lp_maximize_vertex(&LpProblem {
            hrep: hrep.clone(),
            objective: dense,
        })?;
        let imset = imset_from_point(
            &solution.point,
            &hrep.coords,
            &skeleton,
            &retained_targets,
        )?;
        let dag = crate::solver::reconstruct_dag(&imset, &skeleton, &retained_targets)?;
        (imset, dag, lex_fallback)
    };

    let essential = essential_graph(&representative, &retained_targets)?;
    let score = bic_direct(&representative, &retained_targets, &ds)?;

    let coords = crate::imsets::coordinate_system(&skeleton, &retained_targets, &[])?;
    let report = LearnReport {
        skeleton: GraphJson::from_tree(&skeleton, &retained_targets),
        retained_targets: retained_targets.clone(),
        discarded_targets,
        optimal_imset: imset.to_json(&coords),
        representative_dag: GraphJson::from_dag(&representative),
        essential_graph: GraphJson::from_pdag(&essential),
        score,
        lex_fallback,
        elapsed_ms: start.elapsed().as_millis(),
    };
    Ok(LearnOutcome {
        report,
        skeleton,
        imset,
        representative,
        essential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{random_params, simulate};
    use crate::graphs::Dag;
    use rand::SeedableRng;

    #[test]
    fn learn_recovers_strong_signal_chain() {
        // a -> b -> c with an intervention at c; generous sample sizes.
        let dag = Dag::new(vec!["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap();
        let targets = vec!["c".to_string()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let params = random_params(&dag, &targets, &mut rng);
        let ds = simulate(&dag, &targets, &params, &[4000, 4000], 12).unwrap();
        let out = qig_learn(&ds, &LearnOptions::default()).unwrap();
        assert_eq!(out.skeleton.edges().len(), 2);
        assert!(out.skeleton.graph().has_edge("a", "b"));
        assert!(out.skeleton.graph().has_edge("b", "c"));
        assert_eq!(out.report.retained_targets, targets);
        // The intervention at leaf c determines the b-c edge in the
        // essential graph.
        assert!(
            out.essential.arcs.contains(&("b".into(), "c".into()))
                || out.essential.arcs.contains(&("c".into(), "b".into()))
        );
        // The representative must carry the estimated skeleton and imset.
        let re = crate::imsets::char_imset_interventional(
            &crate::graphs::IDag::new(out.representative.clone(), &targets).unwrap(),
        );
        assert_eq!(re, out.imset);
    }

    #[test]
    fn internal_targets_are_discarded() {
        // Intervention at the middle of a chain is dropped; learning
        // proceeds observationally.
        let dag = Dag::new(vec!["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap();
        let targets = vec!["b".to_string()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let params = random_params(&dag, &targets, &mut rng);
        let ds = simulate(&dag, &targets, &params, &[3000, 1500], 14).unwrap();
        let out = qig_learn(&ds, &LearnOptions::default()).unwrap();
        if out.skeleton.degree("b") == 2 {
            assert_eq!(out.report.discarded_targets, vec!["b".to_string()]);
            assert!(out.report.retained_targets.is_empty());
        }
    }

    #[test]
    fn two_variable_special_case() {
        let dag = Dag::new(vec!["a", "b"], &[("a", "b")]).unwrap();
        let targets = vec!["b".to_string()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let params = random_params(&dag, &targets, &mut rng);
        let ds = simulate(&dag, &targets, &params, &[3000, 3000], 2).unwrap();
        let out = qig_learn(&ds, &LearnOptions::default()).unwrap();
        assert_eq!(out.skeleton.edges().len(), 1);
        assert_eq!(out.representative.arcs().len(), 1);
    }
}
