//! Cross-module invariants that tie the combinatorics, the geometry and the
//! statistics together at desk scale.

use num_bigint::BigInt;
use num_rational::BigRational;
use qig::gaussian::{bic_direct, random_params, simulate, Scorer};
use qig::graphs::IDag;
use qig::imsets::{char_imset, char_imset_interventional, standard_imset, NodeSubset};
use qig::polytope::{enumerate_vertices, h_representation};
use qig::solver::{imset_from_point, lp_maximize, LpProblem};
use qig::verify::instances::{random_gluing, random_orientation, random_tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Two orientations of one tree are (interventionally) Markov equivalent
/// exactly when their realized imsets agree; dual imset paths coincide.
#[test]
fn imset_equality_mirrors_equivalence_sampled() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10 {
        let n = rng.gen_range(4..=10usize);
        let tree = random_tree(n, &mut rng);
        let leaves = tree.leaves();
        let targets: Vec<String> = leaves
            .iter()
            .filter(|_| rng.gen_bool(0.4))
            .cloned()
            .collect();
        let mut sample = Vec::new();
        for _ in 0..12 {
            sample.push(random_orientation(&tree, &mut rng));
        }
        for d1 in &sample {
            // Dual-path equality, sampled up to p = 10.
            assert_eq!(
                qig::imsets::char_from_standard(&standard_imset(d1)),
                char_imset(d1)
            );
            for d2 in &sample {
                let equal_imsets = char_imset_interventional(
                    &IDag::new(d1.clone(), &targets).unwrap(),
                ) == char_imset_interventional(&IDag::new(d2.clone(), &targets).unwrap());
                assert_eq!(
                    qig::graphs::i_markov_equivalent(d1, d2, &targets).unwrap(),
                    equal_imsets
                );
            }
        }
    }
}

/// Every 0/1 LP optimum is an enumerated vertex: the H-representation admits
/// no spurious integral points.
#[test]
fn lp_vertices_are_enumerated_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..12 {
        let n = rng.gen_range(4..=7usize);
        let tree = random_tree(n, &mut rng);
        let gt = random_gluing(&tree, i % 3 == 0, &mut rng);
        let h = h_representation(&gt).unwrap();
        let verts = enumerate_vertices(&gt, 22).unwrap();
        let vertex_set: BTreeSet<_> = verts.iter().map(|(c, _)| c.clone()).collect();
        for _ in 0..20 {
            let obj: Vec<BigRational> = (0..h.coords.len())
                .map(|_| {
                    BigRational::new(
                        BigInt::from(rng.gen_range(-100i64..=100)),
                        BigInt::from(rng.gen_range(1i64..=9)),
                    )
                })
                .collect();
            let sol = lp_maximize(&LpProblem {
                hrep: h.clone(),
                objective: obj,
            })
            .unwrap();
            assert!(sol.vertex_flag, "non-vertex optimum on {:?}", gt.tree().edges());
            let mut targets = gt.leaf_targets().to_vec();
            targets.extend(gt.degree_two_targets().iter().cloned());
            let imset =
                imset_from_point(&sol.point, &h.coords, gt.tree(), &targets).unwrap();
            assert!(
                vertex_set.contains(&imset),
                "LP produced an imset outside the vertex list"
            );
        }
    }
}

/// The global pullback of the alpha vector scores imsets: for any two
/// orientations, the coordinate-wise Moebius transform of -alpha satisfies
/// `beta . (c_G - c_H) = BIC(G) - BIC(H)`.
#[test]
fn global_pullback_scores_imset_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for _ in 0..5 {
        let n = rng.gen_range(3..=5usize);
        let tree = random_tree(n, &mut rng);
        let dag = random_orientation(&tree, &mut rng);
        let leaves = tree.leaves();
        let targets: Vec<String> = leaves
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .take(2)
            .cloned()
            .collect();
        let params = random_params(&dag, &targets, &mut rng);
        let sizes: Vec<usize> = (0..=targets.len()).map(|_| 60).collect();
        let ds = simulate(&dag, &targets, &params, &sizes, rng.gen()).unwrap();
        let scorer = Scorer::new(&ds);

        // Ground set: variables then one interventional node per target.
        let vars: Vec<String> = ds.variables().to_vec();
        let k = targets.len();
        let total = vars.len() + k;
        assert!(total <= 12);
        // beta over all subsets, by Moebius inversion of -alpha from below.
        let mut alpha_full = vec![0.0f64; 1 << total];
        for mask in 0usize..(1 << total) {
            let mut vset: Vec<usize> = Vec::new();
            let mut zset: Vec<usize> = Vec::new();
            for b in 0..total {
                if mask & (1 << b) != 0 {
                    if b < vars.len() {
                        vset.push(b);
                    } else {
                        let t = &targets[b - vars.len()];
                        zset.push(ds.target_context(t).unwrap());
                    }
                }
            }
            alpha_full[mask] = scorer.alpha(&vset, &zset).unwrap();
        }
        let mut beta = vec![0.0f64; 1 << total];
        for mask in 0usize..(1 << total) {
            let bits = mask.count_ones() as usize;
            let mut sub = mask;
            loop {
                let sign = if (bits - sub.count_ones() as usize).is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                };
                beta[mask] += sign * (-alpha_full[sub]);
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & mask;
            }
        }

        // Dense imset over the same ground set: index labels.
        let label_of = |b: usize| -> String {
            if b < vars.len() {
                vars[b].clone()
            } else {
                qig::graphs::intervention_label(&targets[b - vars.len()])
            }
        };
        let dense_imset = |d: &qig::graphs::Dag| -> Vec<f64> {
            let c = char_imset_interventional(&IDag::new(d.clone(), &targets).unwrap());
            (0..(1usize << total))
                .map(|mask| {
                    let labels: Vec<String> =
                        (0..total).filter(|b| mask & (1 << b) != 0).map(label_of).collect();
                    if labels.len() <= 1 {
                        1.0
                    } else {
                        f64::from(c.get(&NodeSubset::new(labels)))
                    }
                })
                .collect()
        };

        let sample: Vec<qig::graphs::Dag> = (0..6)
            .map(|_| random_orientation(&tree, &mut rng))
            .collect();
        for g in &sample {
            for hh in &sample {
                let cg = dense_imset(g);
                let ch = dense_imset(hh);
                let lhs: f64 = beta
                    .iter()
                    .zip(cg.iter().zip(&ch))
                    .map(|(b, (x, y))| b * (x - y))
                    .sum();
                let rhs = bic_direct(g, &targets, &ds).unwrap()
                    - bic_direct(hh, &targets, &ds).unwrap();
                assert!(
                    (lhs - rhs).abs() <= 1e-7 * (1.0 + rhs.abs()),
                    "pullback mismatch: {lhs} vs {rhs}"
                );
            }
        }
    }
}

/// Validity of the full H-representation on every vertex, and the affine
/// span equalities, across random gluing trees including nonempty J.
#[test]
fn h_representation_valid_on_random_gluing_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..15 {
        let n = rng.gen_range(4..=9usize);
        let tree = random_tree(n, &mut rng);
        let gt = random_gluing(&tree, i % 2 == 0, &mut rng);
        let h = h_representation(&gt).unwrap();
        for (imset, _) in enumerate_vertices(&gt, 22).unwrap() {
            for c in h.inequalities.iter().chain(&h.equalities) {
                assert!(c.satisfied_by(&imset), "violated {c}");
            }
        }
    }
}

/// Learned reports stay internally consistent on simulated data: the
/// representative realizes the optimal imset and carries the estimated
/// skeleton.
#[test]
fn learn_report_consistency() {
    use qig::learn::{qig_learn, LearnOptions};
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    for _ in 0..5 {
        let n = rng.gen_range(4..=7usize);
        let tree = random_tree(n, &mut rng);
        let dag = random_orientation(&tree, &mut rng);
        let targets: Vec<String> = tree
            .leaves()
            .into_iter()
            .filter(|_| rng.gen_bool(0.7))
            .collect();
        let params = random_params(&dag, &targets, &mut rng);
        let sizes = vec![800; targets.len() + 1];
        let ds = simulate(&dag, &targets, &params, &sizes, rng.gen()).unwrap();
        let out = qig_learn(&ds, &LearnOptions::default()).unwrap();
        assert_eq!(
            qig::graphs::skeleton(&out.representative).edges(),
            out.skeleton.edges()
        );
        let realized = char_imset_interventional(
            &IDag::new(out.representative.clone(), &out.report.retained_targets).unwrap(),
        );
        assert_eq!(realized, out.imset);
        // Byte-identical reports under a rerun (determinism).
        let again = qig_learn(&ds, &LearnOptions::default()).unwrap();
        let a = serde_json::to_value(&out.report).unwrap();
        let b = serde_json::to_value(&again.report).unwrap();
        let strip = |mut v: serde_json::Value| {
            v.as_object_mut().unwrap().remove("elapsed_ms");
            v
        };
        assert_eq!(strip(a), strip(b));
    }
}
