//! `qig`: learn interventional Markov equivalence classes of Gaussian
//! polytrees by exact linear programming over characteristic-imset
//! polytopes.

use clap::{Parser, Subcommand};
use qig::data::load_manifest;
use qig::gaussian::{bic_direct, random_params, simulate};
use qig::graphs::{to_dot, GraphJson};
use qig::learn::{qig_learn, LearnOptions};
use qig::polytope::{enumerate_vertices, h_representation_capped, GluingTree, LinearConstraint};
use qig::verify::{run_all, run_suite, VerifyConfig, SUITES};
use qig::{sig12, QigError};
use rand::SeedableRng;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qig", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full learning pipeline on a dataset manifest.
    Learn {
        /// JSON manifest: {"observational": csv, "interventions": [...]}.
        #[arg(long)]
        manifest: PathBuf,
        /// Pool all contexts into the mutual-information weights.
        #[arg(long)]
        mi_pool: bool,
        /// Subtract per-context column means before scoring.
        #[arg(long)]
        center: bool,
        /// Directory for the report JSON and DOT exports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the H-representation of a tree polytope.
    Facets {
        /// Graph JSON with nodes, edges and leaf targets.
        #[arg(long)]
        graph: PathBuf,
        /// Degree-two targets.
        #[arg(long, value_delimiter = ',')]
        j: Vec<String>,
        /// Emit machine-readable JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Enumerate polytope vertices with representative DAGs.
    Vertices {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_delimiter = ',')]
        j: Vec<String>,
    },
    /// Run the verification suites.
    Verify {
        /// A single suite to run (default: all).
        #[arg(long)]
        suite: Option<String>,
        /// Worker threads for the verification fan-out.
        #[arg(long)]
        jobs: Option<usize>,
        /// Base seed for the randomized suites.
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Simulate an interventional dataset from a random polytree.
    Simulate {
        #[arg(long, default_value_t = 8)]
        nodes: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Samples per context.
        #[arg(long, default_value_t = 5000)]
        samples: usize,
        /// Target every leaf of the generated tree (otherwise none).
        #[arg(long, default_value_t = true)]
        leaf_targets: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a DAG JSON against a dataset manifest.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        /// Graph JSON with nodes and arcs.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        center: bool,
    },
}

fn exit_code_for(err: &QigError) -> u8 {
    match err {
        QigError::Unbounded | QigError::Solver(_) | QigError::Rationalize(_) => 3,
        _ => 2,
    }
}

fn env_cap(name: &str, default: usize) -> usize {
    std::env::var(name)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn constraint_json(c: &LinearConstraint) -> serde_json::Value {
    let coeffs: serde_json::Map<String, serde_json::Value> = c
        .coeffs
        .iter()
        .map(|(s, v)| (s.key(), serde_json::Value::String(v.to_string())))
        .collect();
    serde_json::json!({
        "coeffs": coeffs,
        "sense": match c.sense {
            qig::polytope::Sense::Le => "<=",
            qig::polytope::Sense::Ge => ">=",
            qig::polytope::Sense::Eq => "=",
        },
        "rhs": c.rhs.to_string(),
        "tag": format!("{:?}", c.tag).to_lowercase(),
    })
}

fn run(cli: Cli) -> qig::Result<u8> {
    let edge_cap = env_cap("QIG_EDGE_CAP", qig::graphs::DEFAULT_EDGE_CAP);
    let subtree_cap = env_cap("QIG_SUBTREE_CAP", qig::polytope::DEFAULT_SUBTREE_CAP);
    match cli.command {
        Command::Learn {
            manifest,
            mi_pool,
            center,
            out,
        } => {
            let ds = load_manifest(&manifest)?;
            let opts = LearnOptions {
                mi_pool,
                center,
                edge_cap,
                subtree_cap,
                ..LearnOptions::default()
            };
            let outcome = qig_learn(&ds, &opts)?;
            if !outcome.report.discarded_targets.is_empty() {
                eprintln!(
                    "WARN: discarded non-leaf targets: {}",
                    outcome.report.discarded_targets.join(", ")
                );
            }
            let text = serde_json::to_string_pretty(&outcome.report)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("report.json"), &text)?;
                    std::fs::write(
                        dir.join("essential.dot"),
                        to_dot(&outcome.report.essential_graph),
                    )?;
                    std::fs::write(
                        dir.join("representative.dot"),
                        to_dot(&outcome.report.representative_dag),
                    )?;
                    println!("score {}", sig12(outcome.report.score));
                    println!("report written to {}", dir.display());
                }
                None => println!("{text}"),
            }
            Ok(0)
        }
        Command::Facets { graph, j, json } => {
            let gj: GraphJson = serde_json::from_str(&std::fs::read_to_string(&graph)?)?;
            let tree = gj.to_tree()?;
            let gt = GluingTree::new(tree, &gj.targets, &j)?;
            let h = h_representation_capped(&gt, subtree_cap)?;
            if json {
                let rows: Vec<serde_json::Value> = h
                    .inequalities
                    .iter()
                    .chain(&h.equalities)
                    .map(constraint_json)
                    .collect();
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                for c in &h.inequalities {
                    println!("{c}   [{}]", format!("{:?}", c.tag).to_lowercase());
                }
                for c in &h.equalities {
                    println!("{c}   [affine-span]");
                }
                eprintln!(
                    "{} inequalities, {} equalities over {} coordinates",
                    h.inequalities.len(),
                    h.equalities.len(),
                    h.coords.len()
                );
            }
            Ok(0)
        }
        Command::Vertices { graph, j } => {
            let gj: GraphJson = serde_json::from_str(&std::fs::read_to_string(&graph)?)?;
            let tree = gj.to_tree()?;
            let gt = GluingTree::new(tree, &gj.targets, &j)?;
            let coords = gt.coordinate_system()?;
            let verts = enumerate_vertices(&gt, edge_cap)?;
            for (imset, rep) in &verts {
                let rep_json = GraphJson::from_dag(rep);
                let row = serde_json::json!({
                    "imset": imset.to_json(&coords),
                    "representative": rep_json,
                    "dot": to_dot(&rep_json),
                });
                println!("{}", serde_json::to_string(&row)?);
            }
            eprintln!("{} vertices", verts.len());
            Ok(0)
        }
        Command::Verify { suite, jobs, seed } => {
            if let Some(n) = jobs {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .ok();
            }
            let cfg = VerifyConfig { seed };
            let outcomes = match suite {
                Some(name) => match run_suite(&name, &cfg) {
                    Some(o) => vec![o],
                    None => {
                        eprintln!("unknown suite `{name}`; available: {}", SUITES.join(", "));
                        return Ok(2);
                    }
                },
                None => run_all(&cfg),
            };
            let mut failed = false;
            for o in &outcomes {
                let status = if o.passed { "PASS" } else { "FAIL" };
                println!("{status} {:<18} {:>7} ms  {}", o.name, o.millis, o.details);
                failed |= !o.passed;
            }
            Ok(if failed { 4 } else { 0 })
        }
        Command::Simulate {
            nodes,
            seed,
            samples,
            leaf_targets,
            out,
        } => {
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let tree = qig::verify::instances::random_tree(nodes, &mut rng);
            let dag = qig::verify::instances::random_orientation(&tree, &mut rng);
            let targets: Vec<String> = if leaf_targets { tree.leaves() } else { Vec::new() };
            let params = random_params(&dag, &targets, &mut rng);
            let sizes = vec![samples; targets.len() + 1];
            let ds = simulate(&dag, &targets, &params, &sizes, seed)?;
            let manifest = qig::data::write_dataset(&ds, &out)?;
            let mut truth = GraphJson::from_dag(&dag);
            truth.targets = targets.clone();
            std::fs::write(
                out.join("ground_truth.json"),
                serde_json::to_string_pretty(&truth)?,
            )?;
            println!(
                "wrote {} contexts x {samples} samples to {}",
                targets.len() + 1,
                manifest.display()
            );
            Ok(0)
        }
        Command::Score {
            manifest,
            graph,
            center,
        } => {
            let mut ds = load_manifest(&manifest)?;
            if center {
                ds.center();
            }
            let gj: GraphJson = serde_json::from_str(&std::fs::read_to_string(&graph)?)?;
            let dag = gj.to_dag()?;
            let targets = ds.targets();
            let score = bic_direct(&dag, &targets, &ds)?;
            println!("{}", sig12(score));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
