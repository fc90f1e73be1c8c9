//! Command-line pipeline: generate or ingest a graph with features, build
//! resistance-preserving input/output manifolds, score per-node stability,
//! perturb, evaluate, and enhance.
//!
//! Every command is deterministic given its inputs and --seed: output JSON
//! has fixed key order and floats rounded to 12 significant digits, so
//! reruns are byte-identical. A flat key=value --config file supplies
//! defaults; explicit flags win.

use clap::{Parser, Subcommand};
use stabmap::dmd::{self, DmdMaxMode};
use stabmap::embed;
use stabmap::enhance;
use stabmap::error::Error;
use stabmap::gen;
use stabmap::graph::SparseGraph;
use stabmap::io;
use stabmap::manifold::{self, ManifoldConfig};
use stabmap::matrix::RowMatrix;
use stabmap::modelsim::{self, ModelOutputs, SurrogateWeights};
use stabmap::solver;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "stabmap",
    version,
    about = "Per-node stability analysis of graph-in/vector-out mappings"
)]
struct Cli {
    /// Flat key=value config file; explicit flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral embedding and eigengap diagnostics of a graph.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        /// Embedding dimension (smallest nonzero eigenpairs).
        #[arg(long)]
        k: Option<usize>,
        /// Class count for the heuristic dimension suggestion.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output base path: writes `<out>.sgmx` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the input manifold: embed, augment features, kNN, sparsify.
    Manifold {
        #[arg(long)]
        graph: PathBuf,
        /// Node features (CSV or SGMX); optional.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        knn: Option<usize>,
        /// Fixed resistance diameter; omit to auto-calibrate.
        #[arg(long)]
        diameter: Option<f64>,
        #[arg(long)]
        target_clusters: Option<usize>,
        #[arg(long)]
        rho_threshold: Option<f64>,
        #[arg(long)]
        krylov_m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output base path: writes `<out>.edges` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score stability from an input manifold plus an output manifold or
    /// raw model outputs.
    Score {
        #[arg(long)]
        input_manifold: PathBuf,
        #[arg(long)]
        output_manifold: Option<PathBuf>,
        /// Model outputs (CSV or SGMX); an output manifold is built from
        /// them with the input manifold's construction parameters.
        #[arg(long)]
        outputs: Option<PathBuf>,
        /// Generalized eigenpairs to use.
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        oracle_cap: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the fixed-weight surrogate model forward pass.
    Forward {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        logit_scale: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV of per-node class probabilities.
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb features (gaussian) or edges (dice).
    Perturb {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// gaussian | dice
        #[arg(long)]
        kind: String,
        /// Noise level (gaussian) or pair budget (dice).
        #[arg(long)]
        level: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Output path: features CSV (gaussian) or edge list (dice; also
        /// writes `<out>.json` with the applied delta).
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate clean-vs-perturbed metrics over report segments.
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        perturbed: PathBuf,
        /// Level column value for the emitted table.
        #[arg(long)]
        level: Option<f64>,
        /// Comma-separated segment fractions, most stable first
        /// (default: the report's stable/mid/unstable split).
        #[arg(long)]
        fractions: Option<String>,
        /// Output base path: writes `<out>.csv` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Insert a manifold's inter-cluster edges into the original graph.
    Enhance {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        manifold: PathBuf,
        #[arg(long)]
        scale: Option<f64>,
        /// Output base path: writes `<out>.edges` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic block-model dataset with features, labels, and
    /// surrogate outputs.
    Gen {
        /// Block layout, e.g. 5x100 (five blocks of one hundred nodes).
        #[arg(long)]
        blocks: Option<String>,
        #[arg(long)]
        p_in: Option<f64>,
        #[arg(long)]
        p_across: Option<f64>,
        /// Degree-propensity range; equal bounds give a plain block model.
        #[arg(long)]
        theta_min: Option<f64>,
        #[arg(long)]
        theta_max: Option<f64>,
        #[arg(long)]
        feat_dim: Option<usize>,
        #[arg(long)]
        signal: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        logit_scale: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory: writes graph.edges, features.csv, labels.txt,
        /// outputs.csv, meta.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle checks end to end.
    Selftest,
}

struct Ctx {
    file: BTreeMap<String, String>,
}

impl Ctx {
    fn get<T: FromStr + ToString>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Error> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key) {
            Some(raw) => raw.parse::<T>().map_err(|_| {
                Error::InvalidArgument(format!("config key {key} has unparsable value {raw}"))
            }),
            None => Ok(default),
        }
    }

    fn get_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Error> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| {
                    Error::InvalidArgument(format!("config key {key} has unparsable value {raw}"))
                }),
            None => Ok(None),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        // Pool width only affects wall time; results are deterministic.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }
    let file_cfg = match &cli.config {
        Some(path) => match io::read_config(path) {
            Ok(map) => map,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => BTreeMap::new(),
    };
    let ctx = Ctx { file: file_cfg };
    match run(cli.command, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotConverged { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_graph(path: &Path) -> Result<io::LoadedGraph, Error> {
    let loaded = io::read_edge_list(path)?;
    if loaded.stats.self_loops_dropped > 0 || loaded.stats.parallel_merged > 0 {
        eprintln!(
            "note: dropped {} self-loops, merged {} parallel edges",
            loaded.stats.self_loops_dropped, loaded.stats.parallel_merged
        );
    }
    Ok(loaded)
}

fn manifold_config(ctx: &Ctx, args: ManifoldArgs) -> Result<ManifoldConfig, Error> {
    let defaults = ManifoldConfig::default();
    Ok(ManifoldConfig {
        knn_k: ctx.get(args.knn, "knn", defaults.knn_k)?,
        resistance_diameter: ctx.get_opt(args.diameter, "diameter")?,
        target_clusters: ctx.get_opt(args.target_clusters, "target_clusters")?,
        krylov_m: ctx.get(args.krylov_m, "krylov_m", defaults.krylov_m)?,
        rho_keep_threshold: ctx.get(args.rho_threshold, "rho_threshold", defaults.rho_keep_threshold)?,
        exact_resistance_below: defaults.exact_resistance_below,
        knn_eps: defaults.knn_eps,
        seed: args.seed,
    })
}

struct ManifoldArgs {
    knn: Option<usize>,
    diameter: Option<f64>,
    target_clusters: Option<usize>,
    krylov_m: Option<usize>,
    rho_threshold: Option<f64>,
    seed: u64,
}

fn snapshot(entries: &[(&str, String)]) -> BTreeMap<String, String> {
    entries
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

#[derive(serde::Serialize)]
struct EmbedSidecar {
    eigengap: embed::EigengapReport,
    config: BTreeMap<String, String>,
}

#[derive(serde::Serialize)]
struct EnhanceSidecar {
    inserted_edges: usize,
    weight_scale: f64,
    original_edges: usize,
    enhanced_edges: usize,
    config: BTreeMap<String, String>,
}

#[derive(serde::Serialize)]
struct DiceSidecar {
    additions: usize,
    removals: usize,
    skipped_removals: usize,
    config: BTreeMap<String, String>,
}

#[derive(serde::Serialize)]
struct EvalSidecar {
    rows: Vec<modelsim::SeparationRow>,
    config: BTreeMap<String, String>,
}

#[derive(serde::Serialize)]
struct GenMeta {
    n_nodes: usize,
    n_edges: usize,
    n_classes: usize,
    config: BTreeMap<String, String>,
}

fn run(command: Command, ctx: &Ctx) -> Result<(), Error> {
    match command {
        Command::Embed {
            graph,
            k,
            classes,
            seed,
            out,
        } => {
            let loaded = load_graph(&graph)?;
            if !loaded.graph.is_connected() {
                return Err(Error::DisconnectedGraph {
                    components: loaded.graph.connected_components().len(),
                });
            }
            let k = ctx.get(k, "k", 50usize)?.min(loaded.graph.n_nodes().saturating_sub(2));
            let classes = ctx.get_opt(classes, "classes")?;
            let seed = ctx.get(seed, "seed", 0u64)?;
            let u = embed::spectral_embed(&loaded.graph, k, solver::DEFAULT_TOL, seed)?;
            let gap = embed::eigengap_report(&loaded.graph, k, classes, solver::DEFAULT_TOL, seed)?;
            io::write_matrix_sgmx(out.with_extension("sgmx"), u.matrix())?;
            let sidecar = EmbedSidecar {
                eigengap: round_gap(gap),
                config: snapshot(&[
                    ("command", "embed".into()),
                    ("graph", graph.display().to_string()),
                    ("k", k.to_string()),
                    ("classes", format!("{classes:?}")),
                    ("seed", seed.to_string()),
                ]),
            };
            io::write_json(out.with_extension("json"), &sidecar)?;
            println!(
                "embedded {} nodes into {} dimensions (suggested k = {})",
                loaded.graph.n_nodes(),
                k,
                sidecar.eigengap.suggested_k
            );
            Ok(())
        }
        Command::Manifold {
            graph,
            features,
            k,
            knn,
            diameter,
            target_clusters,
            rho_threshold,
            krylov_m,
            seed,
            out,
        } => {
            let loaded = load_graph(&graph)?;
            let (g, remap) = loaded.graph.largest_component()?;
            if g.n_nodes() < loaded.graph.n_nodes() {
                eprintln!(
                    "note: restricted to largest component ({} of {} nodes)",
                    g.n_nodes(),
                    loaded.graph.n_nodes()
                );
            }
            let node_ids: Vec<u64> = remap
                .new_to_old
                .iter()
                .map(|&old| loaded.node_ids[old])
                .collect();
            let feats = match &features {
                Some(path) => {
                    let full = io::read_matrix_auto(path)?;
                    if full.n_rows() != loaded.graph.n_nodes() {
                        return Err(Error::DimensionMismatch {
                            expected: loaded.graph.n_nodes(),
                            got: full.n_rows(),
                        });
                    }
                    // Restrict rows to the retained component.
                    let rows: Vec<Vec<f64>> = remap
                        .new_to_old
                        .iter()
                        .map(|&old| full.row(old).to_vec())
                        .collect();
                    Some(RowMatrix::from_rows(&rows)?)
                }
                None => None,
            };
            let seed = ctx.get(seed, "seed", 0u64)?;
            let k = ctx.get(k, "k", 50usize)?.min(g.n_nodes().saturating_sub(2));
            let cfg = manifold_config(
                ctx,
                ManifoldArgs {
                    knn,
                    diameter,
                    target_clusters,
                    krylov_m,
                    rho_threshold,
                    seed,
                },
            )?;
            let m = manifold::build_input_manifold(&g, feats.as_ref(), k, &cfg)?;
            io::write_manifold(&out, &m, Some(&node_ids))?;
            println!(
                "manifold: {} nodes, {} edges ({} clusters, diameter {:.6})",
                m.n_nodes(),
                m.graph.n_edges(),
                m.clusters.n_clusters,
                m.provenance.effective_diameter
            );
            Ok(())
        }
        Command::Score {
            input_manifold,
            output_manifold,
            outputs,
            s,
            fraction,
            oracle_cap,
            seed,
            out,
        } => {
            let (mx, node_ids) = io::read_manifold(&input_manifold)?;
            let seed = ctx.get(seed, "seed", 0u64)?;
            let s = ctx.get(s, "s", 50usize)?.min(mx.n_nodes().saturating_sub(1));
            let fraction = ctx.get(fraction, "fraction", 0.01f64)?;
            let oracle_cap = ctx.get(oracle_cap, "oracle_cap", solver::DEFAULT_ORACLE_CAP)?;
            let my = match (&output_manifold, &outputs) {
                (Some(base), _) => {
                    let (m, ids) = io::read_manifold(base)?;
                    if ids != node_ids {
                        return Err(Error::NodeSetMismatch {
                            left: node_ids.len(),
                            right: ids.len(),
                        });
                    }
                    m
                }
                (None, Some(path)) => {
                    let y = ModelOutputs::from_matrix(io::read_matrix_auto(path)?)?;
                    if y.n_nodes() != mx.n_nodes() {
                        return Err(Error::NodeSetMismatch {
                            left: mx.n_nodes(),
                            right: y.n_nodes(),
                        });
                    }
                    manifold::build_output_manifold(y.matrix(), &mx.provenance.config)?
                }
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "score needs --output-manifold or --outputs".into(),
                    ))
                }
            };
            let pencil_tol = 1e-6;
            let spectrum = solver::generalized_eigenpairs(
                &mx.graph.laplacian(),
                &my.graph.laplacian(),
                s,
                pencil_tol,
                seed,
            )?;
            let scores = dmd::stability_scores(&spectrum, &mx);
            let (dmd_max, mode) = dmd::dmd_max(&mx.graph, &my.graph, oracle_cap, 100_000, seed)?;
            let config = snapshot(&[
                ("command", "score".into()),
                ("input_manifold", input_manifold.display().to_string()),
                (
                    "output_side",
                    output_manifold
                        .as_ref()
                        .map(|p| p.display().to_string())
                        .or_else(|| outputs.as_ref().map(|p| p.display().to_string()))
                        .unwrap_or_default(),
                ),
                ("s", s.to_string()),
                ("fraction", fraction.to_string()),
                ("oracle_cap", oracle_cap.to_string()),
                ("pencil_tol", pencil_tol.to_string()),
                ("seed", seed.to_string()),
            ]);
            let report = dmd::rank_and_select(
                &scores,
                &mx.clusters.assignment,
                fraction,
                Some(&node_ids),
                dmd_max,
                mode,
                config,
            )?;
            io::write_json(&out, &io::round_report(report))?;
            println!(
                "scored {} nodes (lambda_max {:.6}, dmd_max {:.6} {})",
                mx.n_nodes(),
                dmd::lipschitz_bound(&spectrum),
                dmd_max,
                mode.as_str()
            );
            Ok(())
        }
        Command::Forward {
            graph,
            features,
            hidden,
            classes,
            logit_scale,
            seed,
            out,
        } => {
            let loaded = load_graph(&graph)?;
            let x = io::read_matrix_auto(&features)?;
            let hidden = ctx.get(hidden, "hidden", 32usize)?;
            let classes = ctx.get(classes, "classes", 5usize)?;
            let logit_scale = ctx.get(logit_scale, "logit_scale", 6.0f64)?;
            let seed = ctx.get(seed, "seed", 0u64)?;
            let weights = SurrogateWeights::random(x.n_cols(), hidden, classes, seed)
                .with_logit_scale(logit_scale);
            let outputs = modelsim::surrogate_forward(&loaded.graph, &x, &weights)?;
            io::write_matrix_csv(&out, outputs.matrix())?;
            println!(
                "forward pass: {} nodes -> {} classes",
                outputs.n_nodes(),
                outputs.n_classes()
            );
            Ok(())
        }
        Command::Perturb {
            graph,
            features,
            labels,
            kind,
            level,
            seed,
            out,
        } => {
            let loaded = load_graph(&graph)?;
            let seed = ctx.get(seed, "seed", 0u64)?;
            match kind.as_str() {
                "gaussian" => {
                    let path = features.ok_or_else(|| {
                        Error::InvalidArgument("gaussian perturbation needs --features".into())
                    })?;
                    let x = io::read_matrix_auto(&path)?;
                    let xp = modelsim::perturb_gaussian(&x, level, seed);
                    io::write_matrix_csv(&out, &xp)?;
                    println!("gaussian perturbation at level {level} written");
                }
                "dice" => {
                    let path = labels.ok_or_else(|| {
                        Error::InvalidArgument("dice perturbation needs --labels".into())
                    })?;
                    let labels = io::read_labels(&path)?;
                    let (gp, delta) =
                        modelsim::perturb_dice(&loaded.graph, &labels, level as usize, seed)?;
                    io::write_edge_list(&out, &gp, Some(&loaded.node_ids))?;
                    let sidecar = DiceSidecar {
                        additions: delta.additions.len(),
                        removals: delta.removals.len(),
                        skipped_removals: delta.skipped_removals,
                        config: snapshot(&[
                            ("command", "perturb".into()),
                            ("kind", "dice".into()),
                            ("level", level.to_string()),
                            ("seed", seed.to_string()),
                        ]),
                    };
                    io::write_json(out.with_extension("json"), &sidecar)?;
                    println!(
                        "dice perturbation: +{} / -{} edges ({} removals skipped)",
                        sidecar.additions, sidecar.removals, sidecar.skipped_removals
                    );
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown perturbation kind {other} (gaussian|dice)"
                    )))
                }
            }
            Ok(())
        }
        Command::Eval {
            report,
            clean,
            perturbed,
            level,
            fractions,
            out,
        } => {
            let report: dmd::StabilityReport = io::read_json(&report)?;
            let clean = ModelOutputs::from_matrix(io::read_matrix_auto(&clean)?)?;
            let perturbed = ModelOutputs::from_matrix(io::read_matrix_auto(&perturbed)?)?;
            let level = ctx.get(level, "level", 0.0f64)?;
            // Report ids -> output row indices: ranked ids are original ids;
            // rows follow the dense order of the scored graph, which is the
            // ascending original-id order.
            let mut sorted_ids: Vec<u64> = report.nodes.iter().map(|e| e.id).collect();
            sorted_ids.sort_unstable();
            let row_of = |id: u64| -> Result<usize, Error> {
                sorted_ids.binary_search(&id).map_err(|_| {
                    Error::InvalidArgument(format!("report references unknown node id {id}"))
                })
            };
            let segments: Vec<(String, Vec<usize>)> = match fractions {
                Some(spec_str) => {
                    let fracs: Vec<f64> = spec_str
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| Error::InvalidArgument(format!("bad fractions: {e}")))?;
                    // Ranked descending; rebuild score vector in row order.
                    let mut scores = vec![0.0f64; report.nodes.len()];
                    for e in &report.nodes {
                        scores[row_of(e.id)?] = e.score;
                    }
                    let split = dmd::segment_split(&scores, &fracs)?;
                    split
                        .into_iter()
                        .enumerate()
                        .map(|(i, members)| (format!("segment{i}"), members))
                        .collect()
                }
                None => {
                    let stable: Vec<usize> = report
                        .stable
                        .iter()
                        .map(|&id| row_of(id))
                        .collect::<Result<_, _>>()?;
                    let unstable: Vec<usize> = report
                        .unstable
                        .iter()
                        .map(|&id| row_of(id))
                        .collect::<Result<_, _>>()?;
                    let in_tail: std::collections::HashSet<usize> =
                        stable.iter().chain(&unstable).copied().collect();
                    let mid: Vec<usize> = (0..report.nodes.len())
                        .filter(|i| !in_tail.contains(i))
                        .collect();
                    vec![
                        ("stable".to_string(), stable),
                        ("mid".to_string(), mid),
                        ("unstable".to_string(), unstable),
                    ]
                }
            };
            let mut rows = Vec::new();
            for (name, members) in &segments {
                let evals = modelsim::eval_pair(&clean, &perturbed, members)?;
                let n = evals.len().max(1);
                rows.push(modelsim::SeparationRow {
                    segment: name.clone(),
                    kind: "file".to_string(),
                    level,
                    mean_cos: evals.iter().map(|e| e.cosine).sum::<f64>() / n as f64,
                    mean_kld: evals.iter().map(|e| e.kld).sum::<f64>() / n as f64,
                    n: evals.len(),
                });
            }
            io::write_separation_csv(out.with_extension("csv"), &rows)?;
            let sidecar = EvalSidecar {
                rows: rows
                    .iter()
                    .map(|r| modelsim::SeparationRow {
                        mean_cos: io::round_sig12(r.mean_cos),
                        mean_kld: io::round_sig12(r.mean_kld),
                        ..r.clone()
                    })
                    .collect(),
                config: snapshot(&[
                    ("command", "eval".into()),
                    ("level", level.to_string()),
                ]),
            };
            io::write_json(out.with_extension("json"), &sidecar)?;
            for r in &rows {
                println!(
                    "{}: mean_cos {:.6} mean_kld {:.6} (n = {})",
                    r.segment, r.mean_cos, r.mean_kld, r.n
                );
            }
            Ok(())
        }
        Command::Enhance {
            graph,
            manifold,
            scale,
            out,
        } => {
            let loaded = load_graph(&graph)?;
            let (m, ids) = io::read_manifold(&manifold)?;
            if ids != loaded.node_ids {
                return Err(Error::NodeSetMismatch {
                    left: loaded.node_ids.len(),
                    right: ids.len(),
                });
            }
            let scale = ctx.get(scale, "scale", 1.0f64)?;
            let extra = enhance::inter_cluster_edges(&m);
            let enhanced = enhance::enhance(&loaded.graph, &extra, scale)?;
            io::write_edge_list(out.with_extension("edges"), &enhanced, Some(&loaded.node_ids))?;
            let sidecar = EnhanceSidecar {
                inserted_edges: extra.len(),
                weight_scale: scale,
                original_edges: loaded.graph.n_edges(),
                enhanced_edges: enhanced.n_edges(),
                config: snapshot(&[
                    ("command", "enhance".into()),
                    ("graph", graph.display().to_string()),
                    ("manifold", manifold.display().to_string()),
                    ("scale", scale.to_string()),
                ]),
            };
            io::write_json(out.with_extension("json"), &sidecar)?;
            println!(
                "enhanced graph: {} -> {} edges ({} inserted)",
                sidecar.original_edges, sidecar.enhanced_edges, sidecar.inserted_edges
            );
            Ok(())
        }
        Command::Gen {
            blocks,
            p_in,
            p_across,
            theta_min,
            theta_max,
            feat_dim,
            signal,
            noise,
            hidden,
            logit_scale,
            seed,
            out,
        } => {
            let blocks = ctx.get(blocks, "blocks", "5x100".to_string())?;
            let (count, size) = blocks
                .split_once('x')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("bad --blocks {blocks}, expected CxN"))
                })?;
            let p_in = ctx.get(p_in, "p_in", 0.5f64)?;
            let p_across = ctx.get(p_across, "p_across", 0.02f64)?;
            let theta_min = ctx.get(theta_min, "theta_min", 0.35f64)?;
            let theta_max = ctx.get(theta_max, "theta_max", 1.8f64)?;
            let feat_dim = ctx.get(feat_dim, "feat_dim", 10usize)?;
            let signal = ctx.get(signal, "signal", 5.0f64)?;
            let noise = ctx.get(noise, "noise", 1.0f64)?;
            let hidden = ctx.get(hidden, "hidden", 32usize)?;
            let logit_scale = ctx.get(logit_scale, "logit_scale", 6.0f64)?;
            let seed = ctx.get(seed, "seed", 0u64)?;
            let sizes = vec![size; count];
            let (g, labels) = if (theta_max - theta_min).abs() < 1e-12 {
                gen::sbm(&sizes, p_in, p_across, seed)?
            } else {
                gen::dcsbm(&sizes, p_in, p_across, theta_min, theta_max, seed)?
            };
            if !g.is_connected() {
                return Err(Error::DisconnectedGraph {
                    components: g.connected_components().len(),
                });
            }
            let x = gen::block_features(&labels, feat_dim, signal, noise, seed)?;
            let weights = SurrogateWeights::random(feat_dim, hidden, count, seed)
                .with_logit_scale(logit_scale);
            let outputs = modelsim::surrogate_forward(&g, &x, &weights)?;
            std::fs::create_dir_all(&out)?;
            io::write_edge_list(out.join("graph.edges"), &g, None)?;
            io::write_matrix_csv(out.join("features.csv"), &x)?;
            io::write_labels(out.join("labels.txt"), &labels)?;
            io::write_matrix_csv(out.join("outputs.csv"), outputs.matrix())?;
            let meta = GenMeta {
                n_nodes: g.n_nodes(),
                n_edges: g.n_edges(),
                n_classes: count,
                config: snapshot(&[
                    ("command", "gen".into()),
                    ("blocks", blocks.clone()),
                    ("p_in", p_in.to_string()),
                    ("p_across", p_across.to_string()),
                    ("theta_min", theta_min.to_string()),
                    ("theta_max", theta_max.to_string()),
                    ("feat_dim", feat_dim.to_string()),
                    ("signal", signal.to_string()),
                    ("noise", noise.to_string()),
                    ("hidden", hidden.to_string()),
                    ("logit_scale", logit_scale.to_string()),
                    ("seed", seed.to_string()),
                ]),
            };
            io::write_json(out.join("meta.json"), &meta)?;
            println!(
                "generated {} nodes, {} edges, {} classes in {}",
                g.n_nodes(),
                g.n_edges(),
                count,
                out.display()
            );
            Ok(())
        }
        Command::Selftest => selftest(),
    }
}

fn round_gap(mut gap: embed::EigengapReport) -> embed::EigengapReport {
    for v in gap.eigenvalues.iter_mut() {
        *v = io::round_sig12(*v);
    }
    for v in gap.ratios.iter_mut() {
        *v = io::round_sig12(*v);
    }
    gap
}

fn selftest() -> Result<(), Error> {
    let mut failed = 0usize;
    let mut check = |name: &str, ok: bool| {
        println!("{} {}", if ok { "ok  " } else { "FAIL" }, name);
        if !ok {
            failed += 1;
        }
    };

    // Laplacian of a single weighted edge.
    let g = SparseGraph::new(2, [(0, 1, 3.0)])?;
    let l = g.laplacian();
    check(
        "laplacian single edge",
        l.to_dense() == vec![3.0, -3.0, -3.0, 3.0],
    );

    // Path eigenvalues {1, 3}.
    let p3 = SparseGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0)])?;
    let eig = solver::smallest_eigenpairs(&p3.laplacian(), 2, 1e-10, 1)?;
    check(
        "path spectrum",
        (eig.values[0] - 1.0).abs() < 1e-8 && (eig.values[1] - 3.0).abs() < 1e-8,
    );

    // Triangle resistance 2/3.
    let tri = SparseGraph::new(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])?;
    let r = stabmap::resistance::exact_resistance(&tri, 0, 2, 1e-11)?;
    check("triangle resistance", (r - 2.0 / 3.0).abs() < 1e-9);

    // Embedding with the full spectrum reproduces resistance.
    let u = embed::spectral_embed(&p3, 2, 1e-10, 1)?;
    let approx = embed::approx_resistance(&u, 0, 2)?;
    check("full-spectrum embedding", (approx - 2.0).abs() < 1e-8);

    // Tree rho = 1 everywhere.
    let path5 = SparseGraph::new(5, (0..4).map(|i| (i, i + 1, 1.0)))?;
    let res = stabmap::resistance::exact_edge_resistances(&path5, 1e-11)?;
    let rho = manifold::edge_sampling_ratios(&path5, &res)?;
    check("tree rho", rho.iter().all(|v| (v - 1.0).abs() < 1e-9));

    // Identity pencil.
    let g12 = gen::sbm(&[6, 6], 0.8, 0.2, 3)?.0;
    let ok = if g12.is_connected() {
        let spec = solver::generalized_eigenpairs(&g12.laplacian(), &g12.laplacian(), 2, 1e-8, 1)?;
        spec.values.iter().all(|v| (v - 1.0).abs() < 1e-6)
    } else {
        false
    };
    check("identity pencil", ok);

    // KLD closed form.
    let a = ModelOutputs::from_matrix(RowMatrix::from_rows(&[vec![0.5, 0.5]])?)?;
    let b = ModelOutputs::from_matrix(RowMatrix::from_rows(&[vec![0.7, 0.3]])?)?;
    let e = modelsim::eval_pair(&a, &b, &[])?;
    let want = 0.5 * (0.5f64 / 0.7).ln() + 0.5 * (0.5f64 / 0.3).ln();
    check("kld closed form", (e[0].kld - want).abs() < 1e-12);

    // Tiny end-to-end pipeline.
    let (g, labels) = gen::dcsbm(&[30, 30, 30], 0.5, 0.03, 0.5, 1.5, 7)?;
    let ok = if g.is_connected() {
        let x = gen::block_features(&labels, 6, 4.0, 0.8, 7)?;
        let w = SurrogateWeights::random(6, 16, 3, 7).with_logit_scale(5.0);
        let y = modelsim::surrogate_forward(&g, &x, &w)?;
        let cfg = ManifoldConfig {
            exact_resistance_below: 10_000,
            seed: 7,
            ..Default::default()
        };
        let mx = manifold::build_input_manifold(&g, Some(&x), 20, &cfg)?;
        let my = manifold::build_output_manifold(y.matrix(), &cfg)?;
        let spec =
            solver::generalized_eigenpairs(&mx.graph.laplacian(), &my.graph.laplacian(), 10, 1e-6, 7)?;
        let scores = dmd::stability_scores(&spec, &mx);
        let report = dmd::rank_and_select(
            &scores,
            &mx.clusters.assignment,
            0.05,
            None,
            dmd::dmd_max(&mx.graph, &my.graph, 2000, 0, 7)?.0,
            DmdMaxMode::Exhaustive,
            BTreeMap::new(),
        )?;
        report.nodes.len() == 90 && !report.stable.is_empty() && !report.unstable.is_empty()
    } else {
        false
    };
    check("pipeline smoke", ok);

    if failed > 0 {
        Err(Error::InvalidArgument(format!("{failed} selftest checks failed")))
    } else {
        println!("selftest passed");
        Ok(())
    }
}
