use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use shapegraph::eval::{geodesic_error, GroundTruth};
use shapegraph::graph::{
    build_graph, mds_embedding, multi_match, GraphDocument, ShapeGraph, Topology,
};
use shapegraph::mesh::{load_mesh, preprocess, write_ply};
use shapegraph::pipeline::{
    compute_store, correspondence_text, load_collection, load_shape, pair_name, position_colors,
    read_correspondence, run_pipeline, transfer_colors, write_atomic, write_pair_artifacts,
    PipelineConfig, RunOptions, Workspace,
};
use shapegraph::Error;

const CACHE_ENV: &str = "SHAPEGRAPH_CACHE_DIR";

#[derive(Parser)]
#[command(
    name = "shapegraph",
    version,
    about = "Dense correspondences across collections of non-rigid meshes"
)]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus per-flag overrides.
#[derive(Args)]
struct Settings {
    /// JSON or TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_topology)]
    topology: Option<Topology>,
    #[arg(long, global = true)]
    kmin: Option<usize>,
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Entropic regularization weight.
    #[arg(long, global = true)]
    entropy: Option<f64>,
    /// Farthest-point samples per shape for transport steps.
    #[arg(long, global = true)]
    subsample: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Cache root. Defaults to `<out>/cache` for `run` and `.shapegraph-cache` otherwise.
    #[arg(long, global = true, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Settings {
    fn config(&self) -> shapegraph::Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(t) = self.topology {
            c.topology = t;
        }
        if let Some(k) = self.kmin {
            c.matching.k_min = k;
        }
        if let Some(k) = self.kmax {
            c.matching.k_max = k;
        }
        if let Some(e) = self.entropy {
            c.matching.entropy_weight = e;
        }
        if let Some(s) = self.subsample {
            c.matching.subsample = Some(s);
        }
        if let Some(j) = self.jobs {
            c.jobs = Some(j);
        }
        c.validate()?;
        Ok(c)
    }

    fn workspace(&self) -> shapegraph::Result<Workspace> {
        let root = self
            .cache_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(".shapegraph-cache"));
        Workspace::new(root, self.config()?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Every stage end to end over a directory of meshes.
    Run {
        collection: PathBuf,
        out: PathBuf,
        /// Directory of `<source>__<target>.txt` ground-truth files.
        #[arg(long)]
        gt_dir: Option<PathBuf>,
        /// File of `source target` id pairs to multi-match.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Normalize a mesh to the working scale and write it as PLY.
    Preprocess { input: PathBuf, output: PathBuf },
    /// Compute (or fetch) a mesh's eigenbasis and print its eigenvalues.
    Spectral { mesh: PathBuf },
    /// Match one ordered pair and write its artifacts.
    MatchPair {
        source: PathBuf,
        target: PathBuf,
        out: PathBuf,
    },
    /// Build the shape graph of a collection and write it as JSON.
    BuildGraph {
        collection: PathBuf,
        output: PathBuf,
    },
    /// Multi-match one pair of a collection along the graph.
    MultiMatch {
        collection: PathBuf,
        source: String,
        target: String,
        output: PathBuf,
    },
    /// Geodesic error of a correspondence file against ground truth.
    Evaluate {
        /// Correspondence file, one target index per source vertex.
        prediction: PathBuf,
        ground_truth: PathBuf,
        target: PathBuf,
        /// Also write the cumulative curve as CSV.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Planar MDS coordinates of a saved graph.
    Mds { graph: PathBuf },
    /// Color the source by position and transfer the colors to the target.
    ExportColors {
        source: PathBuf,
        target: PathBuf,
        correspondence: PathBuf,
        out: PathBuf,
    },
}

fn read_pairs(path: &Path) -> shapegraph::Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_whitespace().collect::<Vec<_>>()[..] {
            [a, b] => pairs.push((a.to_owned(), b.to_owned())),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    location: shapegraph::error::Location::Line(n + 1),
                    message: "expected two shape ids".into(),
                })
            }
        }
    }
    Ok(pairs)
}

fn collection_graph(
    ws: &Workspace,
    collection: &Path,
) -> anyhow::Result<(
    ShapeGraph,
    shapegraph::graph::PairStore,
    Vec<shapegraph::mesh::Mesh>,
)> {
    let shapes = load_collection(collection)?;
    let (_, store, _, _) = compute_store(ws, &shapes)?;
    let meshes: Vec<_> = shapes.into_iter().map(|s| s.mesh).collect();
    let graph = build_graph(&store, &meshes, ws.config.topology)?;
    Ok((graph, store, meshes))
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let settings = &cli.settings;
    match cli.command {
        Command::Run {
            collection,
            out,
            gt_dir,
            pairs,
        } => {
            let config = settings.config()?;
            let options = RunOptions {
                cache_root: settings.cache_dir.clone(),
                gt_dir,
                query_pairs: pairs.as_deref().map(read_pairs).transpose()?,
            };
            let summary = run_pipeline(&collection, &out, &config, &options)?;
            for stage in &summary.stages {
                println!(
                    "{}: {} cached, {} computed",
                    stage.name, stage.cache_hits, stage.computed
                );
            }
            println!(
                "{} shapes, {} pairs, mean cycle score {:.6}",
                summary.nodes.len(),
                summary.unordered_pairs,
                summary.mean_cycle_score
            );
            if let (Some(e), Some(d)) = (summary.mean_error, summary.direct_mean_error) {
                println!("mean geodesic error {e:.6} (direct matches {d:.6})");
            }
        }
        Command::Preprocess { input, output } => {
            let mesh = preprocess(&load_mesh(&input)?)?;
            write_ply(&output, &mesh, None)?;
        }
        Command::Spectral { mesh } => {
            let ws = settings.workspace()?;
            let (prepared, status) = ws.spectral(&load_shape(&mesh)?)?;
            log::info!("{:?}", status);
            println!(
                "{}",
                serde_json::to_string_pretty(prepared.basis.eigenvalues())?
            );
        }
        Command::MatchPair {
            source,
            target,
            out,
        } => {
            let ws = settings.workspace()?;
            let (a, b) = (load_shape(&source)?, load_shape(&target)?);
            let (pa, _) = ws.spectral(&a)?;
            let (pb, _) = ws.spectral(&b)?;
            let (fa, fb) = (ws.descriptor(&pa)?, ws.descriptor(&pb)?);
            let (result, _) = ws.match_pair((&a, &pa, &fa), (&b, &pb, &fb))?;
            write_pair_artifacts(
                &out,
                &a.mesh,
                &b.mesh,
                &result,
                &hex::encode(ws.config.hash()),
            )?;
            println!("match loss {:.6}", result.match_loss);
        }
        Command::BuildGraph { collection, output } => {
            let ws = settings.workspace()?;
            let (graph, _, _) = collection_graph(&ws, &collection)?;
            write_atomic(
                &output,
                serde_json::to_string_pretty(&graph.to_document()?)?.as_bytes(),
            )?;
        }
        Command::MultiMatch {
            collection,
            source,
            target,
            output,
        } => {
            let ws = settings.workspace()?;
            let (graph, store, meshes) = collection_graph(&ws, &collection)?;
            let index = |id: &str| graph.index_of(id);
            let mm = multi_match(&graph, &store, &meshes, index(&source)?, index(&target)?)?;
            write_atomic(&output, correspondence_text(&mm.pi).as_bytes())?;
            let path: Vec<&str> = mm.path.iter().map(|&v| graph.nodes()[v].as_str()).collect();
            println!(
                "path {} cycle score {:.6}",
                path.join(" -> "),
                mm.cycle_score
            );
        }
        Command::Evaluate {
            prediction,
            ground_truth,
            target,
            curve,
        } => {
            let target = preprocess(&load_mesh(&target)?)?;
            let pred = read_correspondence(&prediction, target.vertex_count())?;
            let report = geodesic_error(&pred, &GroundTruth::read(&ground_truth)?, &target)?;
            if let Some(path) = curve {
                write_atomic(&path, report.curve_csv().as_bytes())?;
            }
            println!(
                "mean error {:.6} over {} pairs ({} excluded)",
                report.mean_error,
                report.count(),
                report.excluded
            );
        }
        Command::Mds { graph } => {
            let text = std::fs::read_to_string(&graph).map_err(|e| Error::Io {
                path: graph.clone(),
                source: e,
            })?;
            let doc: GraphDocument = serde_json::from_str(&text).map_err(Error::from)?;
            let g = ShapeGraph::from_document(&doc)?;
            let xy = mds_embedding(&g)?;
            for (i, id) in g.nodes().iter().enumerate() {
                println!("{id}\t{}\t{}", xy[(i, 0)], xy[(i, 1)]);
            }
        }
        Command::ExportColors {
            source,
            target,
            correspondence,
            out,
        } => {
            let a = preprocess(&load_mesh(&source)?)?;
            let b = preprocess(&load_mesh(&target)?)?;
            let pi = read_correspondence(&correspondence, b.vertex_count())?;
            if pi.len() != a.vertex_count() {
                bail!(Error::DimensionMismatch(format!(
                    "correspondence has {} entries, {} has {} vertices",
                    pi.len(),
                    a.id(),
                    a.vertex_count()
                )));
            }
            let colors = position_colors(&a);
            write_ply(out.join(format!("{}.ply", a.id())), &a, Some(&colors))?;
            write_ply(
                out.join(format!("{}.ply", pair_name(a.id(), b.id()))),
                &b,
                Some(&transfer_colors(&colors, &pi)),
            )
            .context("writing transferred colors")?;
        }
    }
    Ok(())
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain()
        .any(|cause| match cause.downcast_ref::<Error>() {
            Some(Error::Io { source, .. }) => source.kind() == std::io::ErrorKind::NotFound,
            Some(e) => e.is_validation(),
            None => false,
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_validation(&err) { 2 } else { 1 })
        }
    }
}
