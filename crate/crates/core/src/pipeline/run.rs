use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::artifacts::{correspondence_text, MatchRecord};
use super::{write_atomic, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{aggregate, geodesic_error, EvalReport, GroundTruth};
use crate::graph::{
    affinity_matrix, build_graph, compose_maps, multi_match, MultiMatch, PairStore, ShapeGraph,
};
use crate::matching::{
    hierarchical_match, match_energy_hard, Correspondence, MatchResult, PreparedShape,
};
use crate::mesh::{load_mesh, ply_document, write_ply, Mesh, Rgb};
use crate::spectral::{cache, FeatureEmbedding};

const SPECTRAL_KEY_VERSION: &str = "spectral-v1";
const MATCH_KEY_VERSION: &str = "match-v1";

fn hex32(h: &[u8; 32]) -> String {
    hex::encode(h)
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn in_stage<T>(r: Result<T>, stage: &'static str, subject: impl Into<String>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage,
        subject: subject.into(),
        source: Box::new(e),
    })
}

/// Name of per-pair artifacts.
pub fn pair_name(source: &str, target: &str) -> String {
    format!("{source}__{target}")
}

/// A normalized mesh with the hash of the file it came from.
#[derive(Debug, Clone)]
pub struct LoadedShape {
    pub mesh: Mesh,
    pub path: PathBuf,
    pub content_hash: [u8; 32],
}

/// Loads and normalizes one mesh file; the id is the file stem.
pub fn load_shape(path: &Path) -> Result<LoadedShape> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw = load_mesh(path)?;
    Ok(LoadedShape {
        mesh: crate::mesh::preprocess(&raw)?,
        path: path.to_path_buf(),
        content_hash: Sha256::digest(&bytes).into(),
    })
}

/// Every `.off` / `.ply` file in `dir`, ordered by id.
pub fn load_collection(dir: &Path) -> Result<Vec<LoadedShape>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("off" | "ply")) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut shapes: Vec<LoadedShape> = Vec::with_capacity(paths.len());
    for p in paths {
        let shape = in_stage(load_shape(&p), "load", p.display().to_string())?;
        if let Some(prev) = shapes.iter().find(|s| s.mesh.id() == shape.mesh.id()) {
            return Err(Error::Precondition(format!(
                "{} and {} share the shape id {:?}",
                prev.path.display(),
                p.display(),
                shape.mesh.id()
            )));
        }
        shapes.push(shape);
    }
    shapes.sort_by(|a, b| a.mesh.id().cmp(b.mesh.id()));
    if shapes.len() < 2 {
        return Err(Error::Precondition(format!(
            "{} holds {} mesh file(s); at least two are needed",
            dir.display(),
            shapes.len()
        )));
    }
    Ok(shapes)
}

/// Cache root plus configuration; shared by the pipeline and the
/// single-stage commands.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub cache_root: PathBuf,
    pub config: PipelineConfig,
}

/// Outcome of one cached computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Computed,
}

impl Workspace {
    pub fn new(cache_root: impl Into<PathBuf>, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Workspace {
            cache_root: cache_root.into(),
            config,
        })
    }

    fn spectral_key(&self, shape: &LoadedShape) -> [u8; 32] {
        let k = self.config.cached_eigenpairs().to_le_bytes();
        digest(&[SPECTRAL_KEY_VERSION.as_bytes(), &shape.content_hash, &k])
    }

    fn match_key(&self, a: &LoadedShape, b: &LoadedShape) -> [u8; 32] {
        digest(&[
            MATCH_KEY_VERSION.as_bytes(),
            &a.content_hash,
            &b.content_hash,
            &self.config.match_hash(),
        ])
    }

    /// Eigenbasis from the cache, or computed and stored.
    pub fn spectral(&self, shape: &LoadedShape) -> Result<(PreparedShape, CacheStatus)> {
        let key = self.spectral_key(shape);
        let path = self
            .cache_root
            .join("spectral")
            .join(format!("{}.bin", hex32(&key)));
        let k = self
            .config
            .cached_eigenpairs()
            .min(shape.mesh.vertex_count());
        if let Some(basis) = cache::read(&path, &key)? {
            if basis.dim() == shape.mesh.vertex_count() && basis.k() == k {
                return Ok((
                    PreparedShape::new(shape.mesh.clone(), basis)?,
                    CacheStatus::Hit,
                ));
            }
        }
        let prepared = PreparedShape::compute(shape.mesh.clone(), k)?;
        cache::write(&path, &prepared.basis, &key)?;
        Ok((prepared, CacheStatus::Computed))
    }

    pub fn descriptor(&self, shape: &PreparedShape) -> Result<FeatureEmbedding> {
        self.config.descriptor.descriptor(&shape.basis)
    }

    fn check_size(&self, shape: &PreparedShape) -> Result<()> {
        let m = shape.vertex_count();
        if m > self.config.max_vertices && self.config.matching.subsample.is_none() {
            return Err(Error::Precondition(format!(
                "{} has {m} vertices; matching above {} vertices needs --subsample",
                shape.mesh.id(),
                self.config.max_vertices
            )));
        }
        Ok(())
    }

    /// Directed match from the cache, or computed and stored.
    pub fn match_pair(
        &self,
        (la, sa, fa): (&LoadedShape, &PreparedShape, &FeatureEmbedding),
        (lb, sb, fb): (&LoadedShape, &PreparedShape, &FeatureEmbedding),
    ) -> Result<(MatchResult, CacheStatus)> {
        self.check_size(sa)?;
        self.check_size(sb)?;
        let key = self.match_key(la, lb);
        let path = self
            .cache_root
            .join("matches")
            .join(format!("{}.json", hex32(&key)));
        match std::fs::read(&path) {
            Ok(bytes) => {
                let record: MatchRecord =
                    serde_json::from_slice(&bytes).map_err(|e| Error::Cache {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                return Ok((record.into_result()?, CacheStatus::Hit));
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(&path, e)),
        }
        let result = hierarchical_match(sa, sb, (fa, fb), &self.config.matching)?;
        write_atomic(
            &path,
            serde_json::to_string(&MatchRecord::from(&result))?.as_bytes(),
        )?;
        Ok((result, CacheStatus::Computed))
    }
}

/// Writes the per-pair artifacts: correspondence, registration PLY and a
/// metadata record.
pub fn write_pair_artifacts(
    dir: &Path,
    source: &Mesh,
    target: &Mesh,
    result: &MatchResult,
    config_hash: &str,
) -> Result<()> {
    write_atomic(
        &dir.join("correspondence.txt"),
        correspondence_text(&result.pi).as_bytes(),
    )?;
    let registered: Vec<_> = result
        .registration
        .row_iter()
        .map(|r| nalgebra::Point3::new(r[0], r[1], r[2]))
        .collect();
    let ply = ply_document(
        &format!("{}_registered", source.id()),
        &registered,
        source.triangles(),
        None,
    )?;
    write_atomic(&dir.join("registration.ply"), ply.as_bytes())?;
    let meta = json!({
        "source": source.id(),
        "target": target.id(),
        "matchLoss": result.match_loss,
        "perLevelEnergy": result.per_level_energy,
        "levels": result.levels,
        "configHash": config_hash,
    });
    write_atomic(
        &dir.join("meta.json"),
        serde_json::to_string_pretty(&meta)?.as_bytes(),
    )
}

/// RGB from each vertex's position inside the mesh's bounding box.
pub fn position_colors(mesh: &Mesh) -> Vec<Rgb> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in mesh.vertices() {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let channel = |x: f64, d: usize| {
        let span = hi[d] - lo[d];
        let t = if span > 0.0 { (x - lo[d]) / span } else { 0.5 };
        (t * 255.0).round().clamp(0.0, 255.0) as u8
    };
    mesh.vertices()
        .iter()
        .map(|p| Rgb(channel(p.x, 0), channel(p.y, 1), channel(p.z, 2)))
        .collect()
}

/// Target colors as the mean color of the source vertices mapped onto each
/// target vertex; vertices nothing maps to are grey.
pub fn transfer_colors(source_colors: &[Rgb], pi: &Correspondence) -> Vec<Rgb> {
    let mut sums = vec![[0u64; 4]; pi.target_count()];
    for (s, &t) in pi.target_index().iter().enumerate() {
        let Rgb(r, g, b) = source_colors[s];
        let acc = &mut sums[t];
        acc[0] += u64::from(r);
        acc[1] += u64::from(g);
        acc[2] += u64::from(b);
        acc[3] += 1;
    }
    sums.iter()
        .map(|&[r, g, b, n]| {
            if n == 0 {
                Rgb(128, 128, 128)
            } else {
                let avg = |c: u64| ((c + n / 2) / n) as u8;
                Rgb(avg(r), avg(g), avg(b))
            }
        })
        .collect()
}

/// Extra inputs of a pipeline run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Defaults to `<out>/cache`.
    pub cache_root: Option<PathBuf>,
    /// Directory of `<source>__<target>.txt` ground-truth files.
    pub gt_dir: Option<PathBuf>,
    /// Ordered id pairs to multi-match; all pairs when `None`.
    pub query_pairs: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StageReport {
    pub name: String,
    pub cache_hits: usize,
    pub computed: usize,
}

impl StageReport {
    fn new(name: &str) -> Self {
        StageReport {
            name: name.to_owned(),
            ..Default::default()
        }
    }

    fn count(&mut self, status: CacheStatus) {
        match status {
            CacheStatus::Hit => self.cache_hits += 1,
            CacheStatus::Computed => self.computed += 1,
        }
    }

    pub fn all_hits(&self) -> bool {
        self.computed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MultiMatchEntry {
    pub source: String,
    pub target: String,
    pub path: Vec<String>,
    pub cycle_score: f64,
}

/// What a run produced, mirrored in `manifest.json`.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub nodes: Vec<String>,
    pub unordered_pairs: usize,
    pub directed_results: usize,
    pub stages: Vec<StageReport>,
    pub multi_matches: Vec<MultiMatchEntry>,
    pub mean_cycle_score: f64,
    /// Mean normalized geodesic error of the multi-matches, when ground
    /// truth was supplied.
    pub mean_error: Option<f64>,
    pub direct_mean_error: Option<f64>,
}

fn ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

fn resolve_pairs(
    ids: &[String],
    query: &Option<Vec<(String, String)>>,
) -> Result<Vec<(usize, usize)>> {
    let Some(query) = query else {
        return Ok(ordered_pairs(ids.len()));
    };
    let index = |id: &str| {
        ids.iter()
            .position(|x| x == id)
            .ok_or_else(|| Error::Precondition(format!("query pair names unknown shape {id:?}")))
    };
    query
        .iter()
        .map(|(a, b)| {
            let (i, j) = (index(a)?, index(b)?);
            if i == j {
                return Err(Error::Precondition(format!(
                    "query pair ({a}, {b}) repeats a shape"
                )));
            }
            Ok((i, j))
        })
        .collect()
}

/// Spectral and pairwise stages over a loaded collection.
pub fn compute_store(
    ws: &Workspace,
    shapes: &[LoadedShape],
) -> Result<(Vec<PreparedShape>, PairStore, StageReport, StageReport)> {
    let mut spectral_report = StageReport::new("spectral");
    let prepared: Vec<(PreparedShape, CacheStatus)> = shapes
        .par_iter()
        .map(|s| in_stage(ws.spectral(s), "spectral", s.mesh.id()))
        .collect::<Result<_>>()?;
    for (_, status) in &prepared {
        spectral_report.count(*status);
    }
    let prepared: Vec<PreparedShape> = prepared.into_iter().map(|(p, _)| p).collect();
    let features: Vec<FeatureEmbedding> = prepared
        .par_iter()
        .map(|p| in_stage(ws.descriptor(p), "descriptor", p.mesh.id()))
        .collect::<Result<_>>()?;
    log::info!(
        "spectral: {} cached, {} computed",
        spectral_report.cache_hits,
        spectral_report.computed
    );

    let pairs = ordered_pairs(shapes.len());
    let results: Vec<(MatchResult, CacheStatus)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let subject = pair_name(shapes[i].mesh.id(), shapes[j].mesh.id());
            let r = ws.match_pair(
                (&shapes[i], &prepared[i], &features[i]),
                (&shapes[j], &prepared[j], &features[j]),
            );
            if r.is_ok() {
                log::debug!("matched {subject}");
            }
            in_stage(r, "match", subject)
        })
        .collect::<Result<_>>()?;
    let mut match_report = StageReport::new("match");
    let mut store = PairStore::new();
    for (&(i, j), (result, status)) in pairs.iter().zip(results) {
        match_report.count(status);
        store.insert(shapes[i].mesh.id(), shapes[j].mesh.id(), result);
    }
    log::info!(
        "match: {} cached, {} computed",
        match_report.cache_hits,
        match_report.computed
    );
    Ok((prepared, store, spectral_report, match_report))
}

/// One refinement pass: every stored map is replaced by its multi-match and
/// the weights are re-scored with the direct registrations against them.
fn refine(
    graph: &ShapeGraph,
    store: &PairStore,
    meshes: &[Mesh],
) -> Result<(ShapeGraph, PairStore)> {
    let n = meshes.len();
    let mut refined = PairStore::new();
    for (i, j) in ordered_pairs(n) {
        let path = crate::graph::shortest_path(graph, i, j)?;
        let mut r = store.get(meshes[i].id(), meshes[j].id())?.clone();
        r.pi = compose_maps(&path, graph.nodes(), store)?;
        refined.insert(meshes[i].id(), meshes[j].id(), r);
    }
    let w = affinity_matrix(&refined, meshes)?;
    let g = ShapeGraph::from_weights(graph.nodes().to_vec(), w, graph.topology())?;
    Ok((g, refined))
}

/// Full pipeline: caches, pairwise matches, graph, multi-matches,
/// evaluation and color exports under `out_dir`.
pub fn run_pipeline(
    collection_dir: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
    options: &RunOptions,
) -> Result<RunSummary> {
    let started = SystemTime::now();
    let cache_root = options
        .cache_root
        .clone()
        .unwrap_or_else(|| out_dir.join("cache"));
    let ws = Workspace::new(cache_root, config.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_in_pool(&ws, collection_dir, out_dir, options, started))
}

fn run_in_pool(
    ws: &Workspace,
    collection_dir: &Path,
    out_dir: &Path,
    options: &RunOptions,
    started: SystemTime,
) -> Result<RunSummary> {
    let config = &ws.config;
    let config_hash = hex32(&config.hash());
    let shapes = load_collection(collection_dir)?;
    let meshes: Vec<Mesh> = shapes.iter().map(|s| s.mesh.clone()).collect();
    let ids: Vec<String> = meshes.iter().map(|m| m.id().to_owned()).collect();
    let n = ids.len();
    log::info!("loaded {n} shapes from {}", collection_dir.display());

    let (_, store, spectral_report, match_report) = compute_store(ws, &shapes)?;
    for (i, j) in ordered_pairs(n) {
        let dir = out_dir.join("pairs").join(pair_name(&ids[i], &ids[j]));
        let r = store.get(&ids[i], &ids[j])?;
        in_stage(
            write_pair_artifacts(&dir, &meshes[i], &meshes[j], r, &config_hash),
            "write",
            pair_name(&ids[i], &ids[j]),
        )?;
    }

    let mut graph = in_stage(
        build_graph(&store, &meshes, config.topology),
        "graph",
        config.topology.to_string(),
    )?;
    let mut store = store;
    for pass in 0..config.refine_passes {
        log::info!("refinement pass {}", pass + 1);
        (graph, store) = in_stage(
            refine(&graph, &store, &meshes),
            "refine",
            format!("pass {}", pass + 1),
        )?;
    }
    let graph_json = serde_json::to_string_pretty(&graph.to_document()?)?;
    write_atomic(&out_dir.join("graph.json"), graph_json.as_bytes())?;

    let queries = resolve_pairs(&ids, &options.query_pairs)?;
    let multis: Vec<MultiMatch> = queries
        .iter()
        .map(|&(i, j)| {
            in_stage(
                multi_match(&graph, &store, &meshes, i, j),
                "multi-match",
                pair_name(&ids[i], &ids[j]),
            )
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(multis.len());
    for (&(i, j), mm) in queries.iter().zip(&multis) {
        let name = pair_name(&ids[i], &ids[j]);
        write_atomic(
            &out_dir.join("multi").join(format!("{name}.txt")),
            correspondence_text(&mm.pi).as_bytes(),
        )?;
        entries.push(MultiMatchEntry {
            source: ids[i].clone(),
            target: ids[j].clone(),
            path: mm.path.iter().map(|&v| ids[v].clone()).collect(),
            cycle_score: mm.cycle_score,
        });
    }
    let mean_cycle_score = if entries.is_empty() {
        0.0
    } else {
        entries.iter().map(|e| e.cycle_score).sum::<f64>() / entries.len() as f64
    };
    let multi_summary = json!({ "pairs": entries, "meanCycleScore": mean_cycle_score });
    write_atomic(
        &out_dir.join("multi").join("summary.json"),
        serde_json::to_string_pretty(&multi_summary)?.as_bytes(),
    )?;

    let (mean_error, direct_mean_error) = match &options.gt_dir {
        Some(gt_dir) => {
            evaluate_queries(gt_dir, out_dir, &ids, &meshes, &store, &queries, &multis)?
        }
        None => (None, None),
    };

    let colors: Vec<Vec<Rgb>> = meshes.iter().map(position_colors).collect();
    for (i, mesh) in meshes.iter().enumerate() {
        write_ply(
            out_dir.join("colors").join(format!("{}.ply", ids[i])),
            mesh,
            Some(&colors[i]),
        )?;
    }
    for (&(i, j), mm) in queries.iter().zip(&multis) {
        let transferred = transfer_colors(&colors[i], &mm.pi);
        let path = out_dir
            .join("colors")
            .join(format!("{}.ply", pair_name(&ids[i], &ids[j])));
        write_ply(path, &meshes[j], Some(&transferred))?;
    }

    let summary = RunSummary {
        nodes: ids.clone(),
        unordered_pairs: n * (n - 1) / 2,
        directed_results: store.len(),
        stages: vec![spectral_report, match_report],
        multi_matches: entries,
        mean_cycle_score,
        mean_error,
        direct_mean_error,
    };
    let unix = |t: SystemTime| {
        t.duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    };
    let manifest = json!({
        "toolVersion": env!("CARGO_PKG_VERSION"),
        "config": config,
        "configHash": config_hash,
        "startedAt": unix(started),
        "finishedAt": unix(SystemTime::now()),
        "meshes": shapes.iter().map(|s| json!({
            "id": s.mesh.id(),
            "file": s.path.display().to_string(),
            "contentHash": hex32(&s.content_hash),
            "vertices": s.mesh.vertex_count(),
        })).collect::<Vec<_>>(),
        "matchKeys": ordered_pairs(n).iter().map(|&(i, j)| json!({
            "source": ids[i],
            "target": ids[j],
            "key": hex32(&ws.match_key(&shapes[i], &shapes[j])),
        })).collect::<Vec<_>>(),
        "graph": {
            "topology": config.topology,
            "tspSolver": graph.tsp_solver(),
            "sha256": hex::encode(Sha256::digest(graph_json.as_bytes())),
        },
        "summary": summary,
    });
    write_atomic(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(summary)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EvalEntry {
    pair: String,
    mean_error: f64,
    count: usize,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_queries(
    gt_dir: &Path,
    out_dir: &Path,
    ids: &[String],
    meshes: &[Mesh],
    store: &PairStore,
    queries: &[(usize, usize)],
    multis: &[MultiMatch],
) -> Result<(Option<f64>, Option<f64>)> {
    let mut multi_reports = Vec::new();
    let mut direct_reports = Vec::new();
    let (mut multi_entries, mut direct_entries) = (Vec::new(), Vec::new());
    for (&(i, j), mm) in queries.iter().zip(multis) {
        let name = pair_name(&ids[i], &ids[j]);
        let gt_path = gt_dir.join(format!("{name}.txt"));
        if !gt_path.exists() {
            continue;
        }
        let gt = in_stage(GroundTruth::read(&gt_path), "evaluate", &name)?;
        let report: EvalReport =
            in_stage(geodesic_error(&mm.pi, &gt, &meshes[j]), "evaluate", &name)?;
        let direct = in_stage(
            geodesic_error(&store.get(&ids[i], &ids[j])?.pi, &gt, &meshes[j]),
            "evaluate",
            &name,
        )?;
        write_atomic(
            &out_dir.join("eval").join(format!("{name}.csv")),
            report.curve_csv().as_bytes(),
        )?;
        multi_entries.push(EvalEntry {
            pair: name.clone(),
            mean_error: report.mean_error,
            count: report.count(),
        });
        direct_entries.push(EvalEntry {
            pair: name,
            mean_error: direct.mean_error,
            count: direct.count(),
        });
        multi_reports.push(report);
        direct_reports.push(direct);
    }
    if multi_reports.is_empty() {
        log::warn!(
            "no ground-truth files matched the queried pairs in {}",
            gt_dir.display()
        );
        return Ok((None, None));
    }
    let all = aggregate(&multi_reports)?;
    let all_direct = aggregate(&direct_reports)?;
    write_atomic(
        &out_dir.join("eval").join("all.csv"),
        all.curve_csv().as_bytes(),
    )?;
    let summary = json!({
        "pairs": multi_entries,
        "direct": direct_entries,
        "meanError": all.mean_error,
        "directMeanError": all_direct.mean_error,
        "count": all.count(),
    });
    write_atomic(
        &out_dir.join("eval").join("summary.json"),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok((Some(all.mean_error), Some(all_direct.mean_error)))
}

/// `E(V_reg, V_target; pi)` for every stored pair, keyed by pair name.
pub fn directed_energies(store: &PairStore, meshes: &[Mesh]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, j) in ordered_pairs(meshes.len()) {
        let r = store.get(meshes[i].id(), meshes[j].id())?;
        let e = match_energy_hard(&r.registration, &meshes[j].coordinate_matrix(), &r.pi)?;
        out.insert(pair_name(meshes[i].id(), meshes[j].id()), e);
    }
    Ok(out)
}
