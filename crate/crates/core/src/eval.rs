//! Geodesic correspondence error, normalized by the square root of the
//! target's surface area, with cumulative error curves.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Location, Result};
use crate::matching::Correspondence;
use crate::mesh::{geodesic_distances, Mesh};

/// Samples on the cumulative curve.
pub const CURVE_SAMPLES: usize = 200;
/// Largest threshold on the curve, in normalized distance units.
pub const CURVE_MAX: f64 = 0.25;

/// Reference pairs `(source vertex, target vertex)`, dense or sparse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pairs: Vec<(usize, usize)>,
}

impl GroundTruth {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(pairs.len());
        for &(s, _) in &pairs {
            if !seen.insert(s) {
                return Err(Error::Precondition(format!(
                    "ground truth lists source vertex {s} twice"
                )));
            }
        }
        Ok(GroundTruth { pairs })
    }

    pub fn identity(n: usize) -> Self {
        GroundTruth {
            pairs: (0..n).map(|i| (i, i)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Two whitespace-separated 0-based indices per line; blank lines and
    /// `#` comments are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: path.to_path_buf(),
                location: Location::Line(n + 1),
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [s, t] = fields[..] else {
                return Err(bad(format!("expected two indices, found {}", fields.len())));
            };
            let idx = |x: &str| {
                x.parse::<usize>()
                    .map_err(|e| bad(format!("bad index {x:?}: {e}")))
            };
            pairs.push((idx(s)?, idx(t)?));
        }
        GroundTruth::new(pairs)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub per_vertex_error: Vec<f64>,
    pub mean_error: f64,
    /// `(threshold, fraction of errors <= threshold)`.
    pub curve: Vec<(f64, f64)>,
    /// Pairs left out because the predicted vertex cannot reach the reference.
    pub excluded: usize,
}

impl EvalReport {
    pub fn from_errors(errors: Vec<f64>, excluded: usize) -> Self {
        let mean_error = if errors.is_empty() {
            0.0
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        };
        let mut sorted = errors.clone();
        sorted.sort_by(f64::total_cmp);
        let curve = (0..CURVE_SAMPLES)
            .map(|s| {
                let t = CURVE_MAX * s as f64 / (CURVE_SAMPLES - 1) as f64;
                (t, fraction_at(&sorted, t))
            })
            .collect();
        EvalReport {
            per_vertex_error: errors,
            mean_error,
            curve,
            excluded,
        }
    }

    /// Fraction of errors at or below `threshold`; `1` at `+inf`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        let mut sorted = self.per_vertex_error.clone();
        sorted.sort_by(f64::total_cmp);
        fraction_at(&sorted, threshold)
    }

    pub fn count(&self) -> usize {
        self.per_vertex_error.len()
    }

    pub fn curve_csv(&self) -> String {
        let mut out = String::from("threshold,fraction\n");
        for (t, f) in &self.curve {
            writeln!(out, "{t},{f}").expect("writing to a string");
        }
        out
    }
}

fn fraction_at(sorted: &[f64], threshold: f64) -> f64 {
    if sorted.is_empty() {
        return 1.0;
    }
    sorted.partition_point(|&e| e <= threshold) as f64 / sorted.len() as f64
}

/// Per-pair error `d(pred(s), t*) / sqrt(area)` on the target's edge graph.
pub fn geodesic_error(
    pred: &Correspondence,
    gt: &GroundTruth,
    target: &Mesh,
) -> Result<EvalReport> {
    let n = target.vertex_count();
    if pred.target_count() != n {
        return Err(Error::DimensionMismatch(format!(
            "map targets {} vertices, mesh {} has {n}",
            pred.target_count(),
            target.id()
        )));
    }
    // one Dijkstra per distinct reference vertex
    let mut by_reference: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &(s, t)) in gt.pairs().iter().enumerate() {
        if s >= pred.len() {
            return Err(Error::OutOfRange {
                what: "ground-truth source vertex",
                value: s,
                limit: pred.len(),
            });
        }
        if t >= n {
            return Err(Error::OutOfRange {
                what: "ground-truth target vertex",
                value: t,
                limit: n,
            });
        }
        by_reference.entry(t).or_default().push(k);
    }
    let scale = target.total_area().sqrt();
    let mut errors = vec![f64::NAN; gt.pairs().len()];
    for (&t, ks) in &by_reference {
        let field = geodesic_distances(target, &[t])?;
        for &k in ks {
            errors[k] = field.distances[pred.apply(gt.pairs()[k].0)] / scale;
        }
    }
    let excluded = errors.iter().filter(|e| !e.is_finite()).count();
    if excluded > 0 {
        log::warn!(
            "{excluded} ground-truth pairs on {} are unreachable and were excluded",
            target.id()
        );
    }
    Ok(EvalReport::from_errors(
        errors.into_iter().filter(|e| e.is_finite()).collect(),
        excluded,
    ))
}

/// Pools the per-vertex errors of several reports.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    if reports.is_empty() {
        return Err(Error::Precondition("no reports to aggregate".into()));
    }
    let errors = reports
        .iter()
        .flat_map(|r| r.per_vertex_error.iter().copied())
        .collect();
    Ok(EvalReport::from_errors(
        errors,
        reports.iter().map(|r| r.excluded).sum(),
    ))
}
