use nalgebra::DMatrix;

use super::alignment::fit_blocks;
use super::energy::{cost_matrix, regularized_energy, transport_energy};
use super::{nearest_neighbor_assignment, sinkhorn, AlignmentParams, MatchConfig, MatchResult};
use crate::error::{Error, Result};
use crate::mesh::{mass_matrix, stiffness_matrix, Mesh};
use crate::spectral::{
    deformed_embedding, eigendecomposition, shell_embedding, FeatureEmbedding, ShellEmbedding,
    SpectralBasis,
};

/// Halvings tried by the step-size safeguard before falling back to the
/// previous parameters.
const MAX_HALVINGS: usize = 12;

/// A normalized mesh together with its eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedShape {
    pub mesh: Mesh,
    pub basis: SpectralBasis,
}

impl PreparedShape {
    pub fn new(mesh: Mesh, basis: SpectralBasis) -> Result<Self> {
        if mesh.vertex_count() != basis.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mesh {} has {} vertices, basis has {}",
                mesh.id(),
                mesh.vertex_count(),
                basis.dim()
            )));
        }
        Ok(PreparedShape { mesh, basis })
    }

    /// Compute `k` eigenpairs of an already normalized mesh.
    pub fn compute(mesh: Mesh, k: usize) -> Result<Self> {
        let basis = eigendecomposition(&mass_matrix(&mesh)?, &stiffness_matrix(&mesh)?, k)?;
        Ok(PreparedShape { mesh, basis })
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }
}

/// Energies of one level, for checking block descent.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTrace {
    pub level: usize,
    /// Regularized energy of the previous plan under this level's cost.
    pub before_sinkhorn: f64,
    pub after_sinkhorn: f64,
    pub after_fit: f64,
    /// Accepted fraction of the least-squares step.
    pub step: f64,
    pub sinkhorn_iterations: usize,
    pub sinkhorn_converged: bool,
}

/// Rounded log-spaced levels from `k_min` to `k_max`, deduplicated and
/// ascending.
pub fn level_schedule(k_min: usize, k_max: usize, levels_per_octave: f64) -> Result<Vec<usize>> {
    if k_min == 0 || k_min > k_max || !(levels_per_octave > 0.0) {
        return Err(Error::Precondition(format!(
            "empty level schedule for kMin={k_min} kMax={k_max}"
        )));
    }
    if k_min == k_max {
        return Ok(vec![k_min]);
    }
    let ratio = k_max as f64 / k_min as f64;
    let steps = (ratio.log2() * levels_per_octave).ceil().max(1.0) as usize;
    let mut levels: Vec<usize> = (0..=steps)
        .map(|t| (k_min as f64 * ratio.powf(t as f64 / steps as f64)).round() as usize)
        .map(|k| k.clamp(k_min, k_max))
        .collect();
    levels.dedup();
    Ok(levels)
}

/// Greedy farthest-point sample of `count` vertices, seeded at vertex 0,
/// ties to the smallest index.
pub fn farthest_point_sample(mesh: &Mesh, count: usize) -> Vec<usize> {
    let pts = mesh.vertices();
    let count = count.min(pts.len());
    if count == 0 {
        return Vec::new();
    }
    let mut chosen = vec![0];
    let mut dist: Vec<f64> = pts.iter().map(|p| (p - pts[0]).norm_squared()).collect();
    while chosen.len() < count {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, &d) in dist.iter().enumerate() {
            if d > best.0 {
                best = (d, i);
            }
        }
        let next = best.1;
        chosen.push(next);
        for (d, p) in dist.iter_mut().zip(pts) {
            *d = d.min((p - pts[next]).norm_squared());
        }
    }
    chosen
}

fn marginal(shape: &PreparedShape, rows: &[usize], area_weighted: bool) -> Vec<f64> {
    if area_weighted {
        let d = shape.basis.mass().diagonal();
        let total: f64 = rows.iter().map(|&i| d[i]).sum();
        rows.iter().map(|&i| d[i] / total).collect()
    } else {
        vec![1.0 / rows.len() as f64; rows.len()]
    }
}

fn sample_rows(shape: &PreparedShape, config: &MatchConfig) -> Vec<usize> {
    match config.subsample {
        Some(s) if s < shape.vertex_count() => farthest_point_sample(&shape.mesh, s),
        _ => (0..shape.vertex_count()).collect(),
    }
}

fn deformed_features(
    base: &ShellEmbedding,
    params: &AlignmentParams,
    rows: &[usize],
) -> Result<DMatrix<f64>> {
    Ok(deformed_embedding(base, &params.c, &params.tau)?
        .concat()
        .select_rows(rows))
}

pub fn hierarchical_match(
    source: &PreparedShape,
    target: &PreparedShape,
    init: (&FeatureEmbedding, &FeatureEmbedding),
    config: &MatchConfig,
) -> Result<MatchResult> {
    hierarchical_match_traced(source, target, init, config).map(|(r, _)| r)
}

/// Alternating transport / alignment over the level schedule.
///
/// The initial plan comes from the (max-normalized) descriptors. Only the
/// functional map is fitted to it; the displacement starts at zero. Each
/// level then lifts the parameters, solves the transport problem on the
/// shell-embedding cost and takes the least-squares step, halved until the
/// full regularized energy (normals included) does not increase.
pub fn hierarchical_match_traced(
    source: &PreparedShape,
    target: &PreparedShape,
    init: (&FeatureEmbedding, &FeatureEmbedding),
    config: &MatchConfig,
) -> Result<(MatchResult, Vec<LevelTrace>)> {
    config.validate()?;
    let schedule = level_schedule(config.k_min, config.k_max, config.levels_per_octave)?;
    for (name, shape) in [("source", source), ("target", target)] {
        if shape.basis.k() < config.k_max {
            return Err(Error::Precondition(format!(
                "{name} {} has {} eigenpairs, kMax is {}",
                shape.mesh.id(),
                shape.basis.k(),
                config.k_max
            )));
        }
    }
    let (fx, fy) = init;
    if fx.len() != source.vertex_count()
        || fy.len() != target.vertex_count()
        || fx.dim() != fy.dim()
    {
        return Err(Error::DimensionMismatch(format!(
            "initial features {}x{} and {}x{} do not fit meshes with {} and {} vertices",
            fx.len(),
            fx.dim(),
            fy.len(),
            fy.dim(),
            source.vertex_count(),
            target.vertex_count()
        )));
    }

    let rows_x = sample_rows(source, config);
    let rows_y = sample_rows(target, config);
    let a = marginal(source, &rows_x, config.area_weighted_marginals);
    let b = marginal(target, &rows_y, config.area_weighted_marginals);
    let opts = config.sinkhorn_options();
    let entropy = config.entropy_weight;

    let init_cost = cost_matrix(
        &fx.max_normalized().features().select_rows(&rows_x),
        &fy.max_normalized().features().select_rows(&rows_y),
    )?;
    let init_plan = sinkhorn(&init_cost, &a, &b, &opts)?;
    log::debug!(
        "descriptor plan: {} sinkhorn iterations",
        init_plan.iterations()
    );
    let mut plan = init_plan.weights().clone();

    let k0 = schedule[0];
    let mut params = {
        let sx = shell_embedding(&source.mesh, &source.basis, k0)?;
        let ty = shell_embedding(&target.mesh, &target.basis, k0)?;
        fit_blocks(
            &plan,
            &sx.basis().select_rows(&rows_x),
            &sx.base_coords().select_rows(&rows_x),
            &ty.spectral_part().select_rows(&rows_y),
            &ty.smoothed_coords().select_rows(&rows_y),
            false,
        )?
    };

    let mut per_level_energy = Vec::with_capacity(schedule.len());
    let mut trace = Vec::with_capacity(schedule.len());
    for &k in &schedule {
        params = params.lift(k)?;
        let sx = shell_embedding(&source.mesh, &source.basis, k)?;
        let ty = shell_embedding(&target.mesh, &target.basis, k)?;
        let g = ty.concat().select_rows(&rows_y);

        let cost = cost_matrix(&deformed_features(&sx, &params, &rows_x)?, &g)?;
        let before_sinkhorn = regularized_energy(&cost, &plan, entropy);
        let solved = sinkhorn(&cost, &a, &b, &opts)?;
        plan = solved.weights().clone();
        let after_sinkhorn = regularized_energy(&cost, &plan, entropy);
        log::debug!(
            "level {k}: sinkhorn {} iterations (converged {}), energy {before_sinkhorn:.6e} -> {after_sinkhorn:.6e}",
            solved.iterations(),
            solved.converged()
        );

        let proposal = fit_blocks(
            &plan,
            &sx.basis().select_rows(&rows_x),
            &sx.base_coords().select_rows(&rows_x),
            &ty.spectral_part().select_rows(&rows_y),
            &ty.smoothed_coords().select_rows(&rows_y),
            true,
        )?;
        let mut accepted = (0.0, cost, after_sinkhorn);
        let mut t = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let candidate = params.blend(&proposal, t);
            // a candidate whose normals degenerate is simply rejected
            if let Ok(f) = deformed_features(&sx, &candidate, &rows_x) {
                let c = cost_matrix(&f, &g)?;
                let e = regularized_energy(&c, &plan, entropy);
                if e <= after_sinkhorn {
                    params = candidate;
                    accepted = (t, c, e);
                    break;
                }
            }
            t *= 0.5;
        }
        let (step, level_cost, after_fit) = accepted;
        per_level_energy.push(transport_energy(&level_cost, &plan));
        trace.push(LevelTrace {
            level: k,
            before_sinkhorn,
            after_sinkhorn,
            after_fit,
            step,
            sinkhorn_iterations: solved.iterations(),
            sinkhorn_converged: solved.converged(),
        });
    }

    let k_max = *schedule.last().expect("schedule is non-empty");
    let sx = shell_embedding(&source.mesh, &source.basis, k_max)?;
    let ty = shell_embedding(&target.mesh, &target.basis, k_max)?;
    let deformed = deformed_embedding(&sx, &params.c, &params.tau)?;
    let pi = nearest_neighbor_assignment(&deformed.concat(), &ty.concat())?;
    let registration = source.mesh.coordinate_matrix() + sx.basis() * &params.tau;
    let match_loss = per_level_energy.iter().sum();
    Ok((
        MatchResult {
            pi,
            registration,
            match_loss,
            per_level_energy,
            levels: schedule,
            final_alignment: params,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::preprocess;
    use crate::spectral::WksConfig;
    use crate::synthetic::{grid_patch, icosphere};

    #[test]
    fn schedule_bookkeeping() {
        let s = level_schedule(6, 21, 4.0).unwrap();
        assert_eq!(s.first(), Some(&6));
        assert_eq!(s.last(), Some(&21));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(level_schedule(6, 6, 4.0).unwrap(), vec![6]);
        assert!(level_schedule(7, 6, 4.0).is_err());
        assert!(level_schedule(0, 6, 4.0).is_err());
    }

    #[test]
    fn lift_pads_with_identity() {
        let p = AlignmentParams {
            c: DMatrix::from_element(2, 2, 3.0),
            tau: DMatrix::from_element(2, 3, 1.0),
        };
        let q = p.lift(4).unwrap();
        assert_eq!(q.c[(0, 1)], 3.0);
        assert_eq!(q.c[(2, 2)], 1.0);
        assert_eq!(q.c[(3, 2)], 0.0);
        assert_eq!(q.c[(1, 3)], 0.0);
        assert_eq!(q.tau[(3, 0)], 0.0);
        assert_eq!(q.tau[(1, 2)], 1.0);
        assert!(p.lift(1).is_err());
    }

    #[test]
    fn farthest_points_are_spread() {
        let mesh = grid_patch(5, 5, |_, _| 0.0);
        let s = farthest_point_sample(&mesh, 4);
        assert_eq!(s, vec![0, 24, 4, 20]);
        assert_eq!(farthest_point_sample(&mesh, 100).len(), 25);
    }

    fn prepared(mesh: &Mesh, k: usize) -> PreparedShape {
        PreparedShape::compute(preprocess(mesh).unwrap(), k).unwrap()
    }

    #[test]
    fn self_match_on_small_sphere() {
        let shape = prepared(&icosphere(2), 30);
        let f = WksConfig::default().descriptor(&shape.basis).unwrap();
        let config = MatchConfig::default();
        let (result, trace) = hierarchical_match_traced(&shape, &shape, (&f, &f), &config).unwrap();
        let hits = result
            .pi
            .target_index()
            .iter()
            .enumerate()
            .filter(|(i, &t)| *i == t)
            .count();
        assert!(hits as f64 >= 0.99 * shape.vertex_count() as f64, "{hits}");
        assert_eq!(result.per_level_energy.len(), result.levels.len());
        assert!((result.match_loss - result.per_level_energy.iter().sum::<f64>()).abs() < 1e-9);
        for t in &trace {
            assert!(t.after_sinkhorn <= t.before_sinkhorn + 1e-9, "{t:?}");
            assert!(t.after_fit <= t.after_sinkhorn + 1e-9, "{t:?}");
        }
    }

    #[test]
    fn single_level_and_determinism() {
        let shape = prepared(&grid_patch(6, 6, |x, y| 0.1 * (x - y).sin()), 8);
        let f = WksConfig {
            num_energies: 16,
            ..WksConfig::default()
        }
        .descriptor(&shape.basis)
        .unwrap();
        let config = MatchConfig {
            k_min: 6,
            k_max: 6,
            ..MatchConfig::default()
        };
        let a = hierarchical_match(&shape, &shape, (&f, &f), &config).unwrap();
        let b = hierarchical_match(&shape, &shape, (&f, &f), &config).unwrap();
        assert_eq!(a.per_level_energy.len(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_short_bases() {
        let shape = prepared(&icosphere(1), 10);
        let f = WksConfig::default().descriptor(&shape.basis).unwrap();
        assert!(hierarchical_match(&shape, &shape, (&f, &f), &MatchConfig::default()).is_err());
    }
}
