//! Pairwise matching: optimal-transport energy, entropic Sinkhorn, the
//! alignment least-squares fit and the hierarchical scheme that alternates
//! between them over increasing spectral resolution.

mod alignment;
mod assignment;
mod energy;
mod hierarchy;
mod sinkhorn;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use alignment::fit_alignment;
pub use assignment::nearest_neighbor_assignment;
pub use energy::{cost_matrix, match_energy, match_energy_hard, regularized_energy};
pub use hierarchy::{
    farthest_point_sample, hierarchical_match, hierarchical_match_traced, level_schedule,
    LevelTrace, PreparedShape,
};
pub use sinkhorn::{sinkhorn, SinkhornMode, SinkhornOptions};

/// Soft coupling between `m` source and `n` target vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    weights: DMatrix<f64>,
    row_marginal: Vec<f64>,
    col_marginal: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl TransportPlan {
    pub(crate) fn from_parts(
        weights: DMatrix<f64>,
        row_marginal: Vec<f64>,
        col_marginal: Vec<f64>,
        iterations: usize,
        converged: bool,
    ) -> Self {
        TransportPlan {
            weights,
            row_marginal,
            col_marginal,
            iterations,
            converged,
        }
    }

    /// The 0/1 plan of a hard correspondence. Row marginals are 1 and column
    /// marginals count the hits on each target vertex.
    pub fn from_correspondence(pi: &Correspondence) -> Self {
        let weights = pi.to_dense();
        let col_marginal = weights.column_iter().map(|c| c.sum()).collect();
        TransportPlan {
            weights,
            row_marginal: vec![1.0; pi.len()],
            col_marginal,
            iterations: 0,
            converged: true,
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn row_marginal(&self) -> &[f64] {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &[f64] {
        &self.col_marginal
    }

    /// Sinkhorn iterations spent (0 for plans not produced by the solver).
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Largest absolute deviation of any row or column sum from its marginal.
    pub fn marginal_residual(&self) -> f64 {
        let rows = self
            .weights
            .row_iter()
            .zip(&self.row_marginal)
            .map(|(r, a)| (r.sum() - a).abs());
        let cols = self
            .weights
            .column_iter()
            .zip(&self.col_marginal)
            .map(|(c, b)| (c.sum() - b).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Total map from source vertices into `[0, target_count)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Correspondence {
    target_index: Vec<usize>,
    target_count: usize,
}

impl Correspondence {
    pub fn new(target_index: Vec<usize>, target_count: usize) -> Result<Self> {
        if let Some((i, &t)) = target_index
            .iter()
            .enumerate()
            .find(|(_, &t)| t >= target_count)
        {
            return Err(Error::InvalidMesh(format!(
                "correspondence maps source {i} to {t}, target has {target_count} vertices"
            )));
        }
        Ok(Correspondence {
            target_index,
            target_count,
        })
    }

    pub fn identity(n: usize) -> Self {
        Correspondence {
            target_index: (0..n).collect(),
            target_count: n,
        }
    }

    pub fn target_index(&self) -> &[usize] {
        &self.target_index
    }

    pub fn target_count(&self) -> usize {
        self.target_count
    }

    pub fn len(&self) -> usize {
        self.target_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_index.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.target_index[i]
    }

    /// `self` followed by `next`: `i -> next(self(i))`.
    pub fn then(&self, next: &Correspondence) -> Result<Correspondence> {
        if next.len() != self.target_count {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose a map into {} vertices with a map from {}",
                self.target_count,
                next.len()
            )));
        }
        Ok(Correspondence {
            target_index: self
                .target_index
                .iter()
                .map(|&t| next.target_index[t])
                .collect(),
            target_count: next.target_count,
        })
    }

    /// Row-stochastic 0/1 matrix (`m x n`).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.len(), self.target_count);
        for (i, &t) in self.target_index.iter().enumerate() {
            p[(i, t)] = 1.0;
        }
        p
    }
}

/// Functional map `C` (`k x k`) and displacement coefficients `tau`
/// (`k x 3`) at one spectral level.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentParams {
    pub c: DMatrix<f64>,
    pub tau: DMatrix<f64>,
}

impl AlignmentParams {
    pub fn identity(k: usize) -> Self {
        AlignmentParams {
            c: DMatrix::identity(k, k),
            tau: DMatrix::zeros(k, 3),
        }
    }

    pub fn level(&self) -> usize {
        self.c.nrows()
    }

    /// Pad to level `k`: identity on the new diagonal block of `C`, zeros
    /// elsewhere and in the new rows of `tau`.
    pub fn lift(&self, k: usize) -> Result<AlignmentParams> {
        let old = self.level();
        if k < old {
            return Err(Error::OutOfRange {
                what: "lifted level below current level",
                value: k,
                limit: old,
            });
        }
        let mut c = DMatrix::identity(k, k);
        c.view_mut((0, 0), (old, old)).copy_from(&self.c);
        let mut tau = DMatrix::zeros(k, 3);
        tau.view_mut((0, 0), (old, 3)).copy_from(&self.tau);
        Ok(AlignmentParams { c, tau })
    }

    /// `(1 - t) self + t other`
    pub(crate) fn blend(&self, other: &AlignmentParams, t: f64) -> AlignmentParams {
        AlignmentParams {
            c: &self.c * (1.0 - t) + &other.c * t,
            tau: &self.tau * (1.0 - t) + &other.tau * t,
        }
    }
}

/// Matching hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct MatchConfig {
    pub k_min: usize,
    pub k_max: usize,
    /// Density of the log-spaced level schedule.
    pub levels_per_octave: f64,
    pub entropy_weight: f64,
    pub sinkhorn_iters: usize,
    pub sinkhorn_tol: f64,
    /// Use lumped vertex areas instead of uniform marginals.
    pub area_weighted_marginals: bool,
    /// Farthest-point sample size per shape for the transport steps.
    pub subsample: Option<usize>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            k_min: 6,
            k_max: 21,
            levels_per_octave: 4.0,
            entropy_weight: 5e-3,
            sinkhorn_iters: 2000,
            sinkhorn_tol: 1e-9,
            area_weighted_marginals: false,
            subsample: None,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::Precondition(format!(
                "need 1 <= kMin <= kMax, got kMin={} kMax={}",
                self.k_min, self.k_max
            )));
        }
        if !(self.entropy_weight > 0.0)
            || !(self.levels_per_octave > 0.0)
            || !(self.sinkhorn_tol > 0.0)
        {
            return Err(Error::Precondition(
                "entropy weight, levels per octave and sinkhorn tolerance must be positive".into(),
            ));
        }
        if self.subsample == Some(0) {
            return Err(Error::Precondition(
                "subsample size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn sinkhorn_options(&self) -> SinkhornOptions {
        SinkhornOptions {
            entropy: self.entropy_weight,
            max_iterations: self.sinkhorn_iters,
            tolerance: self.sinkhorn_tol,
            mode: SinkhornMode::LogDomain,
        }
    }
}

/// Outputs of one directed pairwise match.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub pi: Correspondence,
    /// Source vertices displaced by `Psi tau` at the finest level (`m x 3`).
    pub registration: DMatrix<f64>,
    pub match_loss: f64,
    pub per_level_energy: Vec<f64>,
    pub levels: Vec<usize>,
    pub final_alignment: AlignmentParams,
}
