use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::SpectralBasis;
use crate::error::{Error, Result};

/// Eigenvalues at or below this are treated as the constant kernel.
const ZERO_EIGENVALUE: f64 = 1e-10;

/// Dense per-vertex descriptor matrix (`m x l`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEmbedding {
    features: DMatrix<f64>,
}

impl FeatureEmbedding {
    pub fn new(features: DMatrix<f64>) -> Result<Self> {
        if features.ncols() == 0 {
            return Err(Error::InvalidMesh(
                "feature embedding has no columns".into(),
            ));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMesh(
                "feature embedding has non-finite entries".into(),
            ));
        }
        Ok(FeatureEmbedding { features })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Each column divided by its maximum absolute value.
    pub fn max_normalized(&self) -> FeatureEmbedding {
        let mut f = self.features.clone();
        for mut col in f.column_iter_mut() {
            let top = col.amax();
            if top > 0.0 {
                col /= top;
            }
        }
        FeatureEmbedding { features: f }
    }

    /// Rows selected by `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureEmbedding {
        FeatureEmbedding {
            features: self.features.select_rows(rows),
        }
    }
}

/// Descriptor parameters. `sigma_factor` scales the log-energy step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct WksConfig {
    pub num_energies: usize,
    pub sigma_factor: f64,
}

impl Default for WksConfig {
    fn default() -> Self {
        WksConfig {
            num_energies: 128,
            sigma_factor: 7.0,
        }
    }
}

impl WksConfig {
    /// Absolute sigma for `basis`.
    pub fn sigma(&self, basis: &SpectralBasis) -> Result<f64> {
        let (lo, hi) = log_range(basis)?;
        let step = (hi - lo) / self.num_energies.saturating_sub(1).max(1) as f64;
        Ok(if step > 0.0 {
            self.sigma_factor * step
        } else {
            1.0
        })
    }

    pub fn descriptor(&self, basis: &SpectralBasis) -> Result<FeatureEmbedding> {
        wks_descriptor(basis, self.num_energies, self.sigma(basis)?)
    }
}

fn log_range(basis: &SpectralBasis) -> Result<(f64, f64)> {
    if basis.k() < 2 {
        return Err(Error::OutOfRange {
            what: "eigenpairs for descriptor (need at least 2)",
            value: basis.k(),
            limit: 2,
        });
    }
    let lambda = basis.eigenvalues();
    let hi = lambda[basis.k() - 1];
    if hi <= ZERO_EIGENVALUE {
        return Err(Error::Precondition("all eigenvalues are zero".into()));
    }
    // the first nonzero eigenvalue; lambda_2 on a connected mesh
    let lo = lambda
        .iter()
        .copied()
        .find(|&l| l > ZERO_EIGENVALUE)
        .unwrap_or(hi);
    Ok((lo.ln(), hi.ln()))
}

/// Wave kernel signature with `num_energies` log-energies spread uniformly
/// over `[log lambda_2, log lambda_k]` and Gaussian width `sigma`.
///
/// Column `t` at vertex `v` is
/// `sum_j psi_j(v)^2 w_tj / sum_j w_tj` with
/// `w_tj = exp(-(e_t - log lambda_j)^2 / (2 sigma^2))`, summing over the
/// nonzero eigenvalues only.
pub fn wks_descriptor(
    basis: &SpectralBasis,
    num_energies: usize,
    sigma: f64,
) -> Result<FeatureEmbedding> {
    if num_energies == 0 {
        return Err(Error::OutOfRange {
            what: "descriptor energy count",
            value: 0,
            limit: usize::MAX,
        });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Precondition(format!(
            "descriptor sigma must be positive, got {sigma}"
        )));
    }
    let (lo, hi) = log_range(basis)?;
    let used: Vec<usize> = (0..basis.k())
        .filter(|&j| basis.eigenvalues()[j] > ZERO_EIGENVALUE)
        .collect();
    let log_lambda: Vec<f64> = used.iter().map(|&j| basis.eigenvalues()[j].ln()).collect();
    let psi = basis.eigenfunctions();
    let m = basis.dim();

    // weights[j, t], stabilized per energy by the largest exponent
    let mut weights = DMatrix::zeros(used.len(), num_energies);
    for t in 0..num_energies {
        let e = if num_energies == 1 {
            lo
        } else {
            lo + (hi - lo) * t as f64 / (num_energies - 1) as f64
        };
        let exponents: Vec<f64> = log_lambda
            .iter()
            .map(|l| -(e - l).powi(2) / (2.0 * sigma * sigma))
            .collect();
        let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = exponents.iter().map(|x| (x - top).exp()).sum();
        for (j, x) in exponents.iter().enumerate() {
            weights[(j, t)] = (x - top).exp() / total;
        }
    }
    let squared = DMatrix::from_fn(m, used.len(), |v, j| psi[(v, used[j])].powi(2));
    FeatureEmbedding::new(squared * weights)
}
