use nalgebra::{Cholesky, DMatrix};

use super::{AlignmentParams, TransportPlan};
use crate::error::{Error, Result};
use crate::spectral::ShellEmbedding;

const DAMPING: f64 = 1e-9;

/// Least-squares `(C, tau)` for a fixed plan.
///
/// Minimizes `sum_ij P_ij (|psi_i C^T - phi_j|^2 + |s_i + psi_i tau - t_j|^2)`
/// where `psi`, `s` are the source eigenfunctions and smoothed coordinates
/// and `phi`, `t` the target ones. Normals are not part of the fit.
pub fn fit_alignment(
    plan: &TransportPlan,
    source: &ShellEmbedding,
    target: &ShellEmbedding,
) -> Result<AlignmentParams> {
    if source.level() != target.level() {
        return Err(Error::DimensionMismatch(format!(
            "embedding levels differ: {} vs {}",
            source.level(),
            target.level()
        )));
    }
    fit_blocks(
        plan.weights(),
        source.basis(),
        source.base_coords(),
        target.spectral_part(),
        target.smoothed_coords(),
        true,
    )
}

/// Normal equations `(Psi^T diag(r) Psi + eps I) X = Psi^T (P Y - diag(r) Z)`,
/// with `r` the plan's row sums. Row-normalizing the plan before the
/// barycentric transfer cancels against the `diag(r)` weights.
pub(crate) fn fit_blocks(
    weights: &DMatrix<f64>,
    psi_x: &DMatrix<f64>,
    coords_x: &DMatrix<f64>,
    psi_y: &DMatrix<f64>,
    coords_y: &DMatrix<f64>,
    fit_tau: bool,
) -> Result<AlignmentParams> {
    let (m, n) = weights.shape();
    let k = psi_x.ncols();
    if psi_x.nrows() != m
        || coords_x.nrows() != m
        || psi_y.nrows() != n
        || coords_y.nrows() != n
        || psi_y.ncols() != k
    {
        return Err(Error::DimensionMismatch(format!(
            "plan {m}x{n} does not fit source {}x{k} / target {}x{}",
            psi_x.nrows(),
            psi_y.nrows(),
            psi_y.ncols()
        )));
    }
    let r: Vec<f64> = weights.row_iter().map(|row| row.sum()).collect();
    let mut weighted = psi_x.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= r[i];
    }
    let mut gram = psi_x.tr_mul(&weighted);
    for d in 0..k {
        gram[(d, d)] += DAMPING;
    }
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::RankDeficient(format!(
            "weighted Gram matrix at level {k} is not positive definite"
        ))
    })?;

    let transported = weights * psi_y;
    let c_t = chol.solve(&psi_x.tr_mul(&transported));
    let tau = if fit_tau {
        let rhs = psi_x.tr_mul(&(weights * coords_y)) - weighted.tr_mul(coords_x);
        chol.solve(&rhs)
    } else {
        DMatrix::zeros(k, 3)
    };
    if c_t.iter().chain(tau.iter()).any(|x| !x.is_finite()) {
        return Err(Error::RankDeficient(
            "alignment solution is not finite".into(),
        ));
    }
    Ok(AlignmentParams {
        c: c_t.transpose(),
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::Correspondence;
    use crate::mesh::{mass_matrix, preprocess, stiffness_matrix};
    use crate::spectral::{eigendecomposition, shell_embedding};
    use crate::synthetic::icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn objective(
        p: &DMatrix<f64>,
        psi_x: &DMatrix<f64>,
        sx: &DMatrix<f64>,
        psi_y: &DMatrix<f64>,
        sy: &DMatrix<f64>,
        a: &AlignmentParams,
    ) -> f64 {
        let fx = psi_x * a.c.transpose();
        let gx = sx + psi_x * &a.tau;
        let mut e = 0.0;
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                let d1 = (fx.row(i) - psi_y.row(j)).norm_squared();
                let d2 = (gx.row(i) - sy.row(j)).norm_squared();
                e += p[(i, j)] * (d1 + d2);
            }
        }
        e
    }

    #[test]
    fn self_pair_with_identity_plan_is_identity() {
        let mesh = preprocess(&icosphere(1)).unwrap();
        let basis = eigendecomposition(
            &mass_matrix(&mesh).unwrap(),
            &stiffness_matrix(&mesh).unwrap(),
            9,
        )
        .unwrap();
        let emb = shell_embedding(&mesh, &basis, 9).unwrap();
        let mut plan =
            TransportPlan::from_correspondence(&Correspondence::identity(mesh.vertex_count()));
        plan.weights /= mesh.vertex_count() as f64;
        let a = fit_alignment(&plan, &emb, &emb).unwrap();
        assert!((&a.c - DMatrix::<f64>::identity(9, 9)).amax() < 1e-6);
        assert!(a.tau.amax() < 1e-6);
    }

    #[test]
    fn constant_basis_reduces_to_scale_and_translation() {
        // k = 1: C is a scalar and psi tau a translation
        let (c0, c1) = (0.8, 1.3);
        let psi_x = DMatrix::from_element(3, 1, c0);
        let psi_y = DMatrix::from_element(2, 1, c1);
        let sx = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let sy = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 3.0, 1.0, -1.0]);
        let p = DMatrix::from_row_slice(3, 2, &[0.2, 0.1, 0.1, 0.2, 0.3, 0.1]);
        let a = fit_blocks(&p, &psi_x, &sx, &psi_y, &sy, true).unwrap();
        // total mass 1, so C = c1 / c0 and c0 tau = mean(P-weighted target) - mean(weighted source)
        assert!((a.c[(0, 0)] - c1 / c0).abs() < 1e-8);
        let r = [0.3, 0.3, 0.4];
        let q = [0.6, 0.4];
        for d in 0..3 {
            let src: f64 = (0..3).map(|i| r[i] * sx[(i, d)]).sum();
            let tgt: f64 = (0..2).map(|j| q[j] * sy[(j, d)]).sum();
            assert!((c0 * a.tau[(0, d)] - (tgt - src)).abs() < 1e-8);
        }
    }

    #[test]
    fn beats_random_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, n, k) = (8, 8, 3);
        let mut u =
            |r: usize, c: usize| DMatrix::<f64>::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let psi_x = u(m, k);
        let psi_y = u(n, k);
        let sx = u(m, 3);
        let sy = u(n, 3);
        let p = u(m, n).map(|x| x.abs() / 32.0);
        let best = fit_blocks(&p, &psi_x, &sx, &psi_y, &sy, true).unwrap();
        let e_best = objective(&p, &psi_x, &sx, &psi_y, &sy, &best);
        for s in 0..1000 {
            let scale = if s % 2 == 0 { 1.0 } else { 0.05 };
            let cand = AlignmentParams {
                c: &best.c + DMatrix::from_fn(k, k, |_, _| scale * rng.random_range(-1.0..1.0)),
                tau: &best.tau + DMatrix::from_fn(k, 3, |_, _| scale * rng.random_range(-1.0..1.0)),
            };
            assert!(e_best <= objective(&p, &psi_x, &sx, &psi_y, &sy, &cand) + 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let psi_x = DMatrix::zeros(4, 2);
        let p = DMatrix::from_element(4, 4, 1.0 / 16.0);
        let r = fit_blocks(
            &p,
            &psi_x,
            &DMatrix::zeros(4, 3),
            &DMatrix::zeros(4, 2),
            &DMatrix::zeros(4, 3),
            true,
        );
        // the damping alone keeps this solvable, with a zero solution
        assert!(r.unwrap().c.amax() == 0.0);
        let bad = fit_blocks(
            &p,
            &DMatrix::from_element(4, 2, f64::NAN),
            &DMatrix::zeros(4, 3),
            &DMatrix::zeros(4, 2),
            &DMatrix::zeros(4, 3),
            true,
        );
        assert!(bad.is_err());
    }
}
