use nalgebra::{DMatrix, DVector};

use super::TransportPlan;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkhornMode {
    /// Potentials in log space; never underflows.
    LogDomain,
    /// Classic `diag(u) K diag(v)` scaling; fails on kernel underflow.
    Scaling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    pub entropy: f64,
    pub max_iterations: usize,
    /// Bound on the largest row-sum deviation. Columns are exact after
    /// every iteration.
    pub tolerance: f64,
    pub mode: SinkhornMode,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            entropy: 5e-3,
            max_iterations: 2000,
            tolerance: 1e-9,
            mode: SinkhornMode::LogDomain,
        }
    }
}

fn validate(cost: &DMatrix<f64>, row: &[f64], col: &[f64], opts: &SinkhornOptions) -> Result<()> {
    let (m, n) = cost.shape();
    if row.len() != m || col.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "cost is {m}x{n}, marginals have {} and {} entries",
            row.len(),
            col.len()
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::Precondition("empty cost matrix".into()));
    }
    if !(opts.entropy > 0.0) || !opts.entropy.is_finite() {
        return Err(Error::Precondition(format!(
            "entropy weight must be positive, got {}",
            opts.entropy
        )));
    }
    if row.iter().chain(col).any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Precondition(
            "marginals must be positive and finite".into(),
        ));
    }
    let (sa, sb): (f64, f64) = (row.iter().sum(), col.iter().sum());
    if (sa - sb).abs() > 1e-9 * sa.max(sb) {
        return Err(Error::Precondition(format!(
            "marginal masses differ: {sa} vs {sb}"
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Precondition(
            "cost matrix has non-finite entries".into(),
        ));
    }
    Ok(())
}

/// Entropic optimal transport: the minimizer of
/// `<C, P> + lambda sum P log P` with row sums `row` and column sums `col`.
///
/// Returns the plan after the row residual drops below the tolerance or the
/// iteration budget runs out (see [`TransportPlan::converged`]).
pub fn sinkhorn(
    cost: &DMatrix<f64>,
    row: &[f64],
    col: &[f64],
    opts: &SinkhornOptions,
) -> Result<TransportPlan> {
    validate(cost, row, col, opts)?;
    let (weights, iterations, converged) = match opts.mode {
        SinkhornMode::LogDomain => log_domain(cost, row, col, opts),
        SinkhornMode::Scaling => scaling(cost, row, col, opts)?,
    };
    if !converged {
        log::warn!(
            "sinkhorn stopped after {iterations} iterations without reaching tolerance {:e}",
            opts.tolerance
        );
    }
    Ok(TransportPlan::from_parts(
        weights,
        row.to_vec(),
        col.to_vec(),
        iterations,
        converged,
    ))
}

/// Entropy is annealed from the cost spread down to the target weight by
/// this factor per stage, warm-starting the potentials.
const ANNEALING_FACTOR: f64 = 4.0;
/// Iteration cap for the intermediate annealing stages.
const STAGE_ITERATIONS: usize = 100;
/// Kernel entries more than `exp(-TRUNCATION)` below the best entry of both
/// their row and their column are dropped from the working kernel.
const TRUNCATION: f64 = 36.0;
/// Scaling factors are folded into the potentials once their log leaves
/// `[-ABSORB, ABSORB]`.
const ABSORB: f64 = 30.0;

fn annealing_schedule(cost: &DMatrix<f64>, entropy: f64) -> Vec<f64> {
    let spread = cost.max() - cost.min();
    let mut stages = Vec::new();
    let mut lambda = spread;
    while lambda > entropy * ANNEALING_FACTOR {
        stages.push(lambda);
        lambda /= ANNEALING_FACTOR;
    }
    stages.push(entropy);
    stages
}

/// Working kernel `exp((f_i + g_j - C_ij) / lambda)`, either full or
/// restricted to a column-compressed support.
enum Kernel {
    Dense(DMatrix<f64>),
    Sparse {
        col_ptr: Vec<usize>,
        rows: Vec<usize>,
        costs: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Kernel {
    /// `out_j = sum_i K_ij u_i`.
    fn column_sums(&self, u: &[f64], out: &mut [f64]) {
        match self {
            Kernel::Dense(k) => {
                for (o, kj) in out.iter_mut().zip(k.column_iter()) {
                    *o = kj.iter().zip(u).map(|(k, u)| k * u).sum();
                }
            }
            Kernel::Sparse {
                col_ptr,
                rows,
                values,
                ..
            } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let span = col_ptr[j]..col_ptr[j + 1];
                    *o = rows[span.clone()]
                        .iter()
                        .zip(&values[span])
                        .map(|(&i, k)| k * u[i])
                        .sum();
                }
            }
        }
    }

    /// `out_i = sum_j K_ij v_j`.
    fn row_sums(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            Kernel::Dense(k) => {
                for (kj, vj) in k.column_iter().zip(v) {
                    for (o, k) in out.iter_mut().zip(kj.iter()) {
                        *o += k * vj;
                    }
                }
            }
            Kernel::Sparse {
                col_ptr,
                rows,
                values,
                ..
            } => {
                for (j, vj) in v.iter().enumerate() {
                    let span = col_ptr[j]..col_ptr[j + 1];
                    for (&i, k) in rows[span.clone()].iter().zip(&values[span]) {
                        out[i] += k * vj;
                    }
                }
            }
        }
    }
}

/// Potentials `f`, `g` in cost units; the plan is
/// `exp((f_i + g_j - C_ij) / lambda)`.
struct LogSolver<'a> {
    cost: &'a DMatrix<f64>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    row_max: Vec<f64>,
    row_lse: Vec<f64>,
}

impl LogSolver<'_> {
    /// Exact log-domain column update on the full cost.
    fn update_columns(&mut self, lambda: f64) {
        let inv = 1.0 / lambda;
        for (j, cj) in self.cost.column_iter().enumerate() {
            let top = cj
                .iter()
                .zip(&self.f)
                .map(|(c, fi)| fi - c)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (c, fi) in cj.iter().zip(&self.f) {
                let z = (fi - c - top) * inv;
                if z > -TRUNCATION {
                    s += z.exp();
                }
            }
            self.g[j] = lambda * (self.log_b[j] - s.ln()) - top;
        }
    }

    /// Fills `row_lse` with `LSE_j((g_j - C_ij) / lambda)` over the full
    /// cost and returns the largest row-sum deviation of the current plan.
    fn row_residual(&mut self, lambda: f64, row: &[f64]) -> f64 {
        let inv = 1.0 / lambda;
        self.row_max.fill(f64::NEG_INFINITY);
        for (cj, gj) in self.cost.column_iter().zip(&self.g) {
            for (mx, c) in self.row_max.iter_mut().zip(cj.iter()) {
                *mx = mx.max(gj - c);
            }
        }
        self.row_lse.fill(0.0);
        for (cj, gj) in self.cost.column_iter().zip(&self.g) {
            for ((acc, c), mx) in self.row_lse.iter_mut().zip(cj.iter()).zip(&self.row_max) {
                let z = (gj - c - mx) * inv;
                if z > -TRUNCATION {
                    *acc += z.exp();
                }
            }
        }
        for (acc, mx) in self.row_lse.iter_mut().zip(&self.row_max) {
            *acc = mx * inv + acc.ln();
        }
        self.f
            .iter()
            .zip(&self.row_lse)
            .zip(row)
            .map(|((fi, lse), a)| (fi / lambda + lse).exp() - a)
            .fold(0.0, |acc: f64, d| acc.max(d.abs()))
    }

    fn update_rows(&mut self, lambda: f64) {
        for ((fi, la), lse) in self.f.iter_mut().zip(&self.log_a).zip(&self.row_lse) {
            *fi = lambda * (la - lse);
        }
    }

    /// Kernel on the entries within `TRUNCATION` (in units of `lambda`) of
    /// their row's or their column's largest `potential - cost`; dense when
    /// that keeps most entries anyway.
    fn kernel(&self, lambda: f64) -> Kernel {
        let (m, n) = self.cost.shape();
        let inv = 1.0 / lambda;
        let band = TRUNCATION * lambda;
        let mut row_floor = vec![f64::NEG_INFINITY; m];
        for (cj, gj) in self.cost.column_iter().zip(&self.g) {
            for (mx, c) in row_floor.iter_mut().zip(cj.iter()) {
                *mx = mx.max(gj - c);
            }
        }
        for r in &mut row_floor {
            *r -= band;
        }
        let col_floor: Vec<f64> = self
            .cost
            .column_iter()
            .map(|cj| {
                cj.iter()
                    .zip(&self.f)
                    .map(|(c, fi)| fi - c)
                    .fold(f64::NEG_INFINITY, f64::max)
                    - band
            })
            .collect();
        let keep = |i: usize, j: usize, c: f64| {
            self.g[j] - c >= row_floor[i] || self.f[i] - c >= col_floor[j]
        };
        let nnz: usize = self
            .cost
            .column_iter()
            .enumerate()
            .map(|(j, cj)| {
                cj.iter()
                    .enumerate()
                    .filter(|&(i, &c)| keep(i, j, c))
                    .count()
            })
            .sum();
        if 2 * nnz > m * n {
            return Kernel::Dense(DMatrix::from_fn(m, n, |i, j| {
                ((self.f[i] + self.g[j] - self.cost[(i, j)]) * inv).exp()
            }));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let (mut rows, mut costs, mut values) = (
            Vec::with_capacity(nnz),
            Vec::with_capacity(nnz),
            Vec::with_capacity(nnz),
        );
        for (j, cj) in self.cost.column_iter().enumerate() {
            for (i, &c) in cj.iter().enumerate() {
                if keep(i, j, c) {
                    rows.push(i);
                    costs.push(c);
                    values.push(((self.f[i] + self.g[j] - c) * inv).exp());
                }
            }
            col_ptr.push(rows.len());
        }
        Kernel::Sparse {
            col_ptr,
            rows,
            costs,
            values,
        }
    }

    /// Moves the scalings into the potentials and refreshes the kernel.
    fn absorb(&mut self, kernel: &mut Kernel, u: &mut [f64], v: &mut [f64], lambda: f64) {
        for (fi, ui) in self.f.iter_mut().zip(u.iter_mut()) {
            *fi += lambda * ui.ln();
            *ui = 1.0;
        }
        for (gj, vj) in self.g.iter_mut().zip(v.iter_mut()) {
            *gj += lambda * vj.ln();
            *vj = 1.0;
        }
        let inv = 1.0 / lambda;
        match kernel {
            Kernel::Dense(k) => {
                for (j, mut kj) in k.column_iter_mut().enumerate() {
                    for (i, x) in kj.iter_mut().enumerate() {
                        *x = ((self.f[i] + self.g[j] - self.cost[(i, j)]) * inv).exp();
                    }
                }
            }
            Kernel::Sparse {
                col_ptr,
                rows,
                costs,
                values,
            } => {
                for j in 0..self.g.len() {
                    for e in col_ptr[j]..col_ptr[j + 1] {
                        values[e] = ((self.f[rows[e]] + self.g[j] - costs[e]) * inv).exp();
                    }
                }
            }
        }
    }

    /// Scaling iterations on the truncated kernel until the (truncated) row
    /// residual drops below `tol` or `budget` is used up. The potentials
    /// hold the result afterwards.
    fn iterate(&mut self, lambda: f64, row: &[f64], col: &[f64], tol: f64, budget: usize) -> usize {
        let (m, n) = self.cost.shape();
        let mut kernel = self.kernel(lambda);
        let (mut u, mut v) = (vec![1.0; m], vec![1.0; n]);
        let (mut rs, mut cs) = (vec![0.0; m], vec![0.0; n]);
        let mut used = 0;
        while used < budget {
            used += 1;
            kernel.column_sums(&u, &mut cs);
            for ((vj, s), b) in v.iter_mut().zip(&cs).zip(col) {
                *vj = b / s;
            }
            kernel.row_sums(&v, &mut rs);
            let mut residual = 0.0f64;
            for ((ui, s), a) in u.iter_mut().zip(&rs).zip(row) {
                residual = residual.max((*ui * s - a).abs());
                *ui = a / s;
            }
            if residual <= tol {
                break;
            }
            let drift = u.iter().chain(&v).any(|x| !(x.ln().abs() <= ABSORB));
            if drift {
                self.absorb(&mut kernel, &mut u, &mut v, lambda);
            }
        }
        self.absorb(&mut kernel, &mut u, &mut v, lambda);
        used
    }
}

fn log_domain(
    cost: &DMatrix<f64>,
    row: &[f64],
    col: &[f64],
    opts: &SinkhornOptions,
) -> (DMatrix<f64>, usize, bool) {
    let (m, n) = cost.shape();
    let mut solver = LogSolver {
        cost,
        log_a: row.iter().map(|a| a.ln()).collect(),
        log_b: col.iter().map(|b| b.ln()).collect(),
        f: vec![0.0; m],
        g: vec![0.0; n],
        row_max: vec![0.0; m],
        row_lse: vec![0.0; m],
    };
    let stages = annealing_schedule(cost, opts.entropy);
    let coarse_tol = (1e-2 * row.iter().copied().fold(f64::INFINITY, f64::min)).max(opts.tolerance);
    let mut iterations = 0;
    solver.update_columns(stages[0]);
    let (&lambda, coarse) = stages.split_last().expect("at least one stage");
    // intermediate stages only need rough potentials
    for &eps in coarse {
        let budget = STAGE_ITERATIONS.min(opts.max_iterations - iterations);
        iterations += solver.iterate(eps, row, col, coarse_tol, budget);
    }
    let mut converged = false;
    loop {
        // exact check on the full kernel; columns are exact after this
        solver.update_columns(lambda);
        if solver.row_residual(lambda, row) <= opts.tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        solver.update_rows(lambda);
        iterations += solver.iterate(
            lambda,
            row,
            col,
            opts.tolerance,
            opts.max_iterations - iterations,
        );
    }
    let weights = DMatrix::from_fn(m, n, |i, j| {
        ((solver.f[i] + solver.g[j] - cost[(i, j)]) / lambda).exp()
    });
    (weights, iterations, converged)
}

fn scaling(
    cost: &DMatrix<f64>,
    row: &[f64],
    col: &[f64],
    opts: &SinkhornOptions,
) -> Result<(DMatrix<f64>, usize, bool)> {
    let (m, n) = cost.shape();
    let kernel = cost.map(|c| (-c / opts.entropy).exp());
    if let Some(i) = (0..m).find(|&i| kernel.row(i).iter().all(|&k| k == 0.0)) {
        return Err(Error::Underflow {
            axis: "row",
            index: i,
        });
    }
    if let Some(j) = (0..n).find(|&j| kernel.column(j).iter().all(|&k| k == 0.0)) {
        return Err(Error::Underflow {
            axis: "column",
            index: j,
        });
    }
    let a = DVector::from_column_slice(row);
    let b = DVector::from_column_slice(col);
    let mut u = DVector::from_element(m, 1.0);
    let mut v = b.component_div(&kernel.tr_mul(&u));
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let kv = &kernel * &v;
        let residual = (0..m)
            .map(|i| (u[i] * kv[i] - a[i]).abs())
            .fold(0.0, f64::max);
        if residual <= opts.tolerance {
            converged = true;
            break;
        }
        u = a.component_div(&kv);
        v = b.component_div(&kernel.tr_mul(&u));
        if let Some(i) = u.iter().position(|x| !x.is_finite()) {
            return Err(Error::Underflow {
                axis: "row",
                index: i,
            });
        }
        if let Some(j) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Underflow {
                axis: "column",
                index: j,
            });
        }
        iterations += 1;
    }
    let weights = DMatrix::from_fn(m, n, |i, j| u[i] * kernel[(i, j)] * v[j]);
    Ok((weights, iterations, converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::regularized_energy;
    use proptest::prelude::*;

    fn opts(entropy: f64) -> SinkhornOptions {
        SinkhornOptions {
            entropy,
            ..SinkhornOptions::default()
        }
    }

    #[test]
    fn single_cell_is_forced() {
        for c in [0.0, 3.5, 1e6] {
            let p = sinkhorn(&DMatrix::from_element(1, 1, c), &[1.0], &[1.0], &opts(0.01)).unwrap();
            assert!((p.weights()[(0, 0)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn swap_cost_limits() {
        let cost = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let half = [0.5, 0.5];
        let sharp = sinkhorn(&cost, &half, &half, &opts(0.01)).unwrap();
        let want = [0.5, 0.0, 0.0, 0.5];
        for (i, w) in want.iter().enumerate() {
            assert!((sharp.weights()[(i / 2, i % 2)] - w).abs() < 1e-3);
        }
        // brute force over the one-parameter polytope [[t, 1/2-t], [1/2-t, t]]
        let best = (0..=50_000)
            .map(|s| 0.5 * s as f64 / 50_000.0)
            .map(|t| {
                let p = DMatrix::from_row_slice(2, 2, &[t, 0.5 - t, 0.5 - t, t]);
                (regularized_energy(&cost, &p, 0.01), t)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert!((sharp.weights()[(0, 0)] - best.1).abs() < 1e-4);

        // closed form on the polytope: t / (1/2 - t) = exp(1 / lambda)
        let flat = sinkhorn(&cost, &half, &half, &opts(100.0)).unwrap();
        let e = (0.01f64).exp();
        assert!((flat.weights()[(0, 0)] - 0.5 * e / (1.0 + e)).abs() < 1e-9);
        let flatter = sinkhorn(&cost, &half, &half, &opts(1e4)).unwrap();
        assert!(flatter.weights().iter().all(|w| (w - 0.25).abs() < 1e-3));
    }

    #[test]
    fn scaling_mode_agrees_and_reports_underflow() {
        let cost = DMatrix::from_row_slice(2, 3, &[0.2, 1.0, 0.4, 0.9, 0.1, 0.6]);
        let (a, b) = ([0.5, 0.5], [0.3, 0.3, 0.4]);
        let log = sinkhorn(&cost, &a, &b, &opts(0.1)).unwrap();
        let scaled = sinkhorn(
            &cost,
            &a,
            &b,
            &SinkhornOptions {
                mode: SinkhornMode::Scaling,
                ..opts(0.1)
            },
        )
        .unwrap();
        assert!((log.weights() - scaled.weights()).amax() < 1e-9);

        let far = DMatrix::from_row_slice(2, 2, &[1e2, 1e2 + 0.01, 0.01, 0.0]);
        let err = sinkhorn(
            &far,
            &[0.5, 0.5],
            &[0.5, 0.5],
            &SinkhornOptions {
                mode: SinkhornMode::Scaling,
                ..opts(1e-2)
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Underflow {
                axis: "row",
                index: 0
            }
        ));
        // the log-domain solver handles the same problem
        let p = sinkhorn(&far, &[0.5, 0.5], &[0.5, 0.5], &opts(1e-2)).unwrap();
        assert!(p.marginal_residual() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cost = DMatrix::zeros(2, 2);
        assert!(sinkhorn(&cost, &[0.5, 0.5], &[0.5, 0.6], &opts(0.1)).is_err());
        assert!(sinkhorn(&cost, &[0.5, 0.5], &[0.5, 0.5], &opts(0.0)).is_err());
        assert!(sinkhorn(&cost, &[1.0], &[0.5, 0.5], &opts(0.1)).is_err());
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let cost = DMatrix::from_fn(6, 6, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 + 0.1 * (i * j) as f64
        });
        let u = [1.0 / 6.0; 6];
        let p = sinkhorn(
            &cost,
            &u,
            &u,
            &SinkhornOptions {
                max_iterations: 1,
                tolerance: 1e-15,
                ..opts(1e-3)
            },
        )
        .unwrap();
        assert!(!p.converged());
        assert_eq!(p.iterations(), 1);
    }

    proptest! {
        #[test]
        fn plans_meet_their_marginals(seed in 0u64..500, m in 1usize..=20, n in 1usize..=20) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cost = DMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..1.0));
            let mut a: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            a.iter_mut().for_each(|x| *x /= sa);
            b.iter_mut().for_each(|x| *x /= sb);
            let p = sinkhorn(&cost, &a, &b, &opts(0.05)).unwrap();
            prop_assert!(p.converged());
            prop_assert!(p.marginal_residual() <= 1e-6);
            prop_assert!(p.weights().iter().all(|&w| w >= 0.0));
        }
    }
}
