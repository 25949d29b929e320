//! Non-negative least squares: minimize ||design·x − target||² subject to
//! x ≥ 0, for one or many right-hand sides.
//!
//! The solver is block principal pivoting on the normal equations. Variables
//! are partitioned into a passive set (free to be positive) and an active set
//! (pinned at zero); whole blocks of misclassified variables are exchanged at
//! once. When block exchanges stop making progress, the solver switches to
//! line-searched descent passes: the most violated pinned variable is freed
//! and the move toward the passive-set optimum stops exactly where the first
//! passive variable reaches zero, so each pass ends feasible with a strictly
//! smaller residual. Block exchanges resume only when the misclassification
//! count reaches a new record low, which can happen finitely often, so the
//! alternation terminates.
//! Additions to the passive set are capped per exchange: when far more
//! variables want in than the data can support — routine when features
//! outnumber documents — flipping them all at once creates wildly
//! rank-deficient subproblems whose sign thrash never settles, so the block
//! grows by at most a doubling step instead, and never past the document
//! count.
//! The normal-equation Gram matrix is computed once and shared across
//! right-hand sides, since the design (documents × n-grams) is common to all
//! representation coordinates.
//!
//! Returned solutions are non-negative exactly — zero entries are exact
//! zeros, not small numbers — and every success is certified against the KKT
//! optimality conditions.

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{dot, Cholesky, LinalgError, Matrix};

/// Default KKT certification tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Default exchange budget for a problem with `q` variables.
pub fn default_max_iter(q: usize) -> usize {
    5 * q.max(1)
}

/// Relative diagonal ridge applied only when a principal submatrix turns out
/// not to be positive definite (duplicate binary feature columns make this
/// routine). The ridge-shifted factorization serves as a preconditioner; the
/// solution is refined against the unshifted system.
const RIDGE: f64 = 1e-10;

/// Iterative-refinement sweeps after each principal solve.
const REFINEMENT_STEPS: usize = 3;

/// Block exchanges allowed without progress before switching to
/// line-searched descent passes.
const BACKUP_EXCHANGES: usize = 3;

/// Floor on how many variables a single block exchange may add to the passive
/// set. Growth is capped at the larger of this and the current passive-set
/// size (a doubling schedule), which keeps early exchanges from freeing far
/// more variables than the document count can determine.
const MAX_NEW_FREE: usize = 16;

#[derive(Debug, Error)]
pub enum NnlsError {
    #[error("non-finite entry in problem data")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no convergence in {iterations} pivots (KKT residual {kkt_residual:.3e})")]
    NonConvergence { kkt_residual: f64, iterations: usize, best: Vec<f64> },
    #[error("column {column}: {source}")]
    Column { column: usize, source: Box<NnlsError> },
    #[error("solution has negative entry at {0}")]
    NegativeEntry(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Solve quality report for one right-hand side.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NnlsDiagnostics {
    /// Residual sum of squares at the solution.
    pub objective: f64,
    /// Maximum violation of the optimality conditions.
    pub kkt_residual: f64,
    /// Pivot steps performed: block exchanges plus descent-pass solves.
    pub iterations: usize,
    /// Number of variables pinned at zero.
    pub active_set_size: usize,
}

/// Computes designᵀ·v without materializing the transpose.
fn design_t_vec(design: &Matrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; design.cols()];
    for i in 0..design.rows() {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for (j, &a) in design.row(i).iter().enumerate() {
            out[j] += a * vi;
        }
    }
    out
}

fn objective_from_gram(gram: &Matrix, atb: &[f64], btb: f64, x: &[f64]) -> f64 {
    let mut quad = 0.0;
    let mut lin = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        quad += xi * dot(gram.row(i), x);
        lin += xi * atb[i];
    }
    (btb + quad - 2.0 * lin).max(0.0)
}

/// Gradient of the half-objective at `x`: g = gram·x − atb, exploiting the
/// sparsity of `x`.
fn gradient(gram: &Matrix, atb: &[f64], x: &[f64]) -> Vec<f64> {
    let q = atb.len();
    let mut g: Vec<f64> = atb.iter().map(|&v| -v).collect();
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for i in 0..q {
            g[i] += gram[(i, j)] * xj;
        }
    }
    g
}

fn kkt_from_gradient(g: &[f64], x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (i, &xi) in x.iter().enumerate() {
        let v = if xi > 0.0 { g[i].abs() } else { -g[i] };
        worst = worst.max(v);
    }
    worst.max(0.0)
}

/// Solves the unconstrained normal equations restricted to the index set `f`,
/// with iterative refinement. When the principal submatrix is not positive
/// definite (duplicate feature columns make this routine), a ridge-shifted
/// copy is factored instead and used purely as a preconditioner: refinement
/// still iterates against the unshifted system, which is always consistent
/// because both the submatrix and the right-hand side live in the design's
/// row space, so the ridge bias is driven out rather than returned.
fn solve_principal(gram: &Matrix, atb: &[f64], f: &[usize]) -> Result<Vec<f64>, NnlsError> {
    let k = f.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut sub = Matrix::zeros(k, k);
    for (a, &i) in f.iter().enumerate() {
        for (b, &j) in f.iter().enumerate() {
            sub[(a, b)] = gram[(i, j)];
        }
    }
    let rhs: Vec<f64> = f.iter().map(|&i| atb[i]).collect();
    let chol = match Cholesky::factor(&sub) {
        Ok(c) => c,
        Err(LinalgError::NotPositiveDefinite { .. }) => {
            let max_diag = (0..k).map(|a| sub[(a, a)]).fold(0.0f64, f64::max);
            let mut shifted = sub.clone();
            for a in 0..k {
                shifted[(a, a)] += RIDGE * (1.0 + max_diag);
            }
            Cholesky::factor(&shifted)?
        }
        Err(e) => return Err(e.into()),
    };
    let mut x = chol.solve_vec(&rhs);
    for _ in 0..REFINEMENT_STEPS {
        let mut residual = rhs.clone();
        for a in 0..k {
            residual[a] -= dot(sub.row(a), &x);
        }
        let correction = chol.solve_vec(&residual);
        for (xi, c) in x.iter_mut().zip(&correction) {
            *xi += c;
        }
    }
    Ok(x)
}

/// Caps how many currently-pinned variables a block exchange may free.
/// Variables leaving the passive set (negative primal entries) are always
/// flipped; candidates entering it keep only the most violated — smallest
/// dual value, ties broken by index — up to a doubling of the passive set,
/// and never past `max_free` (the row count: beyond it every principal
/// submatrix is singular, so freeing more determines nothing). Returns true
/// when candidates were dropped, meaning the exchange was deliberately
/// partial.
fn cap_additions(
    misclassified: &mut Vec<usize>,
    free: &[bool],
    y: &[f64],
    max_free: usize,
) -> bool {
    let freed = free.iter().filter(|&&b| b).count();
    let room = max_free.saturating_sub(freed).max(1);
    let cap = freed.max(MAX_NEW_FREE).min(room);
    let additions = misclassified.iter().filter(|&&i| !free[i]).count();
    if additions <= cap {
        return false;
    }
    let (removals, mut entering): (Vec<usize>, Vec<usize>) =
        misclassified.iter().partition(|&&i| free[i]);
    entering.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(a.cmp(&b)));
    entering.truncate(cap);
    entering.sort_unstable();
    *misclassified = removals;
    misclassified.extend(entering);
    true
}

/// One feasibility-restoring descent pass, used when block exchanges stall.
///
/// The current iterate is clamped onto the feasible set, the most violated
/// pinned variable (most negative gradient entry) is freed, and the iterate
/// then moves toward the unconstrained optimum on the passive set through
/// exact line searches: each move stops where the first passive variable
/// reaches zero and pins it, and the passive system is re-solved until its
/// solution is strictly positive. Every pass therefore ends at a feasible
/// point with a residual no larger than where it started — the monotonicity
/// that block exchanges cannot promise once the passive set presses against
/// the row-count ceiling and exchanges degenerate into add-one-drop-many
/// churn.
///
/// Each re-solve spends one unit of the shared pivot budget; when the budget
/// runs out the pass stops at the current feasible point and lets the caller
/// report the failure.
fn descent_step(
    gram: &Matrix,
    atb: &[f64],
    free: &mut [bool],
    x: &mut [f64],
    feas_eps: f64,
    iterations: &mut usize,
    max_iter: usize,
) -> Result<(), NnlsError> {
    let q = atb.len();
    for i in 0..q {
        if x[i] <= 0.0 {
            x[i] = 0.0;
            free[i] = false;
        }
    }
    let g = gradient(gram, atb, x);
    let entering = (0..q)
        .filter(|&i| !free[i] && g[i] < -feas_eps)
        .min_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
    if let Some(t) = entering {
        free[t] = true;
    }
    loop {
        if *iterations >= max_iter {
            return Ok(());
        }
        let f: Vec<usize> = (0..q).filter(|&i| free[i]).collect();
        if f.is_empty() {
            return Ok(());
        }
        *iterations += 1;
        let z = solve_principal(gram, atb, &f)?;
        if z.iter().all(|&v| v > 0.0) {
            for (pos, &i) in f.iter().enumerate() {
                x[i] = z[pos];
            }
            return Ok(());
        }
        // Stop where the first passive variable hits zero. Ratios are in
        // [0, 1]: a ratio of zero can only come from the variable freed
        // above, which enters at zero.
        let mut alpha = f64::INFINITY;
        let mut blocking: Vec<(usize, f64)> = Vec::new();
        for (pos, &i) in f.iter().enumerate() {
            if z[pos] <= 0.0 {
                let denom = x[i] - z[pos];
                let ratio = if denom > 0.0 { (x[i] / denom).min(1.0) } else { 0.0 };
                blocking.push((pos, ratio));
                alpha = alpha.min(ratio);
            }
        }
        let mut pins: Vec<usize> =
            blocking.iter().filter(|&&(_, r)| r <= alpha).map(|&(pos, _)| pos).collect();
        if alpha <= 0.0 && pins.len() > 1 {
            // A degenerate step that would immediately re-pin the freshly
            // freed variable: evict the other blockers first and give it
            // another solve.
            if let Some(t) = entering {
                pins.retain(|&pos| f[pos] != t);
            }
        }
        for (pos, &i) in f.iter().enumerate() {
            x[i] += alpha * (z[pos] - x[i]);
            if x[i] < 0.0 {
                x[i] = 0.0;
            }
        }
        for &pos in &pins {
            let i = f[pos];
            x[i] = 0.0;
            free[i] = false;
        }
    }
}

/// Block principal pivoting on a precomputed Gram system.
fn solve_with_gram(
    gram: &Matrix,
    atb: &[f64],
    btb: f64,
    tol: f64,
    max_iter: usize,
    max_free: usize,
) -> Result<(Vec<f64>, NnlsDiagnostics), NnlsError> {
    let q = atb.len();
    // Values this far below zero count as misclassified; anything nearer to
    // zero is treated as zero to keep floating-point dust from forcing
    // endless exchanges. Returned solutions are clamped, so the constraint
    // itself stays exact.
    let scale = atb.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let feas_eps = 1e-12 * scale;

    let mut free = vec![false; q];
    let mut x = vec![0.0f64; q];
    let mut y: Vec<f64> = atb.iter().map(|&v| -v).collect();
    let mut backup = BACKUP_EXCHANGES;
    let mut fewest_misclassified = usize::MAX;
    let mut largest_passive = 0usize;
    let mut iterations = 0usize;

    loop {
        let mut misclassified: Vec<usize> = (0..q)
            .filter(|&i| if free[i] { x[i] < -feas_eps } else { y[i] < -feas_eps })
            .collect();
        if misclassified.is_empty() {
            for v in &mut x {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let g = gradient(gram, atb, &x);
            let kkt = kkt_from_gradient(&g, &x);
            if kkt > tol {
                return Err(NnlsError::NonConvergence { kkt_residual: kkt, iterations, best: x });
            }
            let diagnostics = NnlsDiagnostics {
                objective: objective_from_gram(gram, atb, btb, &x),
                kkt_residual: kkt,
                iterations,
                active_set_size: x.iter().filter(|&&v| v == 0.0).count(),
            };
            return Ok((x, diagnostics));
        }
        if iterations >= max_iter {
            for v in &mut x {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let g = gradient(gram, atb, &x);
            let kkt = kkt_from_gradient(&g, &x);
            return Err(NnlsError::NonConvergence { kkt_residual: kkt, iterations, best: x });
        }
        let stalled = if misclassified.len() < fewest_misclassified {
            fewest_misclassified = misclassified.len();
            backup = BACKUP_EXCHANGES;
            false
        } else if backup > 0 {
            backup -= 1;
            false
        } else {
            true
        };
        if stalled {
            descent_step(gram, atb, &mut free, &mut x, feas_eps, &mut iterations, max_iter)?;
            let g = gradient(gram, atb, &x);
            for i in 0..q {
                y[i] = if free[i] { 0.0 } else { g[i] };
            }
            continue;
        }
        iterations += 1;
        let truncated = cap_additions(&mut misclassified, &free, &y, max_free);
        for &i in &misclassified {
            free[i] = !free[i];
        }
        let f: Vec<usize> = (0..q).filter(|&i| free[i]).collect();
        if truncated && f.len() > largest_passive {
            // A deliberately partial exchange that still grew the passive
            // set past its high-water mark is expansion, not stalling, so
            // the block budget it spent is refunded. Truncated exchanges
            // that fail to reach new ground — churn against the row-count
            // ceiling — drain the budget like any other stalled exchange.
            backup = BACKUP_EXCHANGES;
        }
        largest_passive = largest_passive.max(f.len());
        let xf = solve_principal(gram, atb, &f)?;
        x.iter_mut().for_each(|v| *v = 0.0);
        for (pos, &i) in f.iter().enumerate() {
            x[i] = xf[pos];
        }
        for i in 0..q {
            y[i] = if free[i] {
                0.0
            } else {
                let mut acc = -atb[i];
                for (pos, &j) in f.iter().enumerate() {
                    acc += gram[(i, j)] * xf[pos];
                }
                acc
            };
        }
    }
}

fn check_inputs(design: &Matrix, rows: usize) -> Result<(), NnlsError> {
    if design.rows() != rows {
        return Err(NnlsError::DimensionMismatch(format!(
            "design has {} rows, target has {rows}",
            design.rows()
        )));
    }
    if !design.is_finite() {
        return Err(NnlsError::NonFinite);
    }
    Ok(())
}

/// Minimizes ||design·x − target||² over x ≥ 0 and certifies the result.
pub fn nnls_solve(
    design: &Matrix,
    target: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, NnlsDiagnostics), NnlsError> {
    check_inputs(design, target.len())?;
    if target.iter().any(|v| !v.is_finite()) {
        return Err(NnlsError::NonFinite);
    }
    let gram = design.transpose().matmul(design)?;
    let atb = design_t_vec(design, target);
    let btb = dot(target, target);
    solve_with_gram(&gram, &atb, btb, tol, max_iter, design.rows())
}

/// Solves one NNLS problem per column of `targets` against a shared design;
/// returns the q × r solution matrix and per-column diagnostics. Columns are
/// independent and solved in parallel.
pub fn nnls_multi(
    design: &Matrix,
    targets: &Matrix,
    tol: f64,
    max_iter: usize,
) -> Result<(Matrix, Vec<NnlsDiagnostics>), NnlsError> {
    check_inputs(design, targets.rows())?;
    if !targets.is_finite() {
        return Err(NnlsError::NonFinite);
    }
    let gram = design.transpose().matmul(design)?;
    let results: Vec<Result<(Vec<f64>, NnlsDiagnostics), NnlsError>> = (0..targets.cols())
        .into_par_iter()
        .map(|j| {
            let target = targets.col_vec(j);
            let atb = design_t_vec(design, &target);
            let btb = dot(&target, &target);
            solve_with_gram(&gram, &atb, btb, tol, max_iter, design.rows())
        })
        .collect();
    let mut solution = Matrix::zeros(design.cols(), targets.cols());
    let mut diagnostics = Vec::with_capacity(targets.cols());
    for (j, res) in results.into_iter().enumerate() {
        let (x, diag) =
            res.map_err(|e| NnlsError::Column { column: j, source: Box::new(e) })?;
        for (i, v) in x.into_iter().enumerate() {
            solution[(i, j)] = v;
        }
        diagnostics.push(diag);
    }
    Ok((solution, diagnostics))
}

/// Maximum KKT violation of a feasible point: gradients must vanish on
/// positive entries and be non-negative on zero entries.
pub fn kkt_residual(design: &Matrix, target: &[f64], x: &[f64]) -> Result<f64, NnlsError> {
    check_inputs(design, target.len())?;
    if let Some(i) = x.iter().position(|&v| v < 0.0) {
        return Err(NnlsError::NegativeEntry(i));
    }
    let residual: Vec<f64> = design
        .matvec(x)?
        .iter()
        .zip(target)
        .map(|(ax, t)| ax - t)
        .collect();
    let g = design_t_vec(design, &residual);
    Ok(kkt_from_gradient(&g, x))
}

/// Slow projected-gradient reference solver, kept for cross-checking the
/// pivoting solver. Runs a fixed iteration budget with a diminishing step and
/// returns the final objective. Not intended for production fits.
pub fn projected_gradient(design: &Matrix, target: &[f64], iters: usize) -> f64 {
    let gram = design.transpose().matmul(design).expect("square gram");
    let atb = design_t_vec(design, target);
    let q = atb.len();
    let lipschitz = (0..q).map(|i| gram[(i, i)]).sum::<f64>().max(1e-12);
    let mut x = vec![0.0f64; q];
    let ramp = (iters / 10).max(1) as f64;
    for t in 0..iters {
        let g = gradient(&gram, &atb, &x);
        let step = 1.0 / (lipschitz * (1.0 + t as f64 / ramp));
        for i in 0..q {
            x[i] = (x[i] - step * g[i]).max(0.0);
        }
    }
    let residual: Vec<f64> =
        design.matvec(&x).unwrap().iter().zip(target).map(|(ax, t)| ax - t).collect();
    dot(&residual, &residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_design(rng: &mut ChaCha20Rng, n: usize, q: usize) -> Matrix {
        let data = (0..n * q).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(n, q, data)
    }

    fn direct_objective(design: &Matrix, target: &[f64], x: &[f64]) -> f64 {
        let r: Vec<f64> =
            design.matvec(x).unwrap().iter().zip(target).map(|(a, t)| a - t).collect();
        dot(&r, &r)
    }

    #[test]
    fn solves_orthant_projection() {
        let design = Matrix::identity(2);
        let (x, diag) = nnls_solve(&design, &[3.0, -1.0], DEFAULT_TOL, 10).unwrap();
        assert_eq!(x, vec![3.0, 0.0]);
        assert!(diag.kkt_residual <= DEFAULT_TOL);
        assert_eq!(diag.active_set_size, 1);
    }

    #[test]
    fn pins_violating_coordinate() {
        // Unconstrained optimum is [1.5, -1.5]; with x2 pinned at zero the
        // first coordinate solves to 6/5.
        let design = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0]]);
        let (x, diag) = nnls_solve(&design, &[0.0, 3.0], DEFAULT_TOL, 10).unwrap();
        assert!((x[0] - 1.2).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
        assert!(diag.kkt_residual <= DEFAULT_TOL);
    }

    #[test]
    fn recovers_feasible_exact_fit() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let design = random_design(&mut rng, 10, 4);
        let c = [0.5, 0.0, 1.2, 2.0];
        let target = design.matvec(&c).unwrap();
        let (x, diag) = nnls_solve(&design, &target, DEFAULT_TOL, 20).unwrap();
        for (xi, ci) in x.iter().zip(&c) {
            assert!((xi - ci).abs() < 1e-8);
        }
        assert!(diag.objective <= 1e-10);
    }

    #[test]
    fn multi_repeats_identical_columns() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let design = random_design(&mut rng, 8, 3);
        let col: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0)).collect();
        let mut targets = Matrix::zeros(8, 2);
        for i in 0..8 {
            targets[(i, 0)] = col[i];
            targets[(i, 1)] = col[i];
        }
        let (sol, _) = nnls_multi(&design, &targets, DEFAULT_TOL, 15).unwrap();
        for i in 0..3 {
            assert_eq!(sol[(i, 0)].to_bits(), sol[(i, 1)].to_bits());
        }
    }

    #[test]
    fn multi_zero_targets_give_zero_solution() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let design = random_design(&mut rng, 6, 4);
        let (sol, diags) = nnls_multi(&design, &Matrix::zeros(6, 3), DEFAULT_TOL, 20).unwrap();
        assert!(sol.data().iter().all(|&v| v == 0.0));
        assert!(diags.iter().all(|d| d.objective == 0.0));
    }

    #[test]
    fn multi_matches_per_column_solves_exactly() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let design = random_design(&mut rng, 30, 10);
        let targets = random_design(&mut rng, 30, 4);
        let (sol, diags) = nnls_multi(&design, &targets, DEFAULT_TOL, 50).unwrap();
        for j in 0..4 {
            let (x, d) = nnls_solve(&design, &targets.col_vec(j), DEFAULT_TOL, 50).unwrap();
            assert_eq!(d.objective.to_bits(), diags[j].objective.to_bits());
            for i in 0..10 {
                assert_eq!(sol[(i, j)].to_bits(), x[i].to_bits());
            }
        }
    }

    #[test]
    fn kkt_residual_examples() {
        let design = Matrix::identity(2);
        let (x, _) = nnls_solve(&design, &[3.0, -1.0], DEFAULT_TOL, 10).unwrap();
        assert!(kkt_residual(&design, &[3.0, -1.0], &x).unwrap() <= 1e-9);
        // At x = 0 the gradient is [-3, 1]: the first coordinate wants in.
        assert_eq!(kkt_residual(&design, &[3.0, -1.0], &[0.0, 0.0]).unwrap(), 3.0);
        assert_eq!(kkt_residual(&design, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            kkt_residual(&design, &[1.0, 1.0], &[-0.1, 0.0]),
            Err(NnlsError::NegativeEntry(0))
        ));
    }

    #[test]
    fn beats_projected_gradient_reference() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        for round in 0..20 {
            let n = rng.random_range(2..=12);
            let q = rng.random_range(1..=4);
            let design = random_design(&mut rng, n, q);
            let target: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (x, diag) =
                nnls_solve(&design, &target, DEFAULT_TOL, default_max_iter(q)).unwrap();
            assert!(x.iter().all(|&v| v >= 0.0), "round {round}: negative entry");
            assert!(diag.kkt_residual <= DEFAULT_TOL, "round {round}");
            let oracle = projected_gradient(&design, &target, 200_000);
            assert!(
                diag.objective <= oracle + 1e-6,
                "round {round}: solver {} vs oracle {oracle}",
                diag.objective
            );
        }
    }

    #[test]
    fn fat_rank_deficient_designs_converge() {
        // Binary designs with far more columns than rows, salted with exact
        // duplicates: every principal submatrix larger than the row count is
        // singular, which is the regime the block-growth cap exists for.
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for round in 0..10 {
            let n = 12;
            let q = 40;
            let mut design = Matrix::zeros(n, q);
            for i in 0..n {
                for j in 0..q {
                    if rng.random_range(0..10) < 4 {
                        design[(i, j)] = 1.0;
                    }
                }
            }
            for _ in 0..8 {
                let src = rng.random_range(0..q);
                let dst = rng.random_range(0..q);
                for i in 0..n {
                    design[(i, dst)] = design[(i, src)];
                }
            }
            let target: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
            let (x, diag) =
                nnls_solve(&design, &target, DEFAULT_TOL, default_max_iter(q)).unwrap();
            assert!(x.iter().all(|&v| v >= 0.0), "round {round}: negative entry");
            assert!(diag.kkt_residual <= DEFAULT_TOL, "round {round}: {}", diag.kkt_residual);
            let oracle = projected_gradient(&design, &target, 200_000);
            assert!(
                direct_objective(&design, &target, &x) <= oracle + 1e-6,
                "round {round}: solver {} vs oracle {oracle}",
                diag.objective
            );
        }
    }

    #[test]
    fn ceiling_pressed_instances_converge() {
        // Inconsistent targets over heavily duplicated binary designs drive
        // the optimal support up against the row count, where capped block
        // exchanges degenerate into add-one-drop-many churn and only the
        // line-searched descent passes make progress.
        let mut rng = ChaCha20Rng::seed_from_u64(4011);
        for round in 0..3 {
            let n = 36;
            let q = 320;
            let mut design = Matrix::zeros(n, q);
            for i in 0..n {
                for j in 0..q {
                    if rng.random_range(0..100) < 35 {
                        design[(i, j)] = 1.0;
                    }
                }
            }
            for _ in 0..60 {
                let src = rng.random_range(0..q);
                let dst = rng.random_range(0..q);
                for i in 0..n {
                    design[(i, dst)] = design[(i, src)];
                }
            }
            // A dense positive mixture pulled back outside the cone by a
            // negative component and jitter, so the residual cannot reach
            // zero and the active face is large.
            let mut target = vec![0.0f64; n];
            for _ in 0..25 {
                let j = rng.random_range(0..q);
                let w = rng.random_range(0.1..1.0);
                for i in 0..n {
                    target[i] += w * design[(i, j)];
                }
            }
            for t in &mut target {
                *t -= rng.random_range(0.0..1.5);
            }
            let (x, diag) =
                nnls_solve(&design, &target, DEFAULT_TOL, default_max_iter(q)).unwrap();
            assert!(x.iter().all(|&v| v >= 0.0), "round {round}: negative entry");
            assert!(diag.kkt_residual <= DEFAULT_TOL, "round {round}: {}", diag.kkt_residual);
            let oracle = projected_gradient(&design, &target, 100_000);
            assert!(
                direct_objective(&design, &target, &x) <= oracle + 1e-6,
                "round {round}: solver {} vs oracle {oracle}",
                diag.objective
            );
        }
    }

    #[test]
    fn zeroed_design_column_cannot_improve_fit() {
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        for _ in 0..10 {
            let design = random_design(&mut rng, 9, 4);
            let target: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, full) = nnls_solve(&design, &target, DEFAULT_TOL, 30).unwrap();
            let drop = rng.random_range(0..4);
            let mut restricted = design.clone();
            for i in 0..9 {
                restricted[(i, drop)] = 0.0;
            }
            let (_, less) = nnls_solve(&restricted, &target, DEFAULT_TOL, 30).unwrap();
            assert!(less.objective >= full.objective - 1e-12);
        }
    }

    #[test]
    fn solution_scales_with_target() {
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let design = random_design(&mut rng, 10, 5);
        let target: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = target.iter().map(|v| v * 7.5).collect();
        let (x1, _) = nnls_solve(&design, &target, DEFAULT_TOL, 30).unwrap();
        let (x2, _) = nnls_solve(&design, &scaled, DEFAULT_TOL, 30).unwrap();
        for (a, b) in x1.iter().zip(&x2) {
            assert!((b - 7.5 * a).abs() <= 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn random_feasible_points_never_beat_solver() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let design = random_design(&mut rng, 8, 4);
        let target: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (x, diag) = nnls_solve(&design, &target, DEFAULT_TOL, 30).unwrap();
        assert!((direct_objective(&design, &target, &x) - diag.objective).abs() < 1e-9);
        for _ in 0..200 {
            let probe: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
            assert!(direct_objective(&design, &target, &probe) >= diag.objective - 1e-9);
        }
    }

    #[test]
    fn duplicate_columns_are_handled() {
        // Identical binary columns make the Gram singular; the ridge path
        // must still produce a certified solution.
        let design = Matrix::from_rows(&[
            vec![1.0, 1.0, 0.0],
            vec![1.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ]);
        let target = [2.0, 3.0, 1.0, 2.0];
        let (x, diag) = nnls_solve(&design, &target, DEFAULT_TOL, 15).unwrap();
        assert!(x.iter().all(|&v| v >= 0.0));
        assert!(diag.kkt_residual <= DEFAULT_TOL);
        assert!(diag.objective <= 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let design = Matrix::identity(2);
        assert!(matches!(
            nnls_solve(&design, &[1.0], DEFAULT_TOL, 10),
            Err(NnlsError::DimensionMismatch(_))
        ));
        assert!(matches!(
            nnls_solve(&design, &[f64::NAN, 0.0], DEFAULT_TOL, 10),
            Err(NnlsError::NonFinite)
        ));
    }

    #[test]
    fn exhausted_budget_reports_best_iterate() {
        let design = Matrix::identity(2);
        match nnls_solve(&design, &[3.0, -1.0], DEFAULT_TOL, 0) {
            Err(NnlsError::NonConvergence { kkt_residual, iterations: 0, best }) => {
                assert_eq!(best, vec![0.0, 0.0]);
                assert_eq!(kkt_residual, 3.0);
            }
            other => panic!("expected budget exhaustion, got {other:?}"),
        }
    }
}
