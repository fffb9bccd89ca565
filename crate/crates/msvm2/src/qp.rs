//! Structured convex QP behind training: maximize
//! `J(a) = -1/2 a'Ha + 1/(Q-1) * sum(a)` over nonnegative `a` with the
//! per-example dummy coordinate pinned to zero and the `Q` coupling
//! constraints that force every per-category column sum of `a` to be equal.
//!
//! `H` has general term `(delta_{kl} - 1/Q) * gram[i][j]` and is never
//! materialized: products use the factored form
//! `(Ha)_{ik} = sum_j gram[i][j] * (a_{jk} - mean_l a_{jl})`, which costs
//! `O(m^2 Q)`.
//!
//! The solver is a feasible-point ascent method: the gradient is projected
//! onto the subspace of directions with equal column sums and zero components
//! at bounds that would be violated (the projection has a closed form, one
//! scalar correction per category), the step is an exact line search along
//! the direction, and consecutive projected gradients are combined into
//! conjugate directions while the working face does not change. Iterates stay
//! feasible throughout; every run is deterministic.

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::model;

/// The dual training problem: category count, labels and an already-offset
/// Gram matrix.
#[derive(Debug, Clone)]
pub struct DualProblem {
    q: usize,
    labels: Vec<usize>,
    gram: GramMatrix,
}

impl DualProblem {
    pub fn new(q: usize, labels: Vec<usize>, gram: GramMatrix) -> Result<Self> {
        if q < 2 {
            return Err(Error::InvalidArgument(format!(
                "category count must be at least 2, got {q}"
            )));
        }
        if labels.len() != gram.order() {
            return Err(Error::InvalidArgument(format!(
                "label count {} does not match gram order {}",
                labels.len(),
                gram.order()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= q) {
            return Err(Error::InvalidArgument(format!(
                "label index {bad} out of range for {q} categories"
            )));
        }
        Ok(DualProblem { q, labels, gram })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// Total variable count `Q * m`.
    pub fn len(&self) -> usize {
        self.q * self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Factored Hessian-vector product `Ha`.
    pub fn h_product(&self, a: &[f64]) -> Vec<f64> {
        h_product(&self.gram, self.q, a)
    }
}

/// `Hx` through the factored form; never builds the dense `Qm x Qm` matrix.
pub(crate) fn h_product(gram: &GramMatrix, q: usize, x: &[f64]) -> Vec<f64> {
    let m = gram.order();
    debug_assert_eq!(x.len(), m * q);
    let inv_q = 1.0 / q as f64;
    let mut centered = vec![0.0; m * q];
    for i in 0..m {
        let row = &x[i * q..(i + 1) * q];
        let mean = row.iter().sum::<f64>() * inv_q;
        for k in 0..q {
            centered[i * q + k] = row[k] - mean;
        }
    }
    let mut out = vec![0.0; m * q];
    for i in 0..m {
        let grow = gram.row(i);
        let (lo, hi) = (i * q, (i + 1) * q);
        for j in 0..m {
            let gij = grow[j];
            if gij != 0.0 {
                let crow = &centered[j * q..(j + 1) * q];
                for (o, c) in out[lo..hi].iter_mut().zip(crow) {
                    *o += gij * c;
                }
            }
        }
    }
    out
}

/// Exact dual objective `-1/2 a'Ha + 1/(Q-1) sum(a)`.
pub fn dual_objective(problem: &DualProblem, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != problem.len() {
        return Err(Error::InvalidArgument(format!(
            "alpha length {} does not match Qm = {}",
            alpha.len(),
            problem.len()
        )));
    }
    let ha = problem.h_product(alpha);
    let quad = dot(alpha, &ha);
    let linear = alpha.iter().sum::<f64>();
    Ok(-0.5 * quad + linear / (problem.q - 1) as f64)
}

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Stationarity tolerance, relative to the gradient scale `1/(Q-1)`.
    pub tol: f64,
    /// Iteration cap; `None` means `100 * Q * m`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iter: None }
    }
}

/// Solution of the dual problem with its optimality certificates.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// `Q*m` nonnegative coefficients, row-major per point: `alpha[i*Q + k]`.
    pub alpha: Vec<f64>,
    /// Dual objective at `alpha`.
    pub objective: f64,
    /// Largest violation of stationarity and bound optimality, absolute.
    pub kkt_residual: f64,
    /// Line-search iterations performed.
    pub iterations: usize,
    /// False only when the iteration cap was hit before any stopping rule.
    pub converged: bool,
}

/// Per-coordinate state of the feasible-direction projection.
struct Projection {
    /// Projected direction; zero at pinned and clamped coordinates.
    direction: Vec<f64>,
    /// Coordinates free to move (neither pinned nor clamped at their bound).
    free: Vec<bool>,
    /// Largest inward pull among clamped coordinates (bound multiplier check).
    bound_residual: f64,
    /// Infinity norm of the projected direction over free coordinates.
    stationarity: f64,
}

/// Projects `g` onto feasible directions at `alpha`: equal column sums, zero
/// at pinned coordinates, and zero at any bound coordinate the projection
/// would push negative. Clamping repeats until stable; each pass solves the
/// equality part in closed form (one correction per category).
fn project(g: &[f64], alpha: &[f64], labels: &[usize], q: usize) -> Projection {
    let m = labels.len();
    let mut free = vec![false; m * q];
    for (i, &y) in labels.iter().enumerate() {
        for k in 0..q {
            free[i * q + k] = k != y;
        }
    }
    let mut theta = vec![0.0; q];
    let mut direction = vec![0.0; m * q];
    loop {
        let mut counts = vec![0usize; q];
        let mut sums = vec![0.0; q];
        for i in 0..m {
            for k in 0..q {
                if free[i * q + k] {
                    counts[k] += 1;
                    sums[k] += g[i * q + k];
                }
            }
        }
        // Equal column sums for the direction force a common target t:
        // colsum_k(d) = sums_k - counts_k * theta_k = t. A category with no
        // free coordinate has colsum 0, which pins t to 0.
        let tau = if counts.iter().all(|&n| n > 0) {
            let num: f64 = (0..q).map(|k| sums[k] / counts[k] as f64).sum();
            let den: f64 = (0..q).map(|k| 1.0 / counts[k] as f64).sum();
            num / den
        } else {
            0.0
        };
        for k in 0..q {
            theta[k] = if counts[k] > 0 { (sums[k] - tau) / counts[k] as f64 } else { 0.0 };
        }
        let mut clamped_any = false;
        for i in 0..m {
            for k in 0..q {
                let idx = i * q + k;
                if free[idx] {
                    let d = g[idx] - theta[k];
                    if alpha[idx] == 0.0 && d < 0.0 {
                        free[idx] = false;
                        clamped_any = true;
                        direction[idx] = 0.0;
                    } else {
                        direction[idx] = d;
                    }
                } else {
                    direction[idx] = 0.0;
                }
            }
        }
        if !clamped_any {
            break;
        }
    }
    let mut stationarity = 0.0_f64;
    let mut bound_residual = 0.0_f64;
    for (i, &y) in labels.iter().enumerate() {
        for k in 0..q {
            let idx = i * q + k;
            if k == y {
                continue;
            }
            if free[idx] {
                stationarity = stationarity.max(direction[idx].abs());
            } else {
                // Clamped at zero: optimal only if the corrected gradient
                // does not pull inward.
                bound_residual = bound_residual.max(g[idx] - theta[k]);
            }
        }
    }
    Projection {
        direction,
        free,
        bound_residual: bound_residual.max(0.0),
        stationarity,
    }
}

/// Solves the dual by monotone feasible ascent with conjugate directions.
///
/// Starts at `alpha = 0` (always feasible), keeps every iterate feasible,
/// and stops when the projected-gradient residual drops below
/// `tol / (Q - 1)` or the objective stalls at relative changes below 1e-14
/// over ten iterations. Hitting the iteration cap returns the best iterate
/// flagged as unconverged.
pub fn solve_dual(problem: &DualProblem, options: &SolverOptions) -> Result<DualSolution> {
    let q = problem.q;
    let m = problem.m();
    let n = m * q;
    let labels = &problem.labels;
    let tol_abs = options.tol / (q - 1) as f64;
    let max_iter = options.max_iter.unwrap_or(100 * n);

    let gram_scale = (0..m).map(|i| problem.gram.at(i, i)).fold(1.0_f64, f64::max);
    let grad_const = 1.0 / (q - 1) as f64;

    let mut alpha = vec![0.0; n];
    let mut g = vec![0.0; n];
    for (i, &y) in labels.iter().enumerate() {
        for k in 0..q {
            g[i * q + k] = if k == y { 0.0 } else { grad_const };
        }
    }
    let mut objective = 0.0;

    let mut prev_pg: Vec<f64> = Vec::new();
    let mut prev_pg_norm_sq = 0.0;
    let mut prev_dir: Vec<f64> = Vec::new();
    let mut prev_free: Vec<bool> = Vec::new();

    // Ring buffer of recent objective values for the stall rule.
    const STALL_WINDOW: usize = 10;
    let mut recent = std::collections::VecDeque::with_capacity(STALL_WINDOW + 1);

    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..max_iter {
        if iter > 0 && iter % 64 == 0 {
            // Kill incremental round-off drift.
            let ha = problem.h_product(&alpha);
            for (i, &y) in labels.iter().enumerate() {
                for k in 0..q {
                    let idx = i * q + k;
                    g[idx] = if k == y { 0.0 } else { grad_const - ha[idx] };
                }
            }
            objective = -0.5 * dot(&alpha, &ha) + grad_const * alpha.iter().sum::<f64>();
        }

        let proj = project(&g, &alpha, labels, q);
        if proj.stationarity.max(proj.bound_residual) <= tol_abs {
            converged = true;
            iterations = iter;
            break;
        }

        let pg = proj.direction;
        let pg_norm_sq = dot(&pg, &pg);

        // Conjugate direction while the working face is unchanged.
        let mut dir = pg.clone();
        if !prev_free.is_empty() && prev_free == proj.free && prev_pg_norm_sq > 0.0 {
            let mut beta = 0.0;
            for idx in 0..n {
                beta += pg[idx] * (pg[idx] - prev_pg[idx]);
            }
            beta = (beta / prev_pg_norm_sq).max(0.0);
            if beta > 0.0 {
                let mut ok = true;
                for idx in 0..n {
                    dir[idx] = pg[idx] + beta * prev_dir[idx];
                    if alpha[idx] == 0.0 && dir[idx] < 0.0 {
                        ok = false;
                    }
                }
                if !ok || dot(&g, &dir) <= 0.0 {
                    dir.copy_from_slice(&pg);
                }
            }
        }

        let hd = problem.h_product(&dir);
        let dhd = dot(&dir, &hd);
        let gd = dot(&g, &dir);
        let dir_norm_sq = dot(&dir, &dir);

        let curvature_floor = 1e-10 * gram_scale * dir_norm_sq;
        if dhd < -curvature_floor {
            return Err(Error::NotPositiveSemidefinite(dhd));
        }

        // Largest feasible step along dir.
        let mut t_max = f64::INFINITY;
        for idx in 0..n {
            if proj.free[idx] && dir[idx] < 0.0 {
                let t = alpha[idx] / (-dir[idx]);
                if t < t_max {
                    t_max = t;
                }
            }
        }

        let t_star = if dhd > curvature_floor { gd / dhd } else { f64::INFINITY };
        let hit_bound = t_max <= t_star;
        let t = if hit_bound { t_max } else { t_star };
        if !t.is_finite() {
            // Feasible ascent ray with vanishing curvature: the dual is
            // unbounded, which for a zero-offset kernel means the hard
            // constraints cannot be met.
            return Err(Error::NotSeparable);
        }

        let prev_objective = objective;
        for idx in 0..n {
            alpha[idx] += t * dir[idx];
            g[idx] -= t * hd[idx];
        }
        objective += t * gd - 0.5 * t * t * dhd;
        debug_assert!(
            objective >= prev_objective - 1e-12 * (1.0 + prev_objective.abs()),
            "ascent failed: {prev_objective} -> {objective}"
        );

        if hit_bound {
            let cutoff = t_max * (1.0 + 1e-12);
            for idx in 0..n {
                if proj.free[idx] && dir[idx] < 0.0 && alpha[idx] / (-dir[idx]) <= cutoff - t_max {
                    alpha[idx] = 0.0;
                }
            }
        }
        // Round-off can leave tiny negative dust; the feasible set excludes it.
        for a in alpha.iter_mut() {
            if *a < 0.0 {
                *a = 0.0;
            }
        }

        recent.push_back(objective);
        if recent.len() > STALL_WINDOW {
            let old = recent.pop_front().unwrap();
            if (objective - old).abs() <= 1e-14 * objective.abs().max(1.0) {
                iterations = iter + 1;
                converged = true;
                break;
            }
        }

        prev_pg = pg;
        prev_pg_norm_sq = pg_norm_sq;
        prev_dir = dir;
        prev_free = proj.free;
        iterations = iter + 1;
    }

    // Report against a freshly computed gradient.
    let ha = problem.h_product(&alpha);
    let mut g_exact = vec![0.0; n];
    for (i, &y) in labels.iter().enumerate() {
        for k in 0..q {
            let idx = i * q + k;
            g_exact[idx] = if k == y { 0.0 } else { grad_const - ha[idx] };
        }
    }
    let proj = project(&g_exact, &alpha, labels, q);
    let kkt_residual = proj.stationarity.max(proj.bound_residual);
    let objective = -0.5 * dot(&alpha, &ha) + grad_const * alpha.iter().sum::<f64>();
    if kkt_residual <= tol_abs {
        converged = true;
    }

    Ok(DualSolution { alpha, objective, kkt_residual, iterations, converged })
}

/// Feasibility and optimality residuals of a candidate `alpha`.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// Per-category deviation of the column sum from the common value `S/Q`.
    pub equality_residuals: Vec<f64>,
    /// Smallest coordinate (negative means bound violation).
    pub min_coordinate: f64,
    /// `max_{ik} alpha_{ik} * |h_k(x_i) + 1/(Q-1)|` with scores rebuilt from
    /// `alpha` and recovered biases.
    pub complementary_slackness: f64,
    /// Projected-gradient residual at `alpha`.
    pub stationarity: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.equality_residuals
            .iter()
            .fold(0.0_f64, |acc, r| acc.max(r.abs()))
            .max((-self.min_coordinate).max(0.0))
            .max(self.complementary_slackness)
            .max(self.stationarity)
    }
}

/// Diagnostic residual report for a feasible-shaped `alpha`.
pub fn kkt_report(problem: &DualProblem, alpha: &[f64]) -> Result<KktReport> {
    if alpha.len() != problem.len() {
        return Err(Error::InvalidArgument(format!(
            "alpha length {} does not match Qm = {}",
            alpha.len(),
            problem.len()
        )));
    }
    let q = problem.q;
    let m = problem.m();
    let total: f64 = alpha.iter().sum();
    let target = total / q as f64;
    let mut equality_residuals = vec![0.0; q];
    for k in 0..q {
        let col: f64 = (0..m).map(|i| alpha[i * q + k]).sum();
        equality_residuals[k] = col - target;
    }
    let min_coordinate = alpha.iter().fold(f64::INFINITY, |acc, &a| acc.min(a));

    let grad_const = 1.0 / (q - 1) as f64;
    let ha = problem.h_product(alpha);
    let mut g = vec![0.0; m * q];
    for (i, &y) in problem.labels.iter().enumerate() {
        for k in 0..q {
            let idx = i * q + k;
            g[idx] = if k == y { 0.0 } else { grad_const - ha[idx] };
        }
    }
    let proj = project(&g, alpha, &problem.labels, q);
    let stationarity = proj.stationarity.max(proj.bound_residual);

    // Complementary slackness through the primal scores: h_k(x_i) rebuilt
    // from the expansion coefficients and least-squares biases.
    let scores = model::training_scores_from_alpha(&problem.gram, &problem.labels, q, alpha);
    let mut complementary_slackness = 0.0_f64;
    for i in 0..m {
        for k in 0..q {
            let idx = i * q + k;
            if k != problem.labels[i] {
                let violation = alpha[idx] * (scores[idx] + grad_const).abs();
                complementary_slackness = complementary_slackness.max(violation);
            }
        }
    }

    Ok(KktReport {
        equality_residuals,
        min_coordinate,
        complementary_slackness,
        stationarity,
    })
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        s += a * b;
    }
    s
}
