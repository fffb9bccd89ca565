//! Geometric quantities of a trained machine: pairwise margins, the
//! margin/penalizer identities, and the minimum enclosing ball of the
//! training images in feature space.
//!
//! Everything here runs in the machine's own feature space — the offset
//! kernel — because that is where the hard-margin constraints live.

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::model::{alpha_h_alpha, decide, TrainedModel};

/// Default relative tolerance on the enclosing-ball containment gap.
pub const MEB_TOL: f64 = 1e-9;

/// Functional gap attained by the hard-margin constraints: `Q / (Q - 1)`.
pub fn d_base(q: usize) -> Result<f64> {
    if q < 2 {
        return Err(Error::InvalidArgument(format!(
            "margin gap needs at least two categories, got {q}"
        )));
    }
    Ok(q as f64 / (q - 1) as f64)
}

/// Margin data for one unordered category pair `k < l`.
#[derive(Debug, Clone)]
pub struct PairMargin {
    pub k: usize,
    pub l: usize,
    /// Normalized excess gap `(min pair gap - d) / d`, nonnegative.
    pub d_kl: f64,
    /// `||w_k - w_l||` in the training feature space.
    pub w_diff_norm: f64,
    /// Geometric margin `d * (1 + d_kl) / ||w_k - w_l||`.
    pub gamma: f64,
}

/// Four routes to the same number, which must agree on a converged machine:
/// margins, per-class norms, the quadratic form and the coefficient sum.
#[derive(Debug, Clone)]
pub struct ConsistencyChain {
    /// `Q/(Q-1)^2 * sum_{k<l} ((1 + d_kl) / gamma_kl)^2`
    pub lhs_margin_sum: f64,
    /// `sum_k ||w_k||^2`
    pub sum_wk_sq: f64,
    /// `alpha' H alpha`
    pub alpha_h_alpha: f64,
    /// `1/(Q-1) * sum(alpha)`
    pub alpha_sum_term: f64,
}

impl ConsistencyChain {
    /// Largest pairwise relative disagreement among the four values.
    pub fn max_relative_spread(&self) -> f64 {
        let vals = [
            self.lhs_margin_sum,
            self.sum_wk_sq,
            self.alpha_h_alpha,
            self.alpha_sum_term,
        ];
        let mut worst = 0.0_f64;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let denom = 1.0_f64.max(vals[i].abs()).max(vals[j].abs());
                worst = worst.max((vals[i] - vals[j]).abs() / denom);
            }
        }
        worst
    }
}

/// Margins of a machine that classifies its training set without error.
#[derive(Debug, Clone)]
pub struct MarginReport {
    /// Global functional gap: the double minimum over pairs and points.
    pub d: f64,
    /// Per-pair margins, ordered by `(k, l)` with `k < l`.
    pub pairs: Vec<PairMargin>,
    /// `sum_{k<l} ((1 + d_kl) / gamma_kl)^2`, assembled without dividing by
    /// degenerate norms (`(1 + d_kl)/gamma_kl` reduces to `||w_k - w_l||/d`).
    pub margin_sum: f64,
    pub prop3: ConsistencyChain,
}

/// Computes the margin report from exact score differences at training
/// points, through the offset kernel.
pub fn compute_margins(model: &TrainedModel) -> Result<MarginReport> {
    let q = model.q();
    let m = model.m();
    let labels = model.labels();
    let scores = model.training_scores();

    let errors = model.training_errors();
    if errors > 0 {
        return Err(Error::TrainingErrorsPresent { count: errors });
    }

    // Minimum score gap per unordered pair, over points in either category.
    let mut pair_min = vec![f64::INFINITY; q * q];
    for i in 0..m {
        let y = labels[i];
        let row = &scores[i * q..(i + 1) * q];
        for l in 0..q {
            if l != y {
                let gap = row[y] - row[l];
                let (a, b) = if y < l { (y, l) } else { (l, y) };
                let slot = &mut pair_min[a * q + b];
                if gap < *slot {
                    *slot = gap;
                }
            }
        }
    }

    let mut d = f64::INFINITY;
    for k in 0..q {
        for l in (k + 1)..q {
            let gap = pair_min[k * q + l];
            if gap.is_infinite() {
                return Err(Error::EmptyClassPair { k, l });
            }
            d = d.min(gap);
        }
    }
    if !(d > 0.0) {
        // Unreachable after the error-count check; kept as a guard for the
        // Definition's precondition.
        return Err(Error::TrainingErrorsPresent { count: errors });
    }

    let alpha = model.alpha();
    let gram = model.gram();
    let mut pairs = Vec::with_capacity(q * (q - 1) / 2);
    let mut margin_sum = 0.0;
    for k in 0..q {
        for l in (k + 1)..q {
            let gap = pair_min[k * q + l];
            let d_kl = (gap - d) / d;
            // ||w_k - w_l||^2 = u' G u with u_i = alpha_{il} - alpha_{ik}.
            let u: Vec<f64> = (0..m).map(|i| alpha[i * q + l] - alpha[i * q + k]).collect();
            let norm_sq = gram.quadratic_form(&u).max(0.0);
            let w_diff_norm = norm_sq.sqrt();
            let gamma = d * (1.0 + d_kl) / w_diff_norm;
            margin_sum += norm_sq / (d * d);
            pairs.push(PairMargin { k, l, d_kl, w_diff_norm, gamma });
        }
    }

    let (_, sum_wk_sq) = model.wk_norms();
    let quad = alpha_h_alpha(model);
    let alpha_sum: f64 = alpha.iter().sum();
    let prop3 = ConsistencyChain {
        lhs_margin_sum: q as f64 / ((q - 1) as f64 * (q - 1) as f64) * margin_sum,
        sum_wk_sq,
        alpha_h_alpha: quad,
        alpha_sum_term: alpha_sum / (q - 1) as f64,
    };

    Ok(MarginReport { d, pairs, margin_sum, prop3 })
}

/// Both sides of the pairwise-norms identity
/// `sum_{k<l} ||w_k - w_l||^2 = Q * sum_k ||w_k||^2`, computed independently:
/// pairwise expansions on the left, the quadratic form on the right.
pub fn sumwl_check(model: &TrainedModel) -> (f64, f64) {
    let q = model.q();
    let m = model.m();
    let alpha = model.alpha();
    let gram = model.gram();
    let mut lhs = 0.0;
    for k in 0..q {
        for l in (k + 1)..q {
            let u: Vec<f64> = (0..m).map(|i| alpha[i * q + l] - alpha[i * q + k]).collect();
            lhs += gram.quadratic_form(&u);
        }
    }
    let rhs = q as f64 * alpha_h_alpha(model);
    (lhs, rhs)
}

/// Minimum enclosing ball of the feature images described by a Gram matrix.
#[derive(Debug, Clone)]
pub struct BallResult {
    /// Simplex weights of the center `c = sum_i beta_i Phi(x_i)`.
    pub weights: Vec<f64>,
    pub radius_sq: f64,
    pub radius: f64,
    pub diameter: f64,
    pub diameter_sq: f64,
    /// `max_j dist^2(x_j, center) - radius_sq` at termination; at most
    /// `tol * (1 + radius_sq)` on convergence.
    pub containment_gap: f64,
    pub iterations: usize,
}

/// Solves `max_beta sum_i beta_i g_ii - beta' G beta` over the probability
/// simplex by Frank-Wolfe steps with away steps and exact line search,
/// starting from uniform weights. The Frank-Wolfe gap is exactly the
/// containment gap, so the stopping rule is the certificate itself.
pub fn min_enclosing_ball(gram: &GramMatrix, tol: f64) -> Result<BallResult> {
    let m = gram.order();
    if m == 0 {
        return Err(Error::EmptyInput("enclosing ball needs at least one point"));
    }
    let diag: Vec<f64> = (0..m).map(|i| gram.at(i, i)).collect();
    let scale = diag.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    let neg_tol = 1e-10 * scale;

    let mut beta = vec![1.0 / m as f64; m];
    // g_beta = G * beta and the quadratic form, maintained incrementally.
    let mut g_beta = vec![0.0; m];
    let mut quad = 0.0;
    let recompute = |beta: &[f64], g_beta: &mut [f64], quad: &mut f64| {
        for i in 0..m {
            let row = gram.row(i);
            let mut s = 0.0;
            for j in 0..m {
                s += row[j] * beta[j];
            }
            g_beta[i] = s;
        }
        *quad = beta.iter().zip(g_beta.iter()).map(|(b, g)| b * g).sum();
    };
    recompute(&beta, &mut g_beta, &mut quad);

    let max_iter = 200_000usize;
    let mut iterations = 0;
    for iter in 0..max_iter {
        iterations = iter;
        if iter > 0 && iter % 256 == 0 {
            recompute(&beta, &mut g_beta, &mut quad);
        }
        // grad_j = g_jj - 2 (G beta)_j; f = <beta, diag> - quad.
        let f: f64 = beta.iter().zip(&diag).map(|(b, d)| b * d).sum::<f64>() - quad;
        let mut fw = 0usize;
        let mut fw_val = f64::NEG_INFINITY;
        let mut grad_dot_beta = 0.0;
        for j in 0..m {
            let grad_j = diag[j] - 2.0 * g_beta[j];
            if grad_j > fw_val {
                fw_val = grad_j;
                fw = j;
            }
            grad_dot_beta += grad_j * beta[j];
        }
        let fw_gap = fw_val - grad_dot_beta;
        if fw_gap <= tol * (1.0 + f.max(0.0)) {
            break;
        }

        let mut away = usize::MAX;
        let mut away_val = f64::INFINITY;
        for j in 0..m {
            if beta[j] > 0.0 {
                let grad_j = diag[j] - 2.0 * g_beta[j];
                if grad_j < away_val {
                    away_val = grad_j;
                    away = j;
                }
            }
        }
        let away_gap = grad_dot_beta - away_val;

        if fw_gap >= away_gap {
            // Toward vertex fw: beta <- (1-t) beta + t e_fw.
            let slope = fw_gap;
            let curvature = gram.at(fw, fw) - 2.0 * g_beta[fw] + quad;
            if curvature < -neg_tol {
                return Err(Error::NotPositiveSemidefinite(curvature));
            }
            let t_max = 1.0;
            let t = if curvature > 0.0 { (slope / (2.0 * curvature)).min(t_max) } else { t_max };
            let g_beta_fw = g_beta[fw];
            for j in 0..m {
                beta[j] *= 1.0 - t;
                g_beta[j] = (1.0 - t) * g_beta[j] + t * gram.at(j, fw);
            }
            beta[fw] += t;
            quad = (1.0 - t) * (1.0 - t) * quad
                + 2.0 * t * (1.0 - t) * g_beta_fw
                + t * t * gram.at(fw, fw);
        } else {
            // Away from vertex `away`: beta <- (1+t) beta - t e_away.
            let ba = beta[away];
            if ba >= 1.0 {
                break; // single-vertex support; nothing to move away from
            }
            let slope = away_gap;
            let curvature = quad - 2.0 * g_beta[away] + gram.at(away, away);
            if curvature < -neg_tol {
                return Err(Error::NotPositiveSemidefinite(curvature));
            }
            let t_max = ba / (1.0 - ba);
            let t = if curvature > 0.0 { (slope / (2.0 * curvature)).min(t_max) } else { t_max };
            let g_beta_away = g_beta[away];
            for j in 0..m {
                beta[j] *= 1.0 + t;
                g_beta[j] = (1.0 + t) * g_beta[j] - t * gram.at(j, away);
            }
            beta[away] -= t;
            if t >= t_max * (1.0 - 1e-12) {
                beta[away] = 0.0; // drop step
            }
            quad = (1.0 + t) * (1.0 + t) * quad
                - 2.0 * t * (1.0 + t) * g_beta_away
                + t * t * gram.at(away, away);
        }
    }

    // Exact final certificate, free of incremental drift.
    recompute(&beta, &mut g_beta, &mut quad);
    let f: f64 = beta.iter().zip(&diag).map(|(b, d)| b * d).sum::<f64>() - quad;
    let radius_sq = f.max(0.0);
    let mut max_dist = 0.0_f64;
    for j in 0..m {
        let dist = diag[j] - 2.0 * g_beta[j] + quad;
        if dist < -neg_tol {
            return Err(Error::NotPositiveSemidefinite(dist));
        }
        max_dist = max_dist.max(dist);
    }
    let radius = radius_sq.sqrt();
    Ok(BallResult {
        weights: beta,
        radius_sq,
        radius,
        diameter: 2.0 * radius,
        diameter_sq: 4.0 * radius_sq,
        containment_gap: max_dist - radius_sq,
        iterations,
    })
}

/// Ball restricted to a subset of points (used to compare the full-set ball
/// against a support-vector-only ball).
pub fn min_enclosing_ball_of(gram: &GramMatrix, indices: &[usize], tol: f64) -> Result<BallResult> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("enclosing ball needs at least one point"));
    }
    min_enclosing_ball(&gram.submatrix(indices), tol)
}

/// Classification check used by margin preconditions; exposed for tests.
pub fn classifies_training_set(model: &TrainedModel) -> bool {
    let q = model.q();
    let scores = model.training_scores();
    model
        .labels()
        .iter()
        .enumerate()
        .all(|(i, &y)| decide(&scores[i * q..(i + 1) * q]) == Some(y))
}
