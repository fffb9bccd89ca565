//! Training orchestration and primal reconstruction: class functions,
//! biases, norms, slacks and the argmax/dummy decision rule.
//!
//! Training builds the Gram matrix with diagonal offset `1/(2C)` (zero for a
//! pure hard-margin machine) and solves the hard-margin dual on it; the soft
//! machine and the hard-margin machine on the modified kernel are the same
//! object. Scores at training points (margins, KKT checks) therefore use the
//! offset kernel, while scores at query points use the base kernel: a query
//! point has no private slack coordinate.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{build_gram, cross_gram, GramMatrix, KernelFamily, KernelSpec};
use crate::qp::{dot, h_product, solve_dual, DualProblem, DualSolution, SolverOptions};

/// Absolute score gap below which an argmax tie is declared and the dummy
/// category assigned.
pub const TIE_TOL: f64 = 1e-12;

/// Support coordinates are those with `alpha > SUPPORT_RATIO * max(alpha)`.
pub const SUPPORT_RATIO: f64 = 1e-7;

/// A trained machine: everything needed to evaluate the class functions.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    kernel: KernelSpec,
    c: Option<f64>,
    train_points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    q: usize,
    category_map: Vec<String>,
    solution: DualSolution,
    biases: Vec<f64>,
    bias_fallback_classes: Vec<usize>,
    dataset_digest: String,
    tol: f64,
    gram: GramMatrix,
}

/// Scores of one query point and the decided category (`None` = dummy).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub label: Option<usize>,
}

impl Prediction {
    /// External name of the decided category, `"*"` for the dummy category.
    pub fn external_label<'a>(&self, model: &'a TrainedModel) -> &'a str {
        match self.label {
            Some(idx) => &model.category_map[idx],
            None => "*",
        }
    }
}

/// Slack variables recovered from the dual solution.
#[derive(Debug, Clone)]
pub struct SlackReport {
    /// `Q*m` values, zero at each example's own category.
    pub xi: Vec<f64>,
    /// Residual of `2C * M xi = alpha` restricted to the range of the
    /// row-centering map `M` (`alpha` itself has nonnegative row sums and
    /// lies off that range; the centered part is the meaningful target).
    pub residual: f64,
}

/// Trains the machine on a dataset.
///
/// `c = Some(v)` trains the quadratic-slack machine through the offset
/// kernel; `c = None` trains the pure hard-margin machine, which fails on
/// data that are not separable in the feature space.
pub fn train(
    dataset: &Dataset,
    family: KernelFamily,
    c: Option<f64>,
    options: &SolverOptions,
) -> Result<TrainedModel> {
    let kernel = match c {
        Some(c) => KernelSpec::soft_margin(family, c)?,
        None => KernelSpec::hard_margin(family)?,
    };
    train_with_spec(dataset, kernel, c, options)
}

/// Trains the hard-margin machine on an explicitly assembled kernel spec.
///
/// Passing a spec with `diagonal_offset = 1/(2C)` and `c = None` trains the
/// same dual as [`train`] with `Some(C)`; the resulting model simply does not
/// know about slack variables.
pub fn train_with_spec(
    dataset: &Dataset,
    kernel: KernelSpec,
    c: Option<f64>,
    options: &SolverOptions,
) -> Result<TrainedModel> {
    let mut seen = vec![false; dataset.q()];
    for &y in dataset.labels() {
        seen[y] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::SingleCategory);
    }
    train_parts(
        dataset.points().to_vec(),
        dataset.labels().to_vec(),
        dataset.q(),
        dataset.category_map().to_vec(),
        dataset.digest().to_string(),
        kernel,
        c,
        options,
    )
}

/// Core trainer used both by [`train`] and by leave-one-out folds, which keep
/// the full category map even when a fold loses a category.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_parts(
    train_points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    q: usize,
    category_map: Vec<String>,
    dataset_digest: String,
    kernel: KernelSpec,
    c: Option<f64>,
    options: &SolverOptions,
) -> Result<TrainedModel> {
    let gram = build_gram(&kernel, &train_points)?;
    let problem = DualProblem::new(q, labels, gram)?;
    let solution = solve_dual(&problem, options)?;
    if !solution.converged {
        return Err(Error::Unconverged {
            iterations: solution.iterations,
            residual: solution.kkt_residual,
        });
    }
    let labels = problem.labels().to_vec();
    let gram = problem.gram().clone();
    let raw = raw_training_scores(&gram, q, &solution.alpha);
    let (biases, bias_fallback_classes) = recover_biases(&raw, &solution.alpha, &labels, q);
    Ok(TrainedModel {
        kernel,
        c,
        train_points,
        labels,
        q,
        category_map,
        solution,
        biases,
        bias_fallback_classes,
        dataset_digest,
        tol: options.tol,
        gram,
    })
}

impl TrainedModel {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn m(&self) -> usize {
        self.train_points.len()
    }

    pub fn dim(&self) -> usize {
        self.train_points[0].len()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn c(&self) -> Option<f64> {
        self.c
    }

    pub fn train_points(&self) -> &[Vec<f64>] {
        &self.train_points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn category_map(&self) -> &[String] {
        &self.category_map
    }

    pub fn solution(&self) -> &DualSolution {
        &self.solution
    }

    pub fn alpha(&self) -> &[f64] {
        &self.solution.alpha
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    /// Categories whose bias had no support equation and was fixed by the
    /// sum-to-zero constraint alone.
    pub fn bias_fallback_classes(&self) -> &[usize] {
        &self.bias_fallback_classes
    }

    pub fn dataset_digest(&self) -> &str {
        &self.dataset_digest
    }

    pub fn solver_tol(&self) -> f64 {
        self.tol
    }

    /// Training Gram matrix (offset kernel), rebuilt on model load.
    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Kernel-expansion coefficients `c_{ik}` with
    /// `w_k = sum_i c_{ik} Phi(x_i)`.
    pub fn expansion_coefficients(&self) -> Vec<f64> {
        expansion_coefficients(&self.solution.alpha, self.q)
    }

    /// Class scores at a query point, through the base kernel.
    pub fn decision_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decision_scores_many(std::slice::from_ref(&x.to_vec()))?.pop().unwrap())
    }

    /// Class scores for a batch of query points.
    pub fn decision_scores_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let cg = cross_gram(&self.kernel, &self.train_points, xs)?;
        let coeff = self.expansion_coefficients();
        let m = self.m();
        let mut all = Vec::with_capacity(xs.len());
        for qi in 0..xs.len() {
            let mut scores = self.biases.clone();
            for i in 0..m {
                let kv = cg.at(i, qi);
                if kv != 0.0 {
                    let crow = &coeff[i * self.q..(i + 1) * self.q];
                    for (s, c) in scores.iter_mut().zip(crow) {
                        *s += kv * c;
                    }
                }
            }
            all.push(scores);
        }
        Ok(all)
    }

    /// Class scores at every training point, through the offset kernel — the
    /// hard-margin machine's own feature space. Row-major `m x Q`.
    pub fn training_scores(&self) -> Vec<f64> {
        let raw = raw_training_scores(&self.gram, self.q, &self.solution.alpha);
        let mut scores = raw;
        for i in 0..self.m() {
            for k in 0..self.q {
                scores[i * self.q + k] += self.biases[k];
            }
        }
        scores
    }

    /// Argmax decision with the dummy category on ties.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let scores = self.decision_scores(x)?;
        let label = decide(&scores);
        Ok(Prediction { scores, label })
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        Ok(self
            .decision_scores_many(xs)?
            .into_iter()
            .map(|scores| {
                let label = decide(&scores);
                Prediction { scores, label }
            })
            .collect())
    }

    /// Per-class squared norms `||w_k||^2` in the training feature space and
    /// their total, which equals `alpha' H alpha`.
    pub fn wk_norms(&self) -> (Vec<f64>, f64) {
        let coeff = self.expansion_coefficients();
        let m = self.m();
        let q = self.q;
        // G * coeff, then column-wise inner products with coeff.
        let mut norms = vec![0.0; q];
        for i in 0..m {
            let grow = self.gram.row(i);
            let mut acc = vec![0.0; q];
            for j in 0..m {
                let gij = grow[j];
                if gij != 0.0 {
                    let crow = &coeff[j * q..(j + 1) * q];
                    for (a, c) in acc.iter_mut().zip(crow) {
                        *a += gij * c;
                    }
                }
            }
            let crow = &coeff[i * q..(i + 1) * q];
            for k in 0..q {
                norms[k] += crow[k] * acc[k];
            }
        }
        let total = norms.iter().sum();
        (norms, total)
    }

    /// Slack variables `xi = alpha / (2C)` of the quadratic-slack machine.
    pub fn slack_vector(&self) -> Result<SlackReport> {
        let c = self.c.ok_or(Error::NoSlacks)?;
        let q = self.q;
        let m = self.m();
        let two_c = 2.0 * c;
        let alpha = &self.solution.alpha;
        let xi: Vec<f64> = alpha.iter().map(|&a| a / two_c).collect();
        // Residual of 2C * (M xi) against the row-centered alpha.
        let mut residual = 0.0_f64;
        for i in 0..m {
            let arow = &alpha[i * q..(i + 1) * q];
            let xrow = &xi[i * q..(i + 1) * q];
            let a_mean = arow.iter().sum::<f64>() / q as f64;
            let x_mean = xrow.iter().sum::<f64>() / q as f64;
            for k in 0..q {
                let lhs = two_c * (xrow[k] - x_mean);
                let rhs = arow[k] - a_mean;
                residual = residual.max((lhs - rhs).abs());
            }
        }
        Ok(SlackReport { xi, residual })
    }

    /// Indices of points carrying at least one support coordinate.
    pub fn support_point_indices(&self) -> Vec<usize> {
        let alpha = &self.solution.alpha;
        let threshold = SUPPORT_RATIO * alpha.iter().cloned().fold(0.0_f64, f64::max);
        (0..self.m())
            .filter(|&i| {
                alpha[i * self.q..(i + 1) * self.q]
                    .iter()
                    .any(|&a| a > threshold)
            })
            .collect()
    }

    /// Count of training points misclassified by the machine in its own
    /// feature space (offset-kernel scores).
    pub fn training_errors(&self) -> usize {
        let scores = self.training_scores();
        (0..self.m())
            .filter(|&i| decide(&scores[i * self.q..(i + 1) * self.q]) != Some(self.labels[i]))
            .count()
    }

    /// Rebuilds a model from persisted parts; used by the model loader.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        kernel: KernelSpec,
        c: Option<f64>,
        train_points: Vec<Vec<f64>>,
        labels: Vec<usize>,
        q: usize,
        category_map: Vec<String>,
        solution: DualSolution,
        biases: Vec<f64>,
        bias_fallback_classes: Vec<usize>,
        dataset_digest: String,
        tol: f64,
    ) -> Result<Self> {
        let gram = build_gram(&kernel, &train_points)?;
        Ok(TrainedModel {
            kernel,
            c,
            train_points,
            labels,
            q,
            category_map,
            solution,
            biases,
            bias_fallback_classes,
            dataset_digest,
            tol,
            gram,
        })
    }
}

/// Argmax with the dummy category on ties within [`TIE_TOL`].
pub fn decide(scores: &[f64]) -> Option<usize> {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    let near_best = scores
        .iter()
        .filter(|&&s| s >= scores[best] - TIE_TOL)
        .count();
    if near_best > 1 {
        None
    } else {
        Some(best)
    }
}

/// `c_{ik} = (1/Q) sum_l alpha_{il} - alpha_{ik}`.
pub(crate) fn expansion_coefficients(alpha: &[f64], q: usize) -> Vec<f64> {
    let m = alpha.len() / q;
    let mut coeff = vec![0.0; alpha.len()];
    for i in 0..m {
        let row = &alpha[i * q..(i + 1) * q];
        let mean = row.iter().sum::<f64>() / q as f64;
        for k in 0..q {
            coeff[i * q + k] = mean - row[k];
        }
    }
    coeff
}

/// Bias-free scores at training points: `<w_k, Phi(x_i)> = -(H alpha)_{ik}`.
pub(crate) fn raw_training_scores(gram: &GramMatrix, q: usize, alpha: &[f64]) -> Vec<f64> {
    let mut raw = h_product(gram, q, alpha);
    for v in raw.iter_mut() {
        *v = -*v;
    }
    raw
}

/// Least-squares bias recovery from support-coordinate equations
/// `b_k = -1/(Q-1) - <w_k, Phi(x_i)>`, under the hard constraint
/// `sum_k b_k = 0`. Classes with no support equation are fixed by the sum
/// constraint alone and reported as fallbacks.
pub(crate) fn recover_biases(
    raw_scores: &[f64],
    alpha: &[f64],
    labels: &[usize],
    q: usize,
) -> (Vec<f64>, Vec<usize>) {
    let m = labels.len();
    let target = -1.0 / (q - 1) as f64;
    let max_alpha = alpha.iter().cloned().fold(0.0_f64, f64::max);
    let threshold = SUPPORT_RATIO * max_alpha;
    let mut counts = vec![0usize; q];
    let mut sums = vec![0.0; q];
    for i in 0..m {
        for k in 0..q {
            let idx = i * q + k;
            if k != labels[i] && alpha[idx] > threshold {
                counts[k] += 1;
                sums[k] += target - raw_scores[idx];
            }
        }
    }
    let fallback: Vec<usize> = (0..q).filter(|&k| counts[k] == 0).collect();
    let mut biases = vec![0.0; q];
    if fallback.is_empty() {
        let means: Vec<f64> = (0..q).map(|k| sums[k] / counts[k] as f64).collect();
        let total: f64 = means.iter().sum();
        let weight: f64 = (0..q).map(|k| 1.0 / counts[k] as f64).sum();
        let correction = -total / weight;
        for k in 0..q {
            biases[k] = means[k] + correction / counts[k] as f64;
        }
    } else {
        let mut total = 0.0;
        for k in 0..q {
            if counts[k] > 0 {
                biases[k] = sums[k] / counts[k] as f64;
                total += biases[k];
            }
        }
        let share = -total / fallback.len() as f64;
        for &k in &fallback {
            biases[k] = share;
        }
    }
    (biases, fallback)
}

/// Training scores (with biases) straight from a dual iterate; diagnostic
/// path used by the KKT report.
pub(crate) fn training_scores_from_alpha(
    gram: &GramMatrix,
    labels: &[usize],
    q: usize,
    alpha: &[f64],
) -> Vec<f64> {
    let raw = raw_training_scores(gram, q, alpha);
    let (biases, _) = recover_biases(&raw, alpha, labels, q);
    let mut scores = raw;
    for i in 0..labels.len() {
        for k in 0..q {
            scores[i * q + k] += biases[k];
        }
    }
    scores
}

/// `alpha' H alpha` for a model, through the factored product.
pub fn alpha_h_alpha(model: &TrainedModel) -> f64 {
    let ha = h_product(model.gram(), model.q(), model.alpha());
    dot(model.alpha(), &ha)
}
