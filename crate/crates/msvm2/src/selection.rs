//! Model selection: exact leave-one-out as ground truth, the radius-margin
//! upper bound on the leave-one-out error count as the cheap surrogate, the
//! per-point inequality behind the bound, and grid search driven by it.

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{compute_margins, min_enclosing_ball, MEB_TOL};
use crate::kernel::KernelFamily;
use crate::model::{self, TrainedModel};
use crate::qp::SolverOptions;

/// Slack allowed when checking the per-point inequality; violations beyond it
/// indicate an implementation bug, not a data property.
pub const KEY_LEMMA_SLACK: f64 = 1e-9;

/// Outcome of a single leave-one-out fold.
#[derive(Debug, Clone, Serialize)]
pub struct LooOutcome {
    pub index: usize,
    /// Decided category in the full map; `None` is the dummy category.
    pub predicted: Option<usize>,
    pub correct: bool,
    /// True when the fold's training failed; counted as an error.
    pub train_failed: bool,
}

/// Full leave-one-out evaluation at fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct LooReport {
    pub error_count: usize,
    pub outcomes: Vec<LooOutcome>,
    /// Dual coefficients of the full-data machine, one row of `Q` per point.
    pub alpha_rows: Vec<Vec<f64>>,
    pub dataset_digest: String,
}

/// Retrains from scratch on every fold and predicts the left-out point.
/// A dummy prediction and a failed fold both count as errors. Deterministic.
pub fn exact_loo(
    dataset: &Dataset,
    family: KernelFamily,
    c: Option<f64>,
    options: &SolverOptions,
) -> Result<LooReport> {
    let full = model::train(dataset, family, c, options)?;
    exact_loo_with_model(dataset, &full, options)
}

/// Leave-one-out evaluation reusing an already trained full-data machine for
/// the coefficient rows.
pub fn exact_loo_with_model(
    dataset: &Dataset,
    full: &TrainedModel,
    options: &SolverOptions,
) -> Result<LooReport> {
    if full.dataset_digest() != dataset.digest() {
        return Err(Error::DigestMismatch {
            context: "model was not trained on this dataset".into(),
        });
    }
    let m = dataset.m();
    let q = dataset.q();
    let mut outcomes = Vec::with_capacity(m);
    let mut error_count = 0;
    for p in 0..m {
        let keep: Vec<usize> = (0..m).filter(|&i| i != p).collect();
        let fold = dataset.subset(&keep);
        // Folds keep the full category map: the machine's architecture does
        // not change because one point left, even if its category did.
        let outcome = match model::train_parts(
            fold.points().to_vec(),
            fold.labels().to_vec(),
            q,
            fold.category_map().to_vec(),
            fold.digest().to_string(),
            full.kernel().clone(),
            full.c(),
            options,
        ) {
            Ok(fold_model) => {
                let prediction = fold_model.predict(&dataset.points()[p])?;
                let correct = prediction.label == Some(dataset.labels()[p]);
                LooOutcome { index: p, predicted: prediction.label, correct, train_failed: false }
            }
            Err(_) => LooOutcome { index: p, predicted: None, correct: false, train_failed: true },
        };
        if !outcome.correct {
            error_count += 1;
        }
        outcomes.push(outcome);
    }
    let alpha_rows = (0..m)
        .map(|i| full.alpha()[i * q..(i + 1) * q].to_vec())
        .collect();
    Ok(LooReport {
        error_count,
        outcomes,
        alpha_rows,
        dataset_digest: dataset.digest().to_string(),
    })
}

/// The radius-margin surrogate and its certificates.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// Squared diameter of the enclosing ball of all training images.
    pub d_sq: f64,
    /// `sum_{k<l} ((1 + d_kl) / gamma_kl)^2`
    pub margin_sum: f64,
    /// `Q^2 * D^2 * margin_sum` — the raw bound, possibly above `m`.
    pub bound_value: f64,
    /// `min(bound_value, m)`
    pub bound_clamped: f64,
    /// `1' alpha` of the full-data machine.
    pub alpha_sum: f64,
    /// `Q (Q-1) * D^2 * 1'alpha` — must agree with `bound_value`.
    pub bound_via_alpha: f64,
    /// `bound_value / Q^2`, the conjectured sharper constant; reported only.
    pub bound_over_q_sq: f64,
    /// Exact leave-one-out error count, when it was run.
    pub loo_errors: Option<usize>,
    /// Points whose leave-one-out error violates the per-point inequality
    /// (must stay empty).
    pub key_lemma_violations: Vec<usize>,
    pub dataset_digest: String,
}

/// Computes the bound from a converged machine: ball and margins both live in
/// the offset-kernel feature space of the full-data model.
pub fn radius_margin_bound(model: &TrainedModel) -> Result<BoundReport> {
    let q = model.q() as f64;
    let ball = min_enclosing_ball(model.gram(), MEB_TOL)?;
    let alpha_sum: f64 = model.alpha().iter().sum();
    // A machine with alpha = 0 has every w_k = 0; the margin sum collapses to
    // zero without the margins themselves being defined.
    let margin_sum = if alpha_sum == 0.0 { 0.0 } else { compute_margins(model)?.margin_sum };
    let d_sq = ball.diameter_sq;
    let bound_value = q * q * d_sq * margin_sum;
    let bound_via_alpha = q * (q - 1.0) * d_sq * alpha_sum;
    Ok(BoundReport {
        d_sq,
        margin_sum,
        bound_value,
        bound_clamped: bound_value.min(model.m() as f64),
        alpha_sum,
        bound_via_alpha,
        bound_over_q_sq: bound_value / (q * q),
        loo_errors: None,
        key_lemma_violations: Vec::new(),
        dataset_digest: model.dataset_digest().to_string(),
    })
}

/// Bound report enriched with an exact leave-one-out run and the per-point
/// inequality checks.
pub fn radius_margin_bound_with_loo(model: &TrainedModel, loo: &LooReport) -> Result<BoundReport> {
    let mut report = radius_margin_bound(model)?;
    let checks = key_lemma_check(model, loo)?;
    report.loo_errors = Some(loo.error_count);
    report.key_lemma_violations = checks
        .iter()
        .filter(|c| !c.satisfied)
        .map(|c| c.point)
        .collect();
    Ok(report)
}

/// One evaluation of the per-point inequality at a leave-one-out error.
#[derive(Debug, Clone, Serialize)]
pub struct KeyLemmaCheck {
    pub point: usize,
    /// `max_k alpha_{pk}` from the full-data machine.
    pub max_alpha: f64,
    /// `1 / (Q (Q-1) D^2)`
    pub threshold: f64,
    pub satisfied: bool,
}

/// For every leave-one-out error, checks that the full-data machine put
/// enough dual weight on the point: `max_k alpha_{pk} >= 1/(Q(Q-1) D^2)`.
pub fn key_lemma_check(model: &TrainedModel, loo: &LooReport) -> Result<Vec<KeyLemmaCheck>> {
    if model.dataset_digest() != loo.dataset_digest {
        return Err(Error::DigestMismatch {
            context: "leave-one-out report comes from a different dataset".into(),
        });
    }
    let ball = min_enclosing_ball(model.gram(), MEB_TOL)?;
    let q = model.q();
    let alpha_rows: Vec<Vec<f64>> = (0..model.m())
        .map(|i| model.alpha()[i * q..(i + 1) * q].to_vec())
        .collect();
    Ok(key_lemma_evaluate(&alpha_rows, &loo.outcomes, ball.diameter_sq, q))
}

/// Inequality evaluation on explicit coefficient rows; exposed so detector
/// sanity can be tested on synthetically corrupted rows.
pub fn key_lemma_evaluate(
    alpha_rows: &[Vec<f64>],
    outcomes: &[LooOutcome],
    d_sq: f64,
    q: usize,
) -> Vec<KeyLemmaCheck> {
    let threshold = 1.0 / (q as f64 * (q - 1) as f64 * d_sq);
    outcomes
        .iter()
        .filter(|o| !o.correct)
        .map(|o| {
            let max_alpha = alpha_rows[o.index].iter().cloned().fold(0.0_f64, f64::max);
            KeyLemmaCheck {
                point: o.index,
                max_alpha,
                threshold,
                satisfied: max_alpha >= threshold - KEY_LEMMA_SLACK,
            }
        })
        .collect()
}

/// One grid point of a selection sweep.
#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub kernel: KernelFamily,
    pub c: f64,
    /// Raw bound; `None` when training failed (treated as infinite).
    pub bound: Option<f64>,
    pub bound_clamped: Option<f64>,
    pub bound_over_q_sq: Option<f64>,
    pub loo_errors: Option<usize>,
    /// Training failure message, when any.
    pub failure: Option<String>,
}

/// Result of a bound-driven hyperparameter sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub rows: Vec<GridRow>,
    /// Index of the selected row: minimal bound, ties broken by smaller `C`,
    /// then by the kernel parameter tuple in lexicographic order.
    pub best: usize,
    pub dataset_digest: String,
}

/// Trains every `(kernel, C)` pair, scores each by the radius-margin bound
/// and optionally by exact leave-one-out, and picks the minimal bound.
pub fn grid_select(
    dataset: &Dataset,
    kernel_grid: &[KernelFamily],
    c_grid: &[f64],
    with_loo: bool,
    options: &SolverOptions,
) -> Result<SelectionResult> {
    if kernel_grid.is_empty() || c_grid.is_empty() {
        return Err(Error::EmptyInput("selection needs nonempty kernel and C grids"));
    }
    for &c in c_grid {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "soft margin grid values must be positive, got {c}"
            )));
        }
    }
    let mut rows = Vec::with_capacity(kernel_grid.len() * c_grid.len());
    for family in kernel_grid {
        for &c in c_grid {
            let row = match model::train(dataset, family.clone(), Some(c), options) {
                Ok(model) => {
                    let loo = if with_loo {
                        Some(exact_loo_with_model(dataset, &model, options)?)
                    } else {
                        None
                    };
                    let report = match &loo {
                        Some(l) => radius_margin_bound_with_loo(&model, l)?,
                        None => radius_margin_bound(&model)?,
                    };
                    GridRow {
                        kernel: family.clone(),
                        c,
                        bound: Some(report.bound_value),
                        bound_clamped: Some(report.bound_clamped),
                        bound_over_q_sq: Some(report.bound_over_q_sq),
                        loo_errors: report.loo_errors,
                        failure: None,
                    }
                }
                Err(err) => GridRow {
                    kernel: family.clone(),
                    c,
                    bound: None,
                    bound_clamped: None,
                    bound_over_q_sq: None,
                    loo_errors: None,
                    failure: Some(err.to_string()),
                },
            };
            rows.push(row);
        }
    }
    let best = select_best(&rows).ok_or(Error::AllGridPointsFailed)?;
    Ok(SelectionResult { rows, best, dataset_digest: dataset.digest().to_string() })
}

fn select_best(rows: &[GridRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        let Some(bound) = row.bound else { continue };
        match best {
            None => best = Some(i),
            Some(j) => {
                let cur = &rows[j];
                let cur_bound = cur.bound.unwrap();
                let candidate_wins = bound < cur_bound
                    || (bound == cur_bound
                        && (row.c < cur.c
                            || (row.c == cur.c
                                && row.kernel.param_key() < cur.kernel.param_key())));
                if candidate_wins {
                    best = Some(i);
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn dataset(points: Vec<Vec<f64>>, labels: &[&str]) -> Dataset {
        Dataset::from_parts(points, labels.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn tight_clusters() -> Dataset {
        // Three far-separated clusters of identical duplicated points.
        dataset(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 0.0],
                vec![10.0, 0.0],
                vec![10.0, 0.0],
                vec![0.0, 10.0],
                vec![0.0, 10.0],
            ],
            &["a", "a", "b", "b", "c", "c"],
        )
    }

    #[test]
    fn duplicated_clusters_have_zero_loo_error() {
        let ds = tight_clusters();
        let report =
            exact_loo(&ds, KernelFamily::Linear, Some(100.0), &SolverOptions::default()).unwrap();
        assert_eq!(report.error_count, 0, "outcomes: {:?}", report.outcomes);
    }

    #[test]
    fn singleton_classes_all_err() {
        // m = Q singletons: each fold leaves the true category unrepresented.
        let ds = dataset(
            vec![vec![2.0, 0.0], vec![-1.0, 1.5], vec![-1.0, -1.5], vec![0.5, 0.5]],
            &["a", "b", "c", "d"],
        );
        let report =
            exact_loo(&ds, KernelFamily::Linear, Some(1.0), &SolverOptions::default()).unwrap();
        assert_eq!(report.error_count, ds.m());
    }

    #[test]
    fn two_point_bound_closed_form() {
        // Worked instance: D^2 = 6, margin_sum = 2/3, bound = 16 both ways.
        let ds = dataset(vec![vec![1.0], vec![-1.0]], &["p", "n"]);
        let model =
            model::train(&ds, KernelFamily::Linear, Some(0.5), &SolverOptions::default()).unwrap();
        let report = radius_margin_bound(&model).unwrap();
        assert!((report.d_sq - 6.0).abs() < 1e-8, "D^2 = {}", report.d_sq);
        assert!((report.margin_sum - 2.0 / 3.0).abs() < 1e-8);
        assert!((report.bound_value - 16.0).abs() < 1e-6);
        assert!((report.bound_via_alpha - 16.0).abs() < 1e-6);
        assert_eq!(report.bound_clamped, 2.0);
        assert!((report.bound_over_q_sq - 4.0).abs() < 1e-6);
    }

    #[test]
    fn bound_with_loo_on_two_point_instance() {
        let ds = dataset(vec![vec![1.0], vec![-1.0]], &["p", "n"]);
        let model =
            model::train(&ds, KernelFamily::Linear, Some(0.5), &SolverOptions::default()).unwrap();
        let loo = exact_loo_with_model(&ds, &model, &SolverOptions::default()).unwrap();
        // Each fold trains on a single point: the feasible set is {0}, every
        // score is zero, the prediction is the dummy category, an error.
        assert_eq!(loo.error_count, 2);
        let report = radius_margin_bound_with_loo(&model, &loo).unwrap();
        assert_eq!(report.loo_errors, Some(2));
        assert!(report.key_lemma_violations.is_empty());
        assert!((loo.error_count as f64) <= report.bound_value + 1e-6);
    }

    #[test]
    fn key_lemma_detector_flags_corrupted_rows() {
        let outcomes = vec![
            LooOutcome { index: 0, predicted: None, correct: false, train_failed: false },
            LooOutcome { index: 1, predicted: Some(0), correct: true, train_failed: false },
        ];
        let rows = vec![vec![0.0, 0.0], vec![0.5, 0.0]];
        let checks = key_lemma_evaluate(&rows, &outcomes, 4.0, 2);
        assert_eq!(checks.len(), 1);
        assert!(!checks[0].satisfied, "zeroed row must be flagged");
    }

    #[test]
    fn key_lemma_rejects_digest_mismatch() {
        let ds = tight_clusters();
        let other = dataset(vec![vec![1.0, 0.0], vec![0.0, 1.0]], &["a", "b"]);
        let model =
            model::train(&ds, KernelFamily::Linear, Some(1.0), &SolverOptions::default()).unwrap();
        let loo = exact_loo(&other, KernelFamily::Linear, Some(1.0), &SolverOptions::default())
            .unwrap();
        assert!(matches!(
            key_lemma_check(&model, &loo),
            Err(Error::DigestMismatch { .. })
        ));
    }

    #[test]
    fn grid_single_point_is_best() {
        let ds = tight_clusters();
        let result = grid_select(
            &ds,
            &[KernelFamily::Linear],
            &[1.0],
            false,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(result.best, 0);
        assert_eq!(result.rows.len(), 1);
    }

    #[test]
    fn grid_orders_and_breaks_ties_deterministically() {
        let ds = tight_clusters();
        let result = grid_select(
            &ds,
            &[KernelFamily::Gaussian { gamma: 0.5 }, KernelFamily::Gaussian { gamma: 1.0 }],
            &[0.5, 2.0],
            false,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(result.rows.len(), 4);
        let best_bound = result.rows[result.best].bound.unwrap();
        for row in &result.rows {
            if let Some(b) = row.bound {
                assert!(best_bound <= b + 1e-12);
            }
        }
        let again = grid_select(
            &ds,
            &[KernelFamily::Gaussian { gamma: 0.5 }, KernelFamily::Gaussian { gamma: 1.0 }],
            &[0.5, 2.0],
            false,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(again.best, result.best);
        for (a, b) in again.rows.iter().zip(&result.rows) {
            assert_eq!(a.bound, b.bound);
        }
    }

    #[test]
    fn grid_two_points_strictly_ordered() {
        let ds = tight_clusters();
        let result = grid_select(
            &ds,
            &[KernelFamily::Linear],
            &[0.01, 10.0],
            false,
            &SolverOptions::default(),
        )
        .unwrap();
        let b0 = result.rows[0].bound.unwrap();
        let b1 = result.rows[1].bound.unwrap();
        assert_ne!(b0, b1);
        let expected = if b0 < b1 { 0 } else { 1 };
        assert_eq!(result.best, expected);
    }
}
