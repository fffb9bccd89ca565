//! Multi-class support vector machine with a quadratic slack penalty, trained
//! by solving the hard-margin dual on a diagonally shifted kernel, plus the
//! geometry needed to turn that machine into a model-selection tool: exact
//! geometric margins, the minimum enclosing ball of the training images, and
//! a radius-margin upper bound on the leave-one-out error count that is cheap
//! enough to drive grid search, with exact leave-one-out available as ground
//! truth.
//!
//! Start from [`dataset::Dataset`] and [`model::train`]; each capability has
//! a runnable example under `examples/`.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod model;
pub mod persist;
pub mod qp;
pub mod report;
pub mod selection;

pub use dataset::{parse_dataset, parse_str, DataFormat, Dataset};
pub use error::{Error, Result};
pub use geometry::{
    compute_margins, d_base, min_enclosing_ball, sumwl_check, BallResult, MarginReport,
};
pub use kernel::{build_gram, cross_gram, GramMatrix, KernelFamily, KernelSpec};
pub use model::{train, train_with_spec, Prediction, TrainedModel};
pub use persist::{load_model, save_model};
pub use qp::{dual_objective, kkt_report, solve_dual, DualProblem, DualSolution, SolverOptions};
pub use selection::{
    exact_loo, grid_select, key_lemma_check, radius_margin_bound, radius_margin_bound_with_loo,
    BoundReport, LooReport, SelectionResult,
};
