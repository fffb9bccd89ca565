//! Command-line front end: train, predict, evaluate, exact leave-one-out,
//! radius-margin bound and bound-driven grid selection. All heavy lifting
//! lives in the library; this binary only parses flags and moves bytes.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use msvm2::dataset::{parse_dataset, DataFormat, Dataset};
use msvm2::error::{Error, Result};
use msvm2::kernel::KernelFamily;
use msvm2::model::TrainedModel;
use msvm2::persist::{load_model, save_model};
use msvm2::qp::SolverOptions;
use msvm2::report;
use msvm2::selection;

#[derive(Parser)]
#[command(name = "msvm2", version, about = "Quadratic-slack multi-class SVM with radius-margin model selection", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Dataset format: csv (label,v1,v2,...) or sparse (label idx:val ...).
    #[arg(long, default_value = "csv")]
    format: String,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let format: DataFormat = self.format.parse()?;
        parse_dataset(&self.data, format)
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Stationarity tolerance, relative to the gradient scale 1/(Q-1).
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Iteration cap (default 100*Q*m).
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Args)]
struct PenaltyArgs {
    /// Soft margin parameter C > 0 (diagonal offset 1/(2C)).
    #[arg(long, conflicts_with = "hard")]
    c: Option<f64>,
    /// Train the pure hard-margin machine (no slack).
    #[arg(long)]
    hard: bool,
}

impl PenaltyArgs {
    fn c(&self) -> Result<Option<f64>> {
        if self.hard {
            Ok(None)
        } else {
            match self.c {
                Some(c) => Ok(Some(c)),
                None => Err(Error::InvalidArgument(
                    "one of --c <C> or --hard is required".into(),
                )),
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to a file.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Kernel: linear | rbf,gamma=G | poly,degree=D,scale=A,offset=B
        #[arg(long)]
        kernel: String,
        #[command(flatten)]
        penalty: PenaltyArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Output model path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict labels for a dataset (its labels are ignored).
    Predict {
        /// Trained model file.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Output file, one external label per line ("*" = dummy).
        #[arg(long)]
        out: PathBuf,
    },
    /// Error rate of a model on a labeled dataset (dummy counts as error).
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Exact leave-one-out evaluation at fixed hyperparameters.
    Loo {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        kernel: String,
        #[command(flatten)]
        penalty: PenaltyArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Radius-margin bound of a trained model, optionally with exact
    /// leave-one-out for comparison.
    Bound {
        #[arg(long)]
        model: PathBuf,
        /// Also run exact leave-one-out and check it against the bound.
        #[arg(long)]
        with_loo: bool,
        /// Write the report table here (JSON mirror at <path>.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Grid search driven by the radius-margin bound.
    Select {
        #[command(flatten)]
        data: DataArgs,
        /// Kernel family: linear | rbf | poly
        #[arg(long)]
        kernel_family: String,
        /// Soft-margin grid, e.g. "0.1 1 10" (spaces or commas).
        #[arg(long)]
        c_grid: String,
        /// Kernel parameter grid. rbf: gamma values, e.g. "0.5 1 2".
        /// poly: sets split by ';', e.g. "degree=2,scale=1,offset=1;degree=3,scale=1,offset=1".
        /// linear: leave empty.
        #[arg(long, default_value = "")]
        param_grid: String,
        /// Also compute exact leave-one-out per grid point.
        #[arg(long)]
        with_loo: bool,
        /// Report table path (JSON mirror at <path>.json).
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successes; anything else is a usage error.
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { data, kernel, penalty, solver, out } => {
            let dataset = data.load()?;
            let family = parse_kernel(&kernel)?;
            let c = penalty.c()?;
            let model = msvm2::model::train(&dataset, family, c, &solver.options())?;
            save_model(&out, &model)?;
            let sol = model.solution();
            println!("trained: m={} q={} dim={}", model.m(), model.q(), model.dim());
            println!(
                "objective: {:?} iterations: {} kkt_residual: {:?}",
                sol.objective, sol.iterations, sol.kkt_residual
            );
            println!("model: {}", out.display());
            Ok(())
        }
        Command::Predict { model, data, out } => {
            let model = load_model(&model)?;
            let dataset = data.load()?;
            let predictions = model.predict_many(dataset.points())?;
            let mut text = String::new();
            for p in &predictions {
                text.push_str(p.external_label(&model));
                text.push('\n');
            }
            std::fs::write(&out, text)?;
            println!("predictions: {} -> {}", predictions.len(), out.display());
            Ok(())
        }
        Command::Evaluate { model, data } => {
            let model = load_model(&model)?;
            let dataset = data.load()?;
            let predictions = model.predict_many(dataset.points())?;
            let mut errors = 0usize;
            let mut dummies = 0usize;
            for (p, &y) in predictions.iter().zip(dataset.labels()) {
                let truth = dataset.label_name(y);
                let predicted = p.external_label(&model);
                if p.label.is_none() {
                    dummies += 1;
                }
                if predicted != truth {
                    errors += 1;
                }
            }
            let m = dataset.m();
            println!("points: {m}");
            println!("errors: {errors}");
            println!("error_rate: {:?}", errors as f64 / m as f64);
            println!("dummy: {dummies}");
            Ok(())
        }
        Command::Loo { data, kernel, penalty, solver } => {
            let dataset = data.load()?;
            let family = parse_kernel(&kernel)?;
            let c = penalty.c()?;
            let report = selection::exact_loo(&dataset, family, c, &solver.options())?;
            for o in &report.outcomes {
                let truth = dataset.label_name(dataset.labels()[o.index]);
                let predicted = match o.predicted {
                    Some(idx) => dataset.label_name(idx),
                    None => "*",
                };
                let note = if o.train_failed { " train_failed" } else { "" };
                println!(
                    "{}\t{}\t{}\t{}{note}",
                    o.index,
                    truth,
                    predicted,
                    if o.correct { "ok" } else { "error" }
                );
            }
            println!("loo_errors: {} / {}", report.error_count, dataset.m());
            Ok(())
        }
        Command::Bound { model, with_loo, report: report_path } => {
            let start = Instant::now();
            let model = load_model(&model)?;
            let bound = if with_loo {
                let dataset = dataset_of_model(&model)?;
                let options = SolverOptions { tol: model.solver_tol(), max_iter: None };
                let loo = selection::exact_loo_with_model(&dataset, &model, &options)?;
                selection::radius_margin_bound_with_loo(&model, &loo)?
            } else {
                selection::radius_margin_bound(&model)?
            };
            let table = report::bound_table(&bound, start.elapsed().as_millis());
            print!("{table}");
            if let Some(path) = report_path {
                std::fs::write(&path, &table)?;
                let mirror = report::json_mirror("msvm2-bound/1", &bound)?;
                std::fs::write(path.with_extension("json"), mirror)?;
            }
            Ok(())
        }
        Command::Select { data, kernel_family, c_grid, param_grid, with_loo, report: report_path, solver } => {
            let start = Instant::now();
            let dataset = data.load()?;
            let kernels = parse_kernel_grid(&kernel_family, &param_grid)?;
            let cs = parse_float_list(&c_grid)?;
            let result =
                selection::grid_select(&dataset, &kernels, &cs, with_loo, &solver.options())?;
            let table = report::selection_table(&result, start.elapsed().as_millis());
            std::fs::write(&report_path, &table)?;
            let mirror = report::json_mirror("msvm2-selection/1", &result)?;
            std::fs::write(report_path.with_extension("json"), mirror)?;
            let best = &result.rows[result.best];
            println!("best: kernel={} c={}", best.kernel, best.c);
            println!("report: {}", report_path.display());
            Ok(())
        }
    }
}

/// Rebuilds the training dataset embedded in a model; digests agree because
/// the category map preserves first-appearance order.
fn dataset_of_model(model: &TrainedModel) -> Result<Dataset> {
    let labels: Vec<String> = model
        .labels()
        .iter()
        .map(|&y| model.category_map()[y].clone())
        .collect();
    let dataset = Dataset::from_parts(model.train_points().to_vec(), labels)?;
    if dataset.digest() != model.dataset_digest() {
        return Err(Error::DigestMismatch {
            context: "model training data does not reproduce its recorded digest".into(),
        });
    }
    Ok(dataset)
}

fn parse_kernel(text: &str) -> Result<KernelFamily> {
    let mut parts = text.split(',');
    let head = parts.next().unwrap_or("").trim();
    let params: Vec<&str> = parts.map(|p| p.trim()).collect();
    let family = match head {
        "linear" => {
            if !params.is_empty() {
                return Err(Error::InvalidArgument(
                    "linear kernel takes no parameters".into(),
                ));
            }
            KernelFamily::Linear
        }
        "rbf" => {
            let gamma = require_param(&params, "gamma")?;
            KernelFamily::Gaussian { gamma }
        }
        "poly" => {
            let degree = require_param(&params, "degree")?;
            if degree.fract() != 0.0 || degree < 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "poly degree must be a positive integer, got {degree}"
                )));
            }
            KernelFamily::Polynomial {
                degree: degree as u32,
                scale: require_param(&params, "scale")?,
                offset: require_param(&params, "offset")?,
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown kernel {other:?}; expected linear, rbf or poly"
            )))
        }
    };
    family.validate()?;
    Ok(family)
}

fn require_param(params: &[&str], name: &str) -> Result<f64> {
    for p in params {
        if let Some((key, value)) = p.split_once('=') {
            if key.trim() == name {
                return value.trim().parse().map_err(|_| {
                    Error::InvalidArgument(format!("invalid value for {name}: {value:?}"))
                });
            }
        }
    }
    Err(Error::InvalidArgument(format!("missing kernel parameter {name}")))
}

fn parse_float_list(text: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidArgument(format!("invalid number {t:?} in grid")))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::EmptyInput("grid list is empty"));
    }
    Ok(values)
}

fn parse_kernel_grid(family: &str, param_grid: &str) -> Result<Vec<KernelFamily>> {
    match family {
        "linear" => {
            if !param_grid.trim().is_empty() {
                return Err(Error::InvalidArgument(
                    "linear kernel family takes an empty --param-grid".into(),
                ));
            }
            Ok(vec![KernelFamily::Linear])
        }
        "rbf" => {
            let gammas = parse_float_list(param_grid)?;
            gammas
                .into_iter()
                .map(|gamma| {
                    let k = KernelFamily::Gaussian { gamma };
                    k.validate()?;
                    Ok(k)
                })
                .collect()
        }
        "poly" => {
            let mut kernels = Vec::new();
            for chunk in param_grid.split(';') {
                let chunk = chunk.trim();
                if chunk.is_empty() {
                    continue;
                }
                kernels.push(parse_kernel(&format!("poly,{chunk}"))?);
            }
            if kernels.is_empty() {
                return Err(Error::EmptyInput("poly --param-grid is empty"));
            }
            Ok(kernels)
        }
        other => Err(Error::InvalidArgument(format!(
            "unknown kernel family {other:?}; expected linear, rbf or poly"
        ))),
    }
}
