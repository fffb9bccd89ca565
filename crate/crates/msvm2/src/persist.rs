//! Model persistence: a single JSON document, format `"msvm2/1"`, carrying
//! the kernel spec, training data, dual coefficients, biases and solver
//! metadata, protected by a digest over the canonical payload.
//!
//! Numbers are written in shortest round-trip decimal form, so a loaded model
//! reproduces decision scores bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::model::TrainedModel;
use crate::qp::DualSolution;

pub const MODEL_FORMAT: &str = "msvm2/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    digest: String,
    payload: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct SolverMeta {
    tol: f64,
    iterations: usize,
    kkt_residual: f64,
    objective: f64,
    converged: bool,
}

#[derive(Serialize, Deserialize)]
struct ModelPayload {
    kernel: KernelSpec,
    c: Option<f64>,
    category_map: Vec<String>,
    labels: Vec<usize>,
    train_points: Vec<Vec<f64>>,
    /// One row per training point, `Q` columns.
    alpha: Vec<Vec<f64>>,
    biases: Vec<f64>,
    bias_fallback_classes: Vec<usize>,
    solver: SolverMeta,
    dataset_digest: String,
}

/// Digest over the canonical (sorted-key) JSON encoding of the payload.
fn payload_digest(payload: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(payload).expect("value serialization cannot fail");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    hex::encode(hasher.finalize())
}

/// Serializes a trained model to the `"msvm2/1"` document.
pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    let q = model.q();
    let alpha_rows: Vec<Vec<f64>> = (0..model.m())
        .map(|i| model.alpha()[i * q..(i + 1) * q].to_vec())
        .collect();
    let payload = ModelPayload {
        kernel: model.kernel().clone(),
        c: model.c(),
        category_map: model.category_map().to_vec(),
        labels: model.labels().to_vec(),
        train_points: model.train_points().to_vec(),
        alpha: alpha_rows,
        biases: model.biases().to_vec(),
        bias_fallback_classes: model.bias_fallback_classes().to_vec(),
        solver: SolverMeta {
            tol: model.solver_tol(),
            iterations: model.solution().iterations,
            kkt_residual: model.solution().kkt_residual,
            objective: model.solution().objective,
            converged: model.solution().converged,
        },
        dataset_digest: model.dataset_digest().to_string(),
    };
    let payload = serde_json::to_value(&payload)?;
    let digest = payload_digest(&payload);
    let file = ModelFile { format: MODEL_FORMAT.to_string(), digest, payload };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    let json = model_to_json(model)?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Parses and validates a `"msvm2/1"` document.
pub fn model_from_json(text: &str) -> Result<TrainedModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format != MODEL_FORMAT {
        return Err(Error::FormatVersion { found: file.format });
    }
    let digest = payload_digest(&file.payload);
    if digest != file.digest {
        return Err(Error::DigestMismatch {
            context: format!("model payload digest {digest} != recorded {}", file.digest),
        });
    }
    let payload: ModelPayload = serde_json::from_value(file.payload)?;
    validate_payload(&payload)?;

    let m = payload.train_points.len();
    let q = payload.category_map.len();
    let mut alpha = Vec::with_capacity(m * q);
    for row in &payload.alpha {
        alpha.extend_from_slice(row);
    }
    let solution = DualSolution {
        alpha,
        objective: payload.solver.objective,
        kkt_residual: payload.solver.kkt_residual,
        iterations: payload.solver.iterations,
        converged: payload.solver.converged,
    };
    TrainedModel::from_parts(
        payload.kernel,
        payload.c,
        payload.train_points,
        payload.labels,
        q,
        payload.category_map,
        solution,
        payload.biases,
        payload.bias_fallback_classes,
        payload.dataset_digest,
        payload.solver.tol,
    )
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

fn validate_payload(payload: &ModelPayload) -> Result<()> {
    let q = payload.category_map.len();
    let m = payload.train_points.len();
    if q < 2 {
        return Err(Error::CorruptField {
            field: "category_map",
            message: format!("needs at least 2 categories, found {q}"),
        });
    }
    if m == 0 {
        return Err(Error::CorruptField {
            field: "train_points",
            message: "no training points".into(),
        });
    }
    let dim = payload.train_points[0].len();
    if dim == 0 || payload.train_points.iter().any(|p| p.len() != dim) {
        return Err(Error::CorruptField {
            field: "train_points",
            message: "inconsistent or zero feature dimensions".into(),
        });
    }
    if payload.labels.len() != m {
        return Err(Error::CorruptField {
            field: "labels",
            message: format!("{} labels for {m} points", payload.labels.len()),
        });
    }
    if payload.labels.iter().any(|&y| y >= q) {
        return Err(Error::CorruptField {
            field: "labels",
            message: "label index out of category range".into(),
        });
    }
    if payload.alpha.len() != m {
        return Err(Error::CorruptField {
            field: "alpha",
            message: format!("{} rows for {m} points", payload.alpha.len()),
        });
    }
    for (i, row) in payload.alpha.iter().enumerate() {
        if row.len() != q {
            return Err(Error::CorruptField {
                field: "alpha",
                message: format!("row {i} has {} columns, expected {q}", row.len()),
            });
        }
        for (k, &a) in row.iter().enumerate() {
            if !a.is_finite() || a < 0.0 {
                return Err(Error::CorruptField {
                    field: "alpha",
                    message: format!("entry ({i}, {k}) = {a} is not a nonnegative finite value"),
                });
            }
        }
        if row[payload.labels[i]] != 0.0 {
            return Err(Error::CorruptField {
                field: "alpha",
                message: format!("dummy coordinate ({i}, {}) is not zero", payload.labels[i]),
            });
        }
    }
    if payload.biases.len() != q {
        return Err(Error::CorruptField {
            field: "biases",
            message: format!("{} biases for {q} categories", payload.biases.len()),
        });
    }
    if payload.biases.iter().any(|b| !b.is_finite()) {
        return Err(Error::CorruptField {
            field: "biases",
            message: "non-finite bias".into(),
        });
    }
    if let Some(c) = payload.c {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::CorruptField {
                field: "c",
                message: format!("soft margin parameter {c} must be positive"),
            });
        }
        let expected = 1.0 / (2.0 * c);
        let got = payload.kernel.diagonal_offset;
        if (got - expected).abs() > 1e-12 * (1.0 + expected) {
            return Err(Error::CorruptField {
                field: "kernel",
                message: format!(
                    "diagonal offset {got} does not match 1/(2C) = {expected}"
                ),
            });
        }
    }
    Ok(())
}
