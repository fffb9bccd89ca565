//! Dataset ingestion: dense CSV and sparse index:value formats, category
//! mapping in first-appearance order, and a content digest used to match
//! models, bounds and leave-one-out reports to the data they came from.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Input file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// `label,v1,v2,...` — one dense row per line.
    Csv,
    /// `label idx:val idx:val ...` — whitespace-separated, indices 1-based.
    Sparse,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "sparse" => Ok(DataFormat::Sparse),
            other => Err(Error::InvalidArgument(format!(
                "unknown data format {other:?}; expected \"csv\" or \"sparse\""
            ))),
        }
    }
}

/// An in-memory labeled dataset with dense points.
#[derive(Debug, Clone)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    labels: Vec<usize>,
    category_map: Vec<String>,
    digest: String,
}

impl Dataset {
    /// Builds a dataset from points and external label strings. Categories
    /// are indexed in first-appearance order.
    pub fn from_parts(points: Vec<Vec<f64>>, external_labels: Vec<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("dataset has no points"));
        }
        if points.len() != external_labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} labels",
                points.len(),
                external_labels.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::EmptyInput("points have no features"));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
        }
        let mut category_map: Vec<String> = Vec::new();
        let mut labels = Vec::with_capacity(external_labels.len());
        for name in &external_labels {
            let idx = match category_map.iter().position(|c| c == name) {
                Some(idx) => idx,
                None => {
                    category_map.push(name.clone());
                    category_map.len() - 1
                }
            };
            labels.push(idx);
        }
        let digest = content_digest(&points, &labels, &category_map);
        Ok(Dataset { points, labels, category_map, digest })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of categories in the map (distinct labels seen at construction).
    pub fn q(&self) -> usize {
        self.category_map.len()
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn category_map(&self) -> &[String] {
        &self.category_map
    }

    pub fn label_name(&self, index: usize) -> &str {
        &self.category_map[index]
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Sub-dataset on the given point indices. The category map is kept
    /// whole, so category indices stay comparable with the parent; the digest
    /// is recomputed over the retained rows.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let points: Vec<Vec<f64>> = indices.iter().map(|&i| self.points[i].clone()).collect();
        let labels: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        let digest = content_digest(&points, &labels, &self.category_map);
        Dataset { points, labels, category_map: self.category_map.clone(), digest }
    }

    /// Serializes as dense CSV, the inverse of [`parse_str`] with
    /// [`DataFormat::Csv`].
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (point, &label) in self.points.iter().zip(&self.labels) {
            out.push_str(&self.category_map[label]);
            for v in point {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    /// Serializes in the sparse format (1-based indices, zeros omitted).
    pub fn to_sparse_string(&self) -> String {
        let mut out = String::new();
        for (point, &label) in self.points.iter().zip(&self.labels) {
            out.push_str(&self.category_map[label]);
            for (j, &v) in point.iter().enumerate() {
                if v != 0.0 {
                    let _ = write!(out, " {}:{v:?}", j + 1);
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Reads and parses a dataset file.
pub fn parse_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let content = std::fs::read_to_string(path)?;
    parse_str(&content, format)
}

/// Parses dataset text. Categories are mapped to indices in first-appearance
/// order; sparse rows are materialized densely with zeros.
pub fn parse_str(content: &str, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Csv => parse_csv(content),
        DataFormat::Sparse => parse_sparse(content),
    }
}

fn parse_csv(content: &str) -> Result<Dataset> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in content.lines().enumerate() {
        let line_number = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or("").trim();
        if label.is_empty() {
            return Err(Error::Parse {
                line: line_number,
                message: "empty label field".into(),
            });
        }
        let mut point = Vec::new();
        for field in fields {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: line_number,
                message: format!("invalid numeric field {:?}", field.trim()),
            })?;
            point.push(value);
        }
        if point.is_empty() {
            return Err(Error::Parse {
                line: line_number,
                message: "row has a label but no feature values".into(),
            });
        }
        match dim {
            None => dim = Some(point.len()),
            Some(d) if d != point.len() => {
                return Err(Error::Parse {
                    line: line_number,
                    message: format!("row has {} features, expected {d}", point.len()),
                });
            }
            _ => {}
        }
        labels.push(label.to_string());
        points.push(point);
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("dataset file holds no rows"));
    }
    Dataset::from_parts(points, labels)
}

fn parse_sparse(content: &str) -> Result<Dataset> {
    struct Row {
        label: String,
        entries: Vec<(usize, f64)>,
        line: usize,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in content.lines().enumerate() {
        let line_number = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().unwrap().to_string();
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for token in tokens {
            let (idx_str, val_str) = token.split_once(':').ok_or_else(|| Error::Parse {
                line: line_number,
                message: format!("token {token:?} is not index:value"),
            })?;
            let index: usize = idx_str.parse().map_err(|_| Error::Parse {
                line: line_number,
                message: format!("invalid feature index {idx_str:?}"),
            })?;
            if index == 0 {
                return Err(Error::Parse {
                    line: line_number,
                    message: "feature indices are 1-based; found 0".into(),
                });
            }
            let value: f64 = val_str.parse().map_err(|_| Error::Parse {
                line: line_number,
                message: format!("invalid feature value {val_str:?}"),
            })?;
            if entries.iter().any(|&(i, _)| i == index) {
                return Err(Error::Parse {
                    line: line_number,
                    message: format!("duplicate feature index {index}"),
                });
            }
            max_index = max_index.max(index);
            entries.push((index, value));
        }
        rows.push(Row { label, entries, line: line_number });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("dataset file holds no rows"));
    }
    if max_index == 0 {
        return Err(Error::Parse {
            line: rows[0].line,
            message: "no feature indices anywhere in the file".into(),
        });
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for row in rows {
        let mut dense = vec![0.0; max_index];
        for (index, value) in row.entries {
            dense[index - 1] = value;
        }
        points.push(dense);
        labels.push(row.label);
    }
    Dataset::from_parts(points, labels)
}

/// Digest of the parsed content (format-independent): category names, label
/// indices and exact point values.
fn content_digest(points: &[Vec<f64>], labels: &[usize], category_map: &[String]) -> String {
    let mut canonical = String::new();
    let _ = write!(canonical, "categories:{}\n", category_map.join("\x1f"));
    for (point, label) in points.iter().zip(labels) {
        let _ = write!(canonical, "{label}|");
        for v in point {
            let _ = write!(canonical, "{:x},", v.to_bits());
        }
        canonical.push('\n');
    }
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    hex::encode(hasher.finalize())
}
