//! Base kernels, Gram matrices and the diagonal modification that turns the
//! soft machine into a hard-margin one.
//!
//! The diagonal offset is index-based: it is added to `gram[i][i]` only, never
//! to the value of the kernel at a pair of equal points with distinct indices,
//! and never to cross evaluations against query points. This matches the
//! augmented-feature-space reading in which every training point carries one
//! private slack coordinate of magnitude `1/sqrt(2C)` and query points have
//! all slack coordinates at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A base positive semidefinite kernel family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelFamily {
    /// `k(x, y) = <x, y>`
    Linear,
    /// `k(x, y) = exp(-gamma * ||x - y||^2)`, `gamma > 0`
    Gaussian { gamma: f64 },
    /// `k(x, y) = (scale * <x, y> + offset)^degree`, `degree >= 1`,
    /// `scale > 0`, `offset >= 0`
    Polynomial { degree: u32, scale: f64, offset: f64 },
}

impl KernelFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelFamily::Linear => Ok(()),
            KernelFamily::Gaussian { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidKernelParameter(format!(
                        "gaussian gamma must be positive and finite, got {gamma}"
                    )))
                }
            }
            KernelFamily::Polynomial { degree, scale, offset } => {
                if degree < 1 {
                    return Err(Error::InvalidKernelParameter(
                        "polynomial degree must be at least 1".into(),
                    ));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidKernelParameter(format!(
                        "polynomial scale must be positive and finite, got {scale}"
                    )));
                }
                if !(offset >= 0.0 && offset.is_finite()) {
                    return Err(Error::InvalidKernelParameter(format!(
                        "polynomial offset must be nonnegative and finite, got {offset}"
                    )));
                }
                Ok(())
            }
        }
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelFamily::Linear => dot(x, y),
            KernelFamily::Gaussian { gamma } => {
                let mut sq = 0.0;
                for (a, b) in x.iter().zip(y) {
                    let d = a - b;
                    sq += d * d;
                }
                (-gamma * sq).exp()
            }
            KernelFamily::Polynomial { degree, scale, offset } => {
                (scale * dot(x, y) + offset).powi(degree as i32)
            }
        }
    }

    /// Short machine-readable family name, as written in model files.
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Linear => "linear",
            KernelFamily::Gaussian { .. } => "gaussian",
            KernelFamily::Polynomial { .. } => "polynomial",
        }
    }

    /// Kernel parameters as an ordered tuple, used for deterministic
    /// tie-breaking in grid selection.
    pub fn param_key(&self) -> Vec<f64> {
        match *self {
            KernelFamily::Linear => vec![],
            KernelFamily::Gaussian { gamma } => vec![gamma],
            KernelFamily::Polynomial { degree, scale, offset } => {
                vec![degree as f64, scale, offset]
            }
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            KernelFamily::Linear => write!(f, "linear"),
            KernelFamily::Gaussian { gamma } => write!(f, "rbf,gamma={gamma}"),
            KernelFamily::Polynomial { degree, scale, offset } => {
                write!(f, "poly,degree={degree},scale={scale},offset={offset}")
            }
        }
    }
}

/// A base kernel together with the diagonal regularization `1/(2C)`.
///
/// `diagonal_offset = 0` describes a pure hard-margin machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub diagonal_offset: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, diagonal_offset: f64) -> Result<Self> {
        family.validate()?;
        if !(diagonal_offset >= 0.0 && diagonal_offset.is_finite()) {
            return Err(Error::InvalidKernelParameter(format!(
                "diagonal offset must be nonnegative and finite, got {diagonal_offset}"
            )));
        }
        Ok(KernelSpec { family, diagonal_offset })
    }

    /// Spec of a hard-margin machine: no diagonal term.
    pub fn hard_margin(family: KernelFamily) -> Result<Self> {
        KernelSpec::new(family, 0.0)
    }

    /// Spec of the soft machine with parameter `C`: diagonal term `1/(2C)`.
    pub fn soft_margin(family: KernelFamily, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidKernelParameter(format!(
                "soft margin parameter C must be positive and finite, got {c}"
            )));
        }
        KernelSpec::new(family, 1.0 / (2.0 * c))
    }

    /// Base kernel value at a pair of points. The diagonal offset is not
    /// applied here; it is tied to training indices, not to values.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        Ok(self.family.eval_unchecked(x, y))
    }
}

/// Symmetric training Gram matrix, with the diagonal offset already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    order: usize,
    diagonal_offset: f64,
    data: Vec<f64>,
}

impl GramMatrix {
    /// Number of training points.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Offset that was added to the diagonal when the matrix was built.
    pub fn diagonal_offset(&self) -> f64 {
        self.diagonal_offset
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    /// Row `i` as a slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    /// Build a Gram matrix directly from entries. Used by geometry helpers;
    /// symmetry is the caller's responsibility.
    pub fn from_entries(order: usize, diagonal_offset: f64, data: Vec<f64>) -> Result<Self> {
        if data.len() != order * order {
            return Err(Error::InvalidArgument(format!(
                "gram entries length {} does not match order {order}",
                data.len()
            )));
        }
        Ok(GramMatrix { order, diagonal_offset, data })
    }

    /// Principal submatrix on the given point indices, keeping their order.
    pub fn submatrix(&self, indices: &[usize]) -> GramMatrix {
        let n = indices.len();
        let mut data = vec![0.0; n * n];
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                data[a * n + b] = self.at(i, j);
            }
        }
        GramMatrix { order: n, diagonal_offset: self.diagonal_offset, data }
    }

    /// Smallest and largest eigenvalue estimates via symmetric tridiagonal-free
    /// power iterations are overkill here; tests use quadratic forms instead.
    /// This helper only checks `a' G a >= -eps * scale` on a provided vector.
    pub fn quadratic_form(&self, a: &[f64]) -> f64 {
        let m = self.order;
        let mut total = 0.0;
        for i in 0..m {
            let row = self.row(i);
            let mut s = 0.0;
            for j in 0..m {
                s += row[j] * a[j];
            }
            total += a[i] * s;
        }
        total
    }
}

/// Training Gram matrix: `entries[i][j] = k(x_i, x_j) + offset * [i == j]`.
///
/// The upper triangle is computed and mirrored, so symmetry is exact.
pub fn build_gram(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<GramMatrix> {
    if points.is_empty() {
        return Err(Error::EmptyInput("gram construction needs at least one point"));
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
    }
    let m = points.len();
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let mut v = spec.family.eval_unchecked(&points[i], &points[j]);
            if i == j {
                v += spec.diagonal_offset;
            }
            data[i * m + j] = v;
            data[j * m + i] = v;
        }
    }
    Ok(GramMatrix { order: m, diagonal_offset: spec.diagonal_offset, data })
}

/// Rectangular kernel matrix between training and query points.
///
/// Entry `(i, q) = k(x_i, x_q)` with no diagonal offset: a query point never
/// shares a training index.
#[derive(Debug, Clone)]
pub struct CrossGram {
    train_count: usize,
    query_count: usize,
    data: Vec<f64>,
}

impl CrossGram {
    pub fn train_count(&self) -> usize {
        self.train_count
    }

    pub fn query_count(&self) -> usize {
        self.query_count
    }

    #[inline]
    pub fn at(&self, train_index: usize, query_index: usize) -> f64 {
        self.data[train_index * self.query_count + query_index]
    }
}

pub fn cross_gram(
    spec: &KernelSpec,
    train_points: &[Vec<f64>],
    query_points: &[Vec<f64>],
) -> Result<CrossGram> {
    if train_points.is_empty() || query_points.is_empty() {
        return Err(Error::EmptyInput("cross gram needs nonempty point sets"));
    }
    let dim = train_points[0].len();
    for p in train_points.iter().chain(query_points) {
        if p.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
    }
    let mut data = vec![0.0; train_points.len() * query_points.len()];
    for (i, xi) in train_points.iter().enumerate() {
        for (q, xq) in query_points.iter().enumerate() {
            data[i * query_points.len() + q] = spec.family.eval_unchecked(xi, xq);
        }
    }
    Ok(CrossGram {
        train_count: train_points.len(),
        query_count: query_points.len(),
        data,
    })
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        s += a * b;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn linear_kernel_orthogonal_vectors() {
        let spec = KernelSpec::hard_margin(KernelFamily::Linear).unwrap();
        let v = spec.eval(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn gaussian_kernel_at_identical_points_is_one() {
        for gamma in [0.1, 1.0, 25.0] {
            let spec = KernelSpec::hard_margin(KernelFamily::Gaussian { gamma }).unwrap();
            let x = [0.3, -2.0, 5.5];
            assert_eq!(spec.eval(&x, &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn polynomial_kernel_analytic_value() {
        let spec = KernelSpec::hard_margin(KernelFamily::Polynomial {
            degree: 2,
            scale: 1.0,
            offset: 1.0,
        })
        .unwrap();
        let v = spec.eval(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(v, 9.0);
    }

    #[test]
    fn kernel_symmetry_in_arguments() {
        let specs = [
            KernelFamily::Linear,
            KernelFamily::Gaussian { gamma: 0.7 },
            KernelFamily::Polynomial { degree: 3, scale: 0.5, offset: 2.0 },
        ];
        let x = [0.2, -1.3, 4.0];
        let y = [1.9, 0.0, -0.4];
        for family in specs {
            let spec = KernelSpec::hard_margin(family).unwrap();
            assert_eq!(spec.eval(&x, &y).unwrap(), spec.eval(&y, &x).unwrap());
        }
    }

    #[test]
    fn eval_rejects_dimension_mismatch() {
        let spec = KernelSpec::hard_margin(KernelFamily::Linear).unwrap();
        assert!(matches!(
            spec.eval(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_parameters_rejected_at_construction() {
        assert!(KernelSpec::hard_margin(KernelFamily::Gaussian { gamma: 0.0 }).is_err());
        assert!(KernelSpec::hard_margin(KernelFamily::Gaussian { gamma: -1.0 }).is_err());
        assert!(KernelSpec::hard_margin(KernelFamily::Polynomial {
            degree: 0,
            scale: 1.0,
            offset: 0.0
        })
        .is_err());
        assert!(KernelSpec::hard_margin(KernelFamily::Polynomial {
            degree: 2,
            scale: -1.0,
            offset: 0.0
        })
        .is_err());
        assert!(KernelSpec::new(KernelFamily::Linear, -0.5).is_err());
        assert!(KernelSpec::soft_margin(KernelFamily::Linear, 0.0).is_err());
    }

    #[test]
    fn gram_on_orthonormal_basis_is_identity() {
        let spec = KernelSpec::hard_margin(KernelFamily::Linear).unwrap();
        let gram = build_gram(&spec, &basis(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(gram.at(i, j), expected);
            }
        }
    }

    #[test]
    fn soft_margin_offset_adds_one_at_c_half() {
        // 1/(2 * 0.5) = 1 on the diagonal, forced by the modified-kernel formula.
        let spec = KernelSpec::soft_margin(KernelFamily::Linear, 0.5).unwrap();
        assert_eq!(spec.diagonal_offset, 1.0);
        let pts = vec![vec![2.0, 0.0], vec![0.0, 3.0]];
        let gram = build_gram(&spec, &pts).unwrap();
        assert_eq!(gram.at(0, 0), 4.0 + 1.0);
        assert_eq!(gram.at(1, 1), 9.0 + 1.0);
        assert_eq!(gram.at(0, 1), 0.0);
    }

    #[test]
    fn duplicated_point_gives_rank_one_gram() {
        let spec = KernelSpec::hard_margin(KernelFamily::Gaussian { gamma: 1.0 }).unwrap();
        let p = vec![0.4, 0.7];
        let gram = build_gram(&spec, &[p.clone(), p]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(gram.at(i, j), 1.0);
            }
        }
    }

    #[test]
    fn cross_gram_ignores_diagonal_offset() {
        let spec = KernelSpec::new(KernelFamily::Linear, 1.0).unwrap();
        let train = vec![vec![1.0, 2.0]];
        // Query equals the training point in value; its entry is the base value.
        let cg = cross_gram(&spec, &train, &train).unwrap();
        assert_eq!(cg.at(0, 0), 5.0);
        let gram = build_gram(&spec, &train).unwrap();
        assert_eq!(gram.at(0, 0), 6.0);
    }

    #[test]
    fn cross_gram_zero_query_gives_zero_column() {
        let spec = KernelSpec::hard_margin(KernelFamily::Linear).unwrap();
        let train = vec![vec![1.0, -2.0], vec![3.0, 4.0]];
        let query = vec![vec![0.0, 0.0]];
        let cg = cross_gram(&spec, &train, &query).unwrap();
        assert_eq!(cg.at(0, 0), 0.0);
        assert_eq!(cg.at(1, 0), 0.0);
    }

    #[test]
    fn cross_gram_single_pair_gaussian() {
        let gamma = 0.8;
        let spec = KernelSpec::hard_margin(KernelFamily::Gaussian { gamma }).unwrap();
        let train = vec![vec![1.0, 0.0]];
        let query = vec![vec![0.0, 1.0]];
        let cg = cross_gram(&spec, &train, &query).unwrap();
        let expected = (-gamma * 2.0).exp();
        assert!((cg.at(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn build_gram_rejects_empty_and_mismatched() {
        let spec = KernelSpec::hard_margin(KernelFamily::Linear).unwrap();
        assert!(matches!(build_gram(&spec, &[]), Err(Error::EmptyInput(_))));
        let pts = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(
            build_gram(&spec, &pts),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
