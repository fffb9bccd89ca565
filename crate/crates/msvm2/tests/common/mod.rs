//! Shared test oracles, all independent of the library's solver paths:
//! a dense generic active-set QP solver (nalgebra least-squares KKT steps),
//! the dense Hessian of the training dual, a binary 2-norm SVM reference,
//! a brute-force enclosing ball, and deterministic data generators.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use msvm2::dataset::Dataset;
use msvm2::kernel::{build_gram, GramMatrix, KernelFamily, KernelSpec};

/// Generic dense convex QP: maximize `-1/2 x'Px + q'x` subject to `Ax = b`
/// and `x >= 0`, starting from a feasible `x0`. Textbook active-set method;
/// each equality-constrained step solves the KKT system by SVD least squares,
/// so redundant equality rows are fine.
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DenseQp {
    pub fn solve(&self, x0: &[f64]) -> Vec<f64> {
        let n = self.q.len();
        let rows = self.a.nrows();
        assert_eq!(x0.len(), n);
        let mut x = DVector::from_column_slice(x0);
        let scale = 1.0 + self.q.amax().max(self.p.amax());
        let mut working: Vec<bool> = (0..n).map(|j| x[j] == 0.0).collect();

        for _iter in 0..200 * (n + 1) {
            let w_indices: Vec<usize> = (0..n).filter(|&j| working[j]).collect();
            let nw = w_indices.len();
            let dim = n + rows + nw;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            kkt.view_mut((0, 0), (n, n)).copy_from(&self.p);
            kkt.view_mut((0, n), (n, rows)).copy_from(&self.a.transpose());
            kkt.view_mut((n, 0), (rows, n)).copy_from(&self.a);
            for (r, &j) in w_indices.iter().enumerate() {
                kkt[(j, n + rows + r)] = -1.0;
                kkt[(n + rows + r, j)] = 1.0;
            }
            for i in 0..n {
                rhs[i] = self.q[i];
            }
            for r in 0..rows {
                rhs[n + r] = self.b[r];
            }
            let svd = kkt.svd(true, true);
            let sol = svd
                .solve(&rhs, 1e-12 * scale)
                .expect("oracle KKT solve failed");
            let s = sol.rows(0, n).into_owned();
            let d = &s - &x;

            if d.amax() <= 1e-10 * scale * (1.0 + x.amax()) {
                // Multiplier check on working bounds; smallest index first
                // (Bland-style) to rule out cycling.
                let mut release: Option<usize> = None;
                for (r, &j) in w_indices.iter().enumerate() {
                    let mu = sol[n + rows + r];
                    if mu < -1e-8 * scale {
                        release = Some(j);
                        break;
                    }
                }
                match release {
                    None => return x.as_slice().to_vec(),
                    Some(j) => {
                        working[j] = false;
                        continue;
                    }
                }
            }

            // Longest feasible step toward the face optimum. Direction
            // components below solver noise do not count as decreasing.
            let noise = 1e-12 * scale * (1.0 + x.amax());
            let mut t_max = 1.0_f64;
            let mut blocker: Option<usize> = None;
            for j in 0..n {
                if !working[j] && d[j] < -noise {
                    let t = x[j] / (-d[j]);
                    if t < t_max {
                        t_max = t;
                        blocker = Some(j);
                    }
                }
            }
            x += d * t_max;
            for j in 0..n {
                if x[j] < 0.0 {
                    x[j] = 0.0;
                }
            }
            if let Some(j) = blocker {
                x[j] = 0.0;
                working[j] = true;
            }
        }
        panic!("dense QP oracle did not terminate");
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        -0.5 * (xv.transpose() * &self.p * &xv)[(0, 0)] + self.q.dot(&xv)
    }
}

/// Index map for the free dual coordinates (k != y_i) of the training dual.
pub struct FreeIndex {
    pub pairs: Vec<(usize, usize)>,
}

impl FreeIndex {
    pub fn new(labels: &[usize], q: usize) -> Self {
        let mut pairs = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            for k in 0..q {
                if k != y {
                    pairs.push((i, k));
                }
            }
        }
        FreeIndex { pairs }
    }

    pub fn expand(&self, x: &[f64], m: usize, q: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; m * q];
        for (v, &(i, k)) in x.iter().zip(&self.pairs) {
            alpha[i * q + k] = *v;
        }
        alpha
    }
}

/// Dense QP for the training dual on the free coordinates: the Hessian is
/// built entry by entry from its general term, never through the library's
/// factored product.
pub fn msvm_dual_qp(gram: &GramMatrix, labels: &[usize], q: usize) -> (DenseQp, FreeIndex) {
    let index = FreeIndex::new(labels, q);
    let n = index.pairs.len();
    let inv_q = 1.0 / q as f64;
    let mut p = DMatrix::zeros(n, n);
    for a in 0..n {
        let (i, k) = index.pairs[a];
        for bb in 0..n {
            let (j, l) = index.pairs[bb];
            let delta = if k == l { 1.0 } else { 0.0 };
            p[(a, bb)] = (delta - inv_q) * gram.at(i, j);
        }
    }
    let qv = DVector::from_element(n, 1.0 / (q - 1) as f64);
    let mut a_eq = DMatrix::zeros(q, n);
    for (col, &(_, l)) in index.pairs.iter().enumerate() {
        for k in 0..q {
            let delta = if l == k { 1.0 } else { 0.0 };
            a_eq[(k, col)] = delta - inv_q;
        }
    }
    let b_eq = DVector::zeros(q);
    (DenseQp { p, q: qv, a: a_eq, b: b_eq }, index)
}

/// Full-vector alpha of the training dual, solved by the dense oracle.
pub fn oracle_alpha(gram: &GramMatrix, labels: &[usize], q: usize) -> (Vec<f64>, f64) {
    let (qp, index) = msvm_dual_qp(gram, labels, q);
    let x0 = vec![0.0; index.pairs.len()];
    let x = qp.solve(&x0);
    let objective = qp.objective(&x);
    (index.expand(&x, labels.len(), q), objective)
}

/// Dense `alpha' H alpha` evaluated entry by entry over the full vector.
pub fn dense_quadratic_form(gram: &GramMatrix, q: usize, alpha: &[f64]) -> f64 {
    let m = gram.order();
    let inv_q = 1.0 / q as f64;
    let mut total = 0.0;
    for i in 0..m {
        for k in 0..q {
            for j in 0..m {
                for l in 0..q {
                    let delta = if k == l { 1.0 } else { 0.0 };
                    total += alpha[i * q + k] * alpha[j * q + l] * (delta - inv_q) * gram.at(i, j);
                }
            }
        }
    }
    total
}

/// Dense `H alpha` over the full vector, entry by entry.
pub fn dense_h_product(gram: &GramMatrix, q: usize, alpha: &[f64]) -> Vec<f64> {
    let m = gram.order();
    let inv_q = 1.0 / q as f64;
    let mut out = vec![0.0; m * q];
    for i in 0..m {
        for k in 0..q {
            let mut s = 0.0;
            for j in 0..m {
                for l in 0..q {
                    let delta = if k == l { 1.0 } else { 0.0 };
                    s += (delta - inv_q) * gram.at(i, j) * alpha[j * q + l];
                }
            }
            out[i * q + k] = s;
        }
    }
    out
}

/// Reference binary 2-norm SVM trained by the dense QP oracle. Classes are
/// mapped to signs +1 (index 0) and -1 (index 1).
pub struct BinarySvmOracle {
    points: Vec<Vec<f64>>,
    signs: Vec<f64>,
    coefs: Vec<f64>,
    bias: f64,
    family: KernelFamily,
}

impl BinarySvmOracle {
    pub fn train(points: &[Vec<f64>], labels: &[usize], family: KernelFamily, c: f64) -> Self {
        assert!(labels.iter().all(|&y| y < 2));
        let signs: Vec<f64> = labels.iter().map(|&y| if y == 0 { 1.0 } else { -1.0 }).collect();
        let spec = KernelSpec::soft_margin(family.clone(), c).unwrap();
        let gram = build_gram(&spec, points).unwrap();
        let m = points.len();
        let mut p = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                p[(i, j)] = signs[i] * signs[j] * gram.at(i, j);
            }
        }
        let qv = DVector::from_element(m, 1.0);
        let a_eq = DMatrix::from_iterator(1, m, signs.iter().cloned());
        let b_eq = DVector::zeros(1);
        let qp = DenseQp { p, q: qv, a: a_eq, b: b_eq };
        let coefs = qp.solve(&vec![0.0; m]);

        // Bias from support vectors: sign_i * f'(x_i) = 1 on the offset kernel.
        let max_c = coefs.iter().cloned().fold(0.0_f64, f64::max);
        let mut bias_sum = 0.0;
        let mut bias_count = 0usize;
        for i in 0..m {
            if coefs[i] > 1e-7 * max_c && coefs[i] > 0.0 {
                let mut f = 0.0;
                for j in 0..m {
                    f += coefs[j] * signs[j] * gram.at(j, i);
                }
                bias_sum += signs[i] - f;
                bias_count += 1;
            }
        }
        let bias = if bias_count > 0 { bias_sum / bias_count as f64 } else { 0.0 };
        BinarySvmOracle { points: points.to_vec(), signs, coefs, bias, family }
    }

    /// Decision value through the base kernel.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let spec = KernelSpec::hard_margin(self.family.clone()).unwrap();
        let mut f = self.bias;
        for (i, p) in self.points.iter().enumerate() {
            f += self.coefs[i] * self.signs[i] * spec.eval(p, x).unwrap();
        }
        f
    }

    /// Predicted class index: 0 for positive decision, 1 for negative.
    pub fn predict(&self, x: &[f64]) -> Option<usize> {
        let f = self.decision(x);
        if f > 0.0 {
            Some(0)
        } else if f < 0.0 {
            Some(1)
        } else {
            None
        }
    }

    /// Dual coefficient per point (the active inequality multiplier).
    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }
}

/// Smallest circle containing 2-D points, by exhaustive search over support
/// pairs and triples. Independent geometric route for linear-kernel balls.
pub fn brute_force_circle(points: &[Vec<f64>]) -> (f64, [f64; 2]) {
    assert!(points.iter().all(|p| p.len() == 2));
    let contains = |cx: f64, cy: f64, r_sq: f64| {
        points
            .iter()
            .all(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2) <= r_sq + 1e-9 * (1.0 + r_sq))
    };
    let mut best: Option<(f64, [f64; 2])> = None;
    let mut consider = |cx: f64, cy: f64, r_sq: f64| {
        if contains(cx, cy, r_sq) && best.map_or(true, |(b, _)| r_sq < b) {
            best = Some((r_sq, [cx, cy]));
        }
    };
    let n = points.len();
    if n == 1 {
        return (0.0, [points[0][0], points[0][1]]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let cx = (points[i][0] + points[j][0]) / 2.0;
            let cy = (points[i][1] + points[j][1]) / 2.0;
            let r_sq = (points[i][0] - cx).powi(2) + (points[i][1] - cy).powi(2);
            consider(cx, cy, r_sq);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                if let Some((cx, cy)) = circumcenter(&points[i], &points[j], &points[k]) {
                    let r_sq = (points[i][0] - cx).powi(2) + (points[i][1] - cy).powi(2);
                    consider(cx, cy, r_sq);
                }
            }
        }
    }
    let (r_sq, c) = best.expect("no covering circle found");
    (r_sq, c)
}

fn circumcenter(a: &[f64], b: &[f64], c: &[f64]) -> Option<(f64, f64)> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-12 {
        return None;
    }
    let a2 = a[0] * a[0] + a[1] * a[1];
    let b2 = b[0] * b[0] + b[1] * b[1];
    let c2 = c[0] * c[0] + c[1] * c[1];
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    Some((ux, uy))
}

/// Standard normal via Box-Muller on a seeded generator.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Gaussian blobs: `per_class` points around each of `q` well-separated
/// centers. Deterministic in the seed.
pub fn gaussian_blobs(seed: u64, q: usize, per_class: usize, dim: usize, spread: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(q);
    for k in 0..q {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / q as f64;
        let mut c = vec![0.0; dim];
        c[0] = 3.0 * angle.cos();
        c[1 % dim] += 3.0 * angle.sin();
        centers.push(c);
    }
    let mut points = Vec::with_capacity(q * per_class);
    let mut labels = Vec::with_capacity(q * per_class);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let p: Vec<f64> = center.iter().map(|&c| c + spread * normal(&mut rng)).collect();
            points.push(p);
            labels.push(format!("c{k}"));
        }
    }
    Dataset::from_parts(points, labels).unwrap()
}

/// Uniformly random labeled points in `[-1, 1]^dim`; labels may leave some
/// categories empty, which the dual must tolerate.
pub fn random_instance(
    seed: u64,
    q: usize,
    m: usize,
    dim: usize,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..q)).collect();
    (points, labels)
}

/// Dataset wrapper for random instances (labels become "c<k>").
pub fn random_dataset(seed: u64, q: usize, m: usize, dim: usize) -> Dataset {
    let (points, labels) = random_instance(seed, q, m, dim);
    Dataset::from_parts(points, labels.iter().map(|k| format!("c{k}")).collect()).unwrap()
}

/// Relative agreement helper.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

