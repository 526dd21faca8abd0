//! Small dense linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The seeded generator used everywhere randomness is needed.
pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Uniformly distributed unit vector.
pub fn random_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = gaussian_vector(n, rng);
        let nv = norm(&v);
        if nv > 0.0 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Thin QR orthonormalization of the columns of `m` (assumed full column rank).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    m.clone().qr().q()
}

/// `rows × cols` matrix with orthonormal columns, Haar distributed.
pub fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(cols <= rows, "cannot fit {cols} orthonormal columns in R^{rows}");
    let g = gaussian_matrix(rows, cols, rng);
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..cols {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// The `p` leading eigenvectors of a symmetric matrix.
pub fn leading_eigvecs(m: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let (_, v) = sym_eigen_desc(m);
    v.columns(0, p).into_owned()
}

/// The `p` leading left singular vectors, through the Gram matrix of the
/// shorter side.
pub fn leading_left_singular(m: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    if m.nrows() <= m.ncols() {
        leading_eigvecs(&(m * m.transpose()), p)
    } else {
        let (values, vecs) = sym_eigen_desc(&m.tr_mul(m));
        let mut out = DMatrix::zeros(m.nrows(), p);
        for c in 0..p {
            let s = values[c].max(0.0).sqrt();
            if s > 0.0 {
                out.set_column(c, &(m * vecs.column(c) / s));
            }
        }
        // re-orthonormalize against roundoff and fill null directions
        complete_orthonormal(&out)
    }
}

/// Orthonormalizes the columns of `m` with two passes of Gram-Schmidt,
/// replacing numerically dependent columns by unit vectors orthogonal to
/// the previous ones.
pub fn complete_orthonormal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let mut q: DMatrix<f64> = DMatrix::zeros(rows, cols);
    let mut next_unit = 0;
    for c in 0..cols {
        let mut v: DVector<f64> = m.column(c).into_owned();
        let scale = v.norm();
        loop {
            for _ in 0..2 {
                for p in 0..c {
                    let h = q.column(p).dot(&v);
                    v.axpy(-h, &q.column(p), 1.0);
                }
            }
            let nv = v.norm();
            if nv > 1e-10 * scale.max(1e-300) && nv > 0.0 {
                q.set_column(c, &(v / nv));
                break;
            }
            v = DVector::zeros(rows);
            v[next_unit % rows] = 1.0;
            next_unit += 1;
        }
    }
    q
}

/// Maximum entry of `|QᵀQ − I|`.
pub fn orthonormality_deviation(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut dev: f64 = 0.0;
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            dev = dev.max((g[(r, c)] - target).abs());
        }
    }
    dev
}

/// Maximum off-diagonal entry of `|QᵀQ|`.
pub fn max_off_diagonal(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let mut dev: f64 = 0.0;
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            if r != c {
                dev = dev.max(g[(r, c)].abs());
            }
        }
    }
    dev
}

/// Sines of the principal angles between `span(a)` and `span(b)` (columns
/// need not be orthonormal), in descending order. When the dimensions
/// differ, the angles are those of the smaller subspace against the larger.
///
/// Computed as the singular values of `(I − Q_b Q_bᵀ) Q_a`, which stays
/// accurate for tiny angles where the cosine route does not.
pub fn principal_angle_sines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let (qa, qb) = {
        let qa = orthonormalize(a);
        let qb = orthonormalize(b);
        if qa.ncols() <= qb.ncols() {
            (qa, qb)
        } else {
            (qb, qa)
        }
    };
    if qa.ncols() == 0 {
        return Vec::new();
    }
    let proj = &qa - &qb * qb.tr_mul(&qa);
    let mut s: Vec<f64> = proj.singular_values().iter().map(|v| v.min(1.0)).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Largest principal angle in radians; 0 for identical spans.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    principal_angle_sines(a, b)
        .first()
        .map_or(0.0, |s| s.asin())
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

/// Flips column signs so each column's largest-magnitude entry is positive.
pub fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| {
            if v.abs() > acc.abs() {
                v
            } else {
                acc
            }
        });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn columns_to_matrix(rows: usize, columns: &[Vec<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, columns.len());
    for (c, v) in columns.iter().enumerate() {
        m.column_mut(c).copy_from_slice(v);
    }
    m
}
