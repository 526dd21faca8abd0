//! Matrix Krylov procedures: Arnoldi, Golub-Kahan bidiagonalization and
//! symmetric Lanczos. All of them re-orthogonalize fully.

use nalgebra::DMatrix;

use super::basis::OrthoBasis;
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::tensor::{dot, Mode};

/// A square linear map given only through its action.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&mut self, x: &[f64]) -> Vec<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&mut self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        for (c, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                for (yr, a) in y.iter_mut().zip(self.column(c).iter()) {
                    *yr += xc * a;
                }
            }
        }
        y
    }
}

/// Adapts a closure into a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64]) -> Vec<f64>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F: FnMut(&[f64]) -> Vec<f64>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&mut self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

fn check_unit(v: &[f64], what: &str) -> Result<()> {
    let n = norm(v);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidArgument(format!(
            "{what} must have unit norm (got {n})"
        )));
    }
    Ok(())
}

/// `A U_j = U_{j+1} H_j`, or `A U_j = U_j H_j` (square `H`) after a breakdown.
#[derive(Clone, Debug)]
pub struct ArnoldiResult {
    pub u: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Step at which the new vector vanished, if any.
    pub breakdown: Option<usize>,
}

pub fn arnoldi<O: LinearOperator + ?Sized>(
    op: &mut O,
    u1: &[f64],
    k: usize,
    tol: f64,
) -> Result<ArnoldiResult> {
    let n = op.dim();
    if u1.len() != n {
        return Err(Error::mismatch("arnoldi start", Mode::One, n, u1.len()));
    }
    check_unit(u1, "start vector")?;
    let mut basis = OrthoBasis::new(Mode::One, n);
    basis.push_unchecked(u1);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut breakdown = None;
    for i in 0..k {
        let w = op.apply(basis.vector(i));
        let out = basis.orthogonalize_append(&w, tol)?;
        let mut h = out.coeffs;
        if out.appended {
            h.push(out.norm);
            cols.push(h);
        } else {
            cols.push(h);
            breakdown = Some(i + 1);
            break;
        }
    }
    let j = cols.len();
    let rows = basis.len();
    let mut h = DMatrix::zeros(rows, j);
    for (c, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            h[(r, c)] = v;
        }
    }
    Ok(ArnoldiResult {
        u: basis.matrix(),
        h,
        breakdown,
    })
}

/// Golub-Kahan bidiagonalization of a rectangular matrix:
/// `A V = U B` and `Aᵀ U_j = V B̂ᵀ`-style identities with `B` lower bidiagonal.
#[derive(Clone, Debug)]
pub struct GolubKahanResult {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// `(j+1) × j` lower bidiagonal matrix (square when the last `β` vanished).
    pub b: DMatrix<f64>,
    pub breakdown: Option<usize>,
}

pub fn golub_kahan(a: &DMatrix<f64>, u1: &[f64], k: usize, tol: f64) -> Result<GolubKahanResult> {
    let (m, n) = a.shape();
    if u1.len() != m {
        return Err(Error::mismatch("golub_kahan start", Mode::One, m, u1.len()));
    }
    check_unit(u1, "start vector")?;
    let mut ub = OrthoBasis::new(Mode::One, m);
    let mut vb = OrthoBasis::new(Mode::Two, n);
    ub.push_unchecked(u1);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut breakdown = None;
    for i in 0..k {
        // α_i v_i = Aᵀ u_i − β_i v_{i−1}
        let z = (a.tr_mul(&nalgebra::DVector::from_column_slice(ub.vector(i))))
            .as_slice()
            .to_vec();
        let out = vb.orthogonalize_append(&z, tol)?;
        if !out.appended {
            breakdown = Some(i + 1);
            break;
        }
        alphas.push(out.norm);
        // β_{i+1} u_{i+1} = A v_i − α_i u_i
        let y = (a * nalgebra::DVector::from_column_slice(vb.vector(i)))
            .as_slice()
            .to_vec();
        let out = ub.orthogonalize_append(&y, tol)?;
        if !out.appended {
            breakdown = Some(i + 1);
            break;
        }
        betas.push(out.norm);
    }
    let j = alphas.len();
    let rows = ub.len();
    let mut b = DMatrix::zeros(rows, j);
    for c in 0..j {
        b[(c, c)] = alphas[c];
        if c < betas.len() {
            b[(c + 1, c)] = betas[c];
        }
    }
    Ok(GolubKahanResult {
        u: ub.matrix(),
        v: vb.matrix(),
        b,
        breakdown,
    })
}

/// Symmetric Lanczos with full re-orthogonalization.
#[derive(Clone, Debug)]
pub struct LanczosResult {
    pub basis: OrthoBasis,
    /// Diagonal of the tridiagonal `T_j`.
    pub alpha: Vec<f64>,
    /// Off-diagonal of `T_j` (length `j − 1`).
    pub beta: Vec<f64>,
    pub breakdown: Option<usize>,
    pub matvecs: usize,
}

impl LanczosResult {
    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let j = self.alpha.len();
        let mut t = DMatrix::zeros(j, j);
        for i in 0..j {
            t[(i, i)] = self.alpha[i];
            if i + 1 < j {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        t
    }
}

/// Runs at most `k` matvecs, producing at most `k` basis vectors. A
/// breakdown (invariant subspace) is declared when the new residual is at
/// most `tol` times the largest `‖A q_i‖` seen so far.
pub fn lanczos<O: LinearOperator + ?Sized>(
    op: &mut O,
    mode: Mode,
    start: &[f64],
    k: usize,
    tol: f64,
) -> Result<LanczosResult> {
    let n = op.dim();
    if start.len() != n {
        return Err(Error::mismatch("lanczos start", mode, n, start.len()));
    }
    check_unit(start, "start vector")?;
    let mut basis = OrthoBasis::new(mode, n);
    basis.push_unchecked(start);
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut breakdown = None;
    let mut scale: f64 = 0.0;
    let mut matvecs = 0;
    for i in 0..k {
        let z = op.apply(basis.vector(i));
        matvecs += 1;
        scale = scale.max(norm(&z));
        alpha.push(dot(basis.vector(i), &z));
        if i + 1 == k || basis.is_full() {
            if basis.is_full() && i + 1 < k {
                breakdown = Some(i + 1);
            }
            break;
        }
        let out = basis.orthogonalize_append_with(&z, &[], tol, scale)?;
        if !out.appended {
            breakdown = Some(i + 1);
            break;
        }
        beta.push(out.norm);
    }
    Ok(LanczosResult {
        basis,
        alpha,
        beta,
        breakdown,
        matvecs,
    })
}
