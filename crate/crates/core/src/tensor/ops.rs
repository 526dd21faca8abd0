//! Checked multilinear primitives over either storage type.

use nalgebra::{DMatrix, DMatrixView, DVector};

use super::{dot, DenseTensor3, Dims, Mode, Storage, Tensor3, TensorOp};
use crate::error::{Error, Result};

/// Column-major (first index fastest) array of arbitrary order, used for the
/// 4-tensor produced by a single-mode contraction.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseArray {
    pub fn get(&self, index: &[usize]) -> f64 {
        let mut offset = 0;
        let mut stride = 1;
        for (&i, &d) in index.iter().zip(&self.shape) {
            offset += i * stride;
            stride *= d;
        }
        self.data[offset]
    }
}

/// Result of [`contracted_product`]; the order depends on how many modes are contracted.
#[derive(Clone, Debug, PartialEq)]
pub enum Contraction {
    Scalar(f64),
    Matrix(DMatrix<f64>),
    Tensor4(DenseArray),
}

fn check_len(context: &'static str, mode: Mode, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::mismatch(context, mode, expected, found));
    }
    Ok(())
}

fn check_dims(context: &'static str, a: Dims, b: Dims) -> Result<()> {
    for mode in Mode::ALL {
        check_len(context, mode, a[mode], b[mode])?;
    }
    Ok(())
}

/// Mode-`mode` product. With `transposed == false`, `matrix` is `p × dim` and
/// `b_{ijk} = Σ_α u_{iα} a_{αjk}` (for mode 1); with `transposed == true`,
/// `matrix` is `dim × p` and is applied as its transpose.
pub fn ttm<T: Tensor3 + ?Sized>(
    a: &T,
    matrix: &DMatrix<f64>,
    mode: Mode,
    transposed: bool,
) -> Result<DenseTensor3> {
    let dim = a.dims()[mode];
    let owned;
    let m = if transposed {
        check_len("ttm (transposed factor rows)", mode, dim, matrix.nrows())?;
        owned = matrix.transpose();
        &owned
    } else {
        check_len("ttm (factor columns)", mode, dim, matrix.ncols())?;
        matrix
    };
    Ok(match a.storage() {
        Storage::Dense(d) => d.ttm_raw(mode, m),
        Storage::Sparse(s) => s.ttm_raw(mode, m),
    })
}

/// Multiplication in every mode that has a factor. Modes commute; the
/// products are applied in the order that shrinks the tensor fastest.
pub fn ttm_multi<T: Tensor3 + ?Sized>(
    a: &T,
    factors: [Option<&DMatrix<f64>>; 3],
    transposed: bool,
) -> Result<DenseTensor3> {
    let dims = a.dims();
    let mut prepared: Vec<(Mode, DMatrix<f64>)> = Vec::new();
    for mode in Mode::ALL {
        if let Some(f) = factors[mode.index()] {
            let m = if transposed {
                check_len("ttm_multi (transposed factor rows)", mode, dims[mode], f.nrows())?;
                f.transpose()
            } else {
                check_len("ttm_multi (factor columns)", mode, dims[mode], f.ncols())?;
                f.clone()
            };
            prepared.push((mode, m));
        }
    }
    prepared.sort_by(|(ma, a), (mb, b)| {
        let ra = a.nrows() as f64 / dims[*ma].max(1) as f64;
        let rb = b.nrows() as f64 / dims[*mb].max(1) as f64;
        ra.total_cmp(&rb).then(ma.cmp(mb))
    });
    let mut iter = prepared.into_iter();
    let mut current = match iter.next() {
        None => return Ok(a.to_dense()),
        Some((mode, m)) => match a.storage() {
            Storage::Dense(d) => d.ttm_raw(mode, &m),
            Storage::Sparse(s) => s.ttm_raw(mode, &m),
        },
    };
    for (mode, m) in iter {
        current = current.ttm_raw(mode, &m);
    }
    Ok(current)
}

/// Tensor-vector-vector product: contracts `modes.0` with `x` and `modes.1`
/// with `y`; the result lives in the remaining mode.
pub fn tvv<T: TensorOp + ?Sized>(
    a: &T,
    modes: (Mode, Mode),
    x: &[f64],
    y: &[f64],
) -> Result<Vec<f64>> {
    let (mx, my) = modes;
    let free = Mode::remaining(mx, my).ok_or(Error::EqualModes(mx))?;
    let dims = a.dims();
    check_len("tvv", mx, dims[mx], x.len())?;
    check_len("tvv", my, dims[my], y.len())?;
    Ok(if mx < my {
        a.tvv_raw(free, x, y)
    } else {
        a.tvv_raw(free, y, x)
    })
}

/// `⟨A, B⟩ = Σ a_{αβγ} b_{αβγ}`; either argument may be sparse.
pub fn inner<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: Tensor3 + ?Sized,
    B: Tensor3 + ?Sized,
{
    check_dims("inner", a.dims(), b.dims())?;
    Ok(match (a.storage(), b.storage()) {
        (Storage::Dense(x), Storage::Dense(y)) => dot(x.data(), y.data()),
        (Storage::Sparse(s), Storage::Dense(d)) | (Storage::Dense(d), Storage::Sparse(s)) => {
            s.entries().map(|(i, j, k, v)| v * d.get(i, j, k)).sum()
        }
        (Storage::Sparse(x), Storage::Sparse(y)) => {
            // both sorted by (k, j, i): merge
            let (cx, cy) = (x.coords(), y.coords());
            let (vx, vy) = (x.values(), y.values());
            let key = |c: &[u32; 3]| (c[2], c[1], c[0]);
            let (mut p, mut q, mut acc) = (0, 0, 0.0);
            while p < cx.len() && q < cy.len() {
                match key(&cx[p]).cmp(&key(&cy[q])) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        acc += vx[p] * vy[q];
                        p += 1;
                        q += 1;
                    }
                }
            }
            acc
        }
    })
}

/// Frobenius norm `‖A‖ = ⟨A, A⟩^{1/2}`.
pub fn frob_norm<T: Tensor3 + ?Sized>(a: &T) -> f64 {
    a.norm_sq().sqrt()
}

/// Column index of `(p, q)` in a matricization whose remaining modes have
/// sizes `(dp, dq)`: the higher remaining mode varies fastest. With this
/// ordering `B⁽¹⁾ = U A⁽¹⁾ (V ⊗ W)ᵀ` holds with the standard Kronecker product.
#[inline]
fn column_of(p: usize, q: usize, dq: usize) -> usize {
    p * dq + q
}

/// Mode-`mode` matricization, a `dims[mode] × (product of the others)` matrix.
pub fn matricize<T: Tensor3 + ?Sized>(a: &T, mode: Mode) -> DMatrix<f64> {
    let dims = a.dims();
    let (p, q) = mode.others();
    let cols = dims[p] * dims[q];
    let mut out = DMatrix::zeros(dims[mode], cols);
    a.for_each_entry(&mut |idx, v| {
        let c = column_of(idx[p.index()], idx[q.index()], dims[q]);
        out[(idx[mode.index()], c)] = v;
    });
    out
}

/// Inverse of [`matricize`].
pub fn dematricize(matrix: &DMatrix<f64>, dims: Dims, mode: Mode) -> Result<DenseTensor3> {
    let (p, q) = mode.others();
    check_len("dematricize (rows)", mode, dims[mode], matrix.nrows())?;
    if matrix.ncols() != dims[p] * dims[q] {
        return Err(Error::InvalidArgument(format!(
            "matricization has {} columns, dims {dims} need {}",
            matrix.ncols(),
            dims[p] * dims[q]
        )));
    }
    Ok(DenseTensor3::from_fn(dims, |i, j, k| {
        let idx = [i, j, k];
        let c = column_of(idx[p.index()], idx[q.index()], dims[q]);
        matrix[(idx[mode.index()], c)]
    }))
}

/// Contracted product `⟨A, B⟩_S` over the modes in `contracted` (the same
/// modes in both arguments). The free modes of `A` come first in the result,
/// followed by those of `B`.
pub fn contracted_product<A, B>(a: &A, b: &B, contracted: &[Mode]) -> Result<Contraction>
where
    A: Tensor3 + ?Sized,
    B: Tensor3 + ?Sized,
{
    let mut set: Vec<Mode> = contracted.to_vec();
    set.sort();
    set.dedup();
    if set.is_empty() || set.len() != contracted.len() {
        return Err(Error::InvalidArgument(
            "contracted modes must be a non-empty set of distinct modes".into(),
        ));
    }
    let (da, db) = (a.dims(), b.dims());
    for &m in &set {
        check_len("contracted_product", m, da[m], db[m])?;
    }
    let free: Vec<Mode> = Mode::ALL.into_iter().filter(|m| !set.contains(m)).collect();

    // Gram shortcut: ⟨A,A⟩_{-k} for identical arguments.
    if free.len() == 1 && std::ptr::eq(a as *const A as *const u8, b as *const B as *const u8) {
        return Ok(Contraction::Matrix(gram(a, free[0])));
    }

    let unfold = |t: &dyn Fn(&mut dyn FnMut([usize; 3], f64)), dims: Dims| {
        let rows: usize = free.iter().map(|&m| dims[m]).product();
        let cols: usize = set.iter().map(|&m| dims[m]).product();
        let mut mat = DMatrix::zeros(rows, cols);
        t(&mut |idx, v| {
            let (mut r, mut rs) = (0, 1);
            for &m in &free {
                r += idx[m.index()] * rs;
                rs *= dims[m];
            }
            let (mut c, mut cs) = (0, 1);
            for &m in &set {
                c += idx[m.index()] * cs;
                cs *= dims[m];
            }
            mat[(r, c)] = v;
        });
        mat
    };
    let ma = unfold(&|f| a.for_each_entry(f), da);
    let mb = unfold(&|f| b.for_each_entry(f), db);
    let prod = &ma * mb.transpose();
    Ok(match free.len() {
        0 => Contraction::Scalar(prod[(0, 0)]),
        1 => Contraction::Matrix(prod),
        _ => {
            let mut shape: Vec<usize> = free.iter().map(|&m| da[m]).collect();
            shape.extend(free.iter().map(|&m| db[m]));
            Contraction::Tensor4(DenseArray {
                shape,
                data: prod.as_slice().to_vec(),
            })
        }
    })
}

/// Explicit mode Gram matrix `⟨A, A⟩_{-mode} = A⁽ᵐᵒᵈᵉ⁾ (A⁽ᵐᵒᵈᵉ⁾)ᵀ`.
pub fn gram<T: Tensor3 + ?Sized>(a: &T, mode: Mode) -> DMatrix<f64> {
    match a.storage() {
        Storage::Sparse(s) => s.gram_raw(mode),
        Storage::Dense(d) => {
            let [l, m, n] = d.dims().0;
            match mode {
                Mode::One => {
                    let v = DMatrixView::from_slice(d.data(), l, m * n);
                    &v * v.transpose()
                }
                Mode::Two => {
                    let mut g = DMatrix::zeros(m, m);
                    for k in 0..n {
                        let s = d.frontal(k);
                        g += s.tr_mul(&s);
                    }
                    g
                }
                Mode::Three => {
                    let v = DMatrixView::from_slice(d.data(), l * m, n);
                    v.tr_mul(&v)
                }
            }
        }
    }
}

/// `⟨A, A⟩_{-mode} · u` computed as `Σ_i A_i A_iᵀ u` over slices/fibres,
/// never forming the Gram matrix. Cost is linear in the stored entries.
pub fn gram_matvec<T: Tensor3 + ?Sized>(a: &T, mode: Mode, u: &[f64]) -> Result<Vec<f64>> {
    let dims = a.dims();
    check_len("gram_matvec", mode, dims[mode], u.len())?;
    Ok(match a.storage() {
        Storage::Sparse(s) => s.gram_matvec_raw(mode, u),
        Storage::Dense(d) => {
            let [l, m, n] = dims.0;
            let z = d.contract_vector(mode, u);
            match mode {
                Mode::One => {
                    let v = DMatrixView::from_slice(d.data(), l, m * n);
                    (v * DVector::from_column_slice(z.as_slice())).as_slice().to_vec()
                }
                Mode::Two => {
                    let mut y = DVector::zeros(m);
                    for k in 0..n {
                        y += d.frontal(k).tr_mul(&z.column(k));
                    }
                    y.as_slice().to_vec()
                }
                Mode::Three => {
                    let v = DMatrixView::from_slice(d.data(), l * m, n);
                    v.tr_mul(&DVector::from_column_slice(z.as_slice()))
                        .as_slice()
                        .to_vec()
                }
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{DuplicatePolicy, SparseTensor3};

    fn sample() -> DenseTensor3 {
        // A(:,:,1) = [1 2; 3 4], A(:,:,2) = [5 6; 7 8]
        let slices = [[[1.0, 2.0], [3.0, 4.0]], [[5.0, 6.0], [7.0, 8.0]]];
        DenseTensor3::from_fn(Dims::new(2, 2, 2), |i, j, k| slices[k][i][j])
    }

    fn lcg_tensor(dims: Dims, seed: u64) -> DenseTensor3 {
        let mut s = seed;
        DenseTensor3::from_fn(dims, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn ttm_identity_and_zero() {
        let a = lcg_tensor(Dims::new(3, 4, 5), 1);
        let id = DMatrix::identity(3, 3);
        assert_eq!(ttm(&a, &id, Mode::One, false).unwrap(), a);
        let z = ttm(&a, &DMatrix::zeros(2, 4), Mode::Two, false).unwrap();
        assert_eq!(z.dims(), Dims::new(3, 2, 5));
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ttm_column_sums() {
        // brute force over the defining sum b_{1jk} = Σ_α a_{αjk}
        let a = sample();
        let ones = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = ttm(&a, &ones, Mode::One, false).unwrap();
        assert_eq!(b.dims(), Dims::new(1, 2, 2));
        for j in 0..2 {
            for k in 0..2 {
                let expected: f64 = (0..2).map(|al| a.get(al, j, k)).sum();
                assert_eq!(b.get(0, j, k), expected);
            }
        }
        assert_eq!(b.data(), &[4.0, 6.0, 12.0, 14.0]);
    }

    #[test]
    fn ttm_reports_mismatch() {
        let a = sample();
        let err = ttm(&a, &DMatrix::zeros(2, 3), Mode::Two, false).unwrap_err();
        match err {
            Error::DimensionMismatch {
                mode,
                expected,
                found,
                ..
            } => {
                assert_eq!((mode, expected, found), (Mode::Two, 2, 3));
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(ttm(&a, &DMatrix::zeros(3, 2), Mode::Two, true).is_err());
    }

    #[test]
    fn tvv_selects_fibres() {
        let a = sample();
        let e1 = [1.0, 0.0];
        assert_eq!(tvv(&a, (Mode::One, Mode::Two), &e1, &e1).unwrap(), vec![1.0, 5.0]);
        assert_eq!(tvv(&a, (Mode::Two, Mode::Three), &e1, &e1).unwrap(), vec![1.0, 3.0]);
        // argument order follows the modes
        let x = [0.3, -1.2];
        let y = [2.0, 0.5];
        assert_eq!(
            tvv(&a, (Mode::Three, Mode::One), &y, &x).unwrap(),
            tvv(&a, (Mode::One, Mode::Three), &x, &y).unwrap()
        );
    }

    #[test]
    fn tvv_errors() {
        let a = sample();
        assert!(matches!(
            tvv(&a, (Mode::One, Mode::One), &[1.0, 0.0], &[1.0, 0.0]),
            Err(Error::EqualModes(Mode::One))
        ));
        assert!(tvv(&a, (Mode::One, Mode::Two), &[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn inner_and_norm_of_sample() {
        let a = sample();
        assert_eq!(inner(&a, &a).unwrap(), 204.0);
        assert_eq!(frob_norm(&a), 204f64.sqrt());
        let z = DenseTensor3::zeros(a.dims());
        assert_eq!(inner(&a, &z).unwrap(), 0.0);
        assert_eq!(frob_norm(&DenseTensor3::zeros(Dims::new(4, 4, 4))), 0.0);
        assert!(inner(&a, &DenseTensor3::zeros(Dims::new(2, 2, 3))).is_err());
    }

    #[test]
    fn matricize_singleton() {
        let a = DenseTensor3::new(Dims::new(1, 1, 1), vec![3.5]).unwrap();
        for mode in Mode::ALL {
            let m = matricize(&a, mode);
            assert_eq!((m.nrows(), m.ncols(), m[(0, 0)]), (1, 1, 3.5));
        }
    }

    #[test]
    fn contracted_product_shapes() {
        let a = lcg_tensor(Dims::new(2, 3, 4), 5);
        let b = lcg_tensor(Dims::new(2, 5, 4), 6);
        match contracted_product(&a, &b, &[Mode::One]).unwrap() {
            Contraction::Tensor4(t) => {
                assert_eq!(t.shape, vec![3, 4, 5, 4]);
                let expected: f64 = (0..2).map(|al| a.get(al, 1, 2) * b.get(al, 4, 3)).sum();
                assert!((t.get(&[1, 2, 4, 3]) - expected).abs() < 1e-14);
            }
            other => panic!("expected 4-tensor, got {other:?}"),
        }
        match contracted_product(&a, &b, &[Mode::One, Mode::Three]).unwrap() {
            Contraction::Matrix(m) => assert_eq!((m.nrows(), m.ncols()), (3, 5)),
            other => panic!("expected matrix, got {other:?}"),
        }
        assert!(contracted_product(&a, &b, &[Mode::Two]).is_err());
        assert!(contracted_product(&a, &b, &[]).is_err());
    }

    #[test]
    fn sparse_single_entry_gram() {
        let s = SparseTensor3::from_triplets(
            Dims::new(2, 2, 2),
            vec![(0, 0, 0, 2.0)],
            DuplicatePolicy::Sum,
        )
        .unwrap();
        assert_eq!(gram_matvec(&s, Mode::One, &[1.0, 0.0]).unwrap(), vec![4.0, 0.0]);
        assert_eq!(gram_matvec(&s, Mode::Three, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }
}
