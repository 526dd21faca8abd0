use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use super::{dot, Dims, Mode, Storage, Tensor3, TensorOp};
use crate::error::{Error, Result};

/// Dense `l×m×n` tensor. Element `(i, j, k)` is stored at `i + l·(j + m·k)`,
/// so mode-1 fibres are contiguous and each frontal slice `A(:,:,k)` is a
/// column-major `l×m` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor3 {
    dims: Dims,
    data: Vec<f64>,
}

impl DenseTensor3 {
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match dims {dims} ({} entries)",
                data.len(),
                dims.len()
            )));
        }
        Ok(DenseTensor3 { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        DenseTensor3 {
            dims,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [l, m, n] = dims.0;
        let mut data = Vec::with_capacity(dims.len());
        for k in 0..n {
            for j in 0..m {
                for i in 0..l {
                    data.push(f(i, j, k));
                }
            }
        }
        DenseTensor3 { dims, data }
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        let [l, m, _] = self.dims.0;
        i + l * (j + m * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let o = self.offset(i, j, k);
        self.data[o] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Mode-1 fibre `A(:, j, k)`.
    pub fn fibre1(&self, j: usize, k: usize) -> &[f64] {
        let l = self.dims.0[0];
        let start = self.offset(0, j, k);
        &self.data[start..start + l]
    }

    /// Frontal slice `A(:,:,k)` as an `l×m` matrix view.
    pub fn frontal(&self, k: usize) -> DMatrixView<'_, f64> {
        let [l, m, _] = self.dims.0;
        DMatrixView::from_slice(&self.data[k * l * m..(k + 1) * l * m], l, m)
    }

    pub(crate) fn for_each_entry(&self, f: &mut dyn FnMut([usize; 3], f64)) {
        let [l, m, _] = self.dims.0;
        for (o, &v) in self.data.iter().enumerate() {
            let i = o % l;
            let j = (o / l) % m;
            let k = o / (l * m);
            f([i, j, k], v);
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> DenseTensor3 {
        DenseTensor3 {
            dims: self.dims,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self - other`; panics on mismatched dims.
    pub fn sub(&self, other: &DenseTensor3) -> DenseTensor3 {
        assert_eq!(self.dims, other.dims, "dims mismatch in subtraction");
        DenseTensor3 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Sub-block `A(0..l', 0..m', 0..n')`.
    pub fn leading_block(&self, dims: Dims) -> DenseTensor3 {
        DenseTensor3::from_fn(dims, |i, j, k| self.get(i, j, k))
    }

    /// Mode product with `matrix` (`rows × dims[mode]`), no checks.
    pub(crate) fn ttm_raw(&self, mode: Mode, matrix: &DMatrix<f64>) -> DenseTensor3 {
        let [l, m, n] = self.dims.0;
        let rows = matrix.nrows();
        let out_dims = self.dims.with(mode, rows);
        match mode {
            Mode::One => {
                let view = DMatrixView::from_slice(&self.data, l, m * n);
                let out = matrix * view;
                DenseTensor3 {
                    dims: out_dims,
                    data: out.as_slice().to_vec(),
                }
            }
            Mode::Two => {
                let mt = matrix.transpose();
                let mut data = Vec::with_capacity(out_dims.len());
                for k in 0..n {
                    let slice = self.frontal(k) * &mt;
                    data.extend_from_slice(slice.as_slice());
                }
                DenseTensor3 {
                    dims: out_dims,
                    data,
                }
            }
            Mode::Three => {
                let view = DMatrixView::from_slice(&self.data, l * m, n);
                let out = view * matrix.transpose();
                DenseTensor3 {
                    dims: out_dims,
                    data: out.as_slice().to_vec(),
                }
            }
        }
    }

    /// `A ×_mode x` as a matrix over the remaining modes (lower mode = rows).
    pub(crate) fn contract_vector(&self, mode: Mode, x: &[f64]) -> DMatrix<f64> {
        let [l, m, n] = self.dims.0;
        match mode {
            Mode::One => {
                let view = DMatrixView::from_slice(&self.data, l, m * n);
                let v = view.tr_mul(&DVector::from_column_slice(x));
                DMatrix::from_column_slice(m, n, v.as_slice())
            }
            Mode::Two => {
                let xv = DVector::from_column_slice(x);
                let mut out = DMatrix::zeros(l, n);
                for k in 0..n {
                    out.set_column(k, &(self.frontal(k) * &xv));
                }
                out
            }
            Mode::Three => {
                let view = DMatrixView::from_slice(&self.data, l * m, n);
                let v = view * DVector::from_column_slice(x);
                DMatrix::from_column_slice(l, m, v.as_slice())
            }
        }
    }
}

impl TensorOp for DenseTensor3 {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn tvv_raw(&self, free: Mode, x: &[f64], y: &[f64]) -> Vec<f64> {
        let [l, m, n] = self.dims.0;
        match free {
            Mode::One => {
                // x over mode 2, y over mode 3
                let mut out = vec![0.0; l];
                for (k, &yk) in y.iter().enumerate() {
                    if yk == 0.0 {
                        continue;
                    }
                    for (j, &xj) in x.iter().enumerate() {
                        let c = xj * yk;
                        if c == 0.0 {
                            continue;
                        }
                        for (o, a) in out.iter_mut().zip(self.fibre1(j, k)) {
                            *o += c * a;
                        }
                    }
                }
                out
            }
            Mode::Two => {
                // x over mode 1, y over mode 3
                let mut out = vec![0.0; m];
                for (k, &yk) in y.iter().enumerate() {
                    if yk == 0.0 {
                        continue;
                    }
                    for (j, o) in out.iter_mut().enumerate() {
                        *o += yk * dot(self.fibre1(j, k), x);
                    }
                }
                out
            }
            Mode::Three => {
                // x over mode 1, y over mode 2
                let mut out = vec![0.0; n];
                for (k, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, &yj) in y.iter().enumerate() {
                        if yj != 0.0 {
                            acc += yj * dot(self.fibre1(j, k), x);
                        }
                    }
                    *o = acc;
                }
                out
            }
        }
    }

    fn contract_one_raw(
        &self,
        mode: Mode,
        x: &[f64],
        left: &DMatrix<f64>,
        right: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let mat = self.contract_vector(mode, x);
        left.tr_mul(&(mat * right))
    }
}

impl Tensor3 for DenseTensor3 {
    fn storage(&self) -> Storage<'_> {
        Storage::Dense(self)
    }
}
