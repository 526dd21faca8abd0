//! Third-order tensor storage and multilinear algebra.
//!
//! Two storage types are provided: [`DenseTensor3`] (contiguous, mode-1 index
//! fastest) and [`SparseTensor3`] (coordinate list sorted by `(k, j, i)` with a
//! per-frontal-slice index). Both implement [`TensorOp`], the minimal interface
//! the Krylov recursions need, and [`Tensor3`], which adds entry access.
//!
//! Indices are 0-based throughout the Rust API. The coordinate text format in
//! [`crate::io`] is 1-based.

mod dense;
mod ops;
mod sparse;

use std::fmt;
use std::ops::Index;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use dense::DenseTensor3;
pub use ops::{
    contracted_product, dematricize, frob_norm, gram, gram_matvec, inner, matricize, ttm,
    ttm_multi, tvv, Contraction, DenseArray,
};
pub use sparse::{DuplicatePolicy, SparseTensor3};

/// One of the three index directions of a third-order tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    /// 0-based position.
    pub fn index(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Mode> {
        Mode::ALL.get(index).copied()
    }

    /// Parses a 1-based mode number, as used on the CLI.
    pub fn from_number(number: usize) -> Option<Mode> {
        number.checked_sub(1).and_then(Mode::from_index)
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }

    /// The two remaining modes, in increasing order.
    pub fn others(self) -> (Mode, Mode) {
        match self {
            Mode::One => (Mode::Two, Mode::Three),
            Mode::Two => (Mode::One, Mode::Three),
            Mode::Three => (Mode::One, Mode::Two),
        }
    }

    /// The mode not contained in the pair `(a, b)`; `None` if `a == b`.
    pub fn remaining(a: Mode, b: Mode) -> Option<Mode> {
        if a == b {
            return None;
        }
        Mode::ALL.into_iter().find(|&m| m != a && m != b)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Dimensions `(l, m, n)` of a third-order tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(l: usize, m: usize, n: usize) -> Self {
        Dims([l, m, n])
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimensions with `mode` replaced by `size`.
    pub fn with(&self, mode: Mode, size: usize) -> Dims {
        let mut d = self.0;
        d[mode.index()] = size;
        Dims(d)
    }

    pub fn min(&self) -> usize {
        self.0.iter().copied().min().unwrap_or(0)
    }
}

impl Index<Mode> for Dims {
    type Output = usize;

    fn index(&self, mode: Mode) -> &usize {
        &self.0[mode.index()]
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.0[0], self.0[1], self.0[2])
    }
}

/// The operations a Krylov recursion needs from a tensor.
///
/// Implemented by stored tensors and by implicit operators such as the
/// projected tensors of the optimized recursion, which are never formed.
/// The `_raw` methods assume conforming arguments; the checked entry points
/// live in [`tvv`] and friends.
pub trait TensorOp {
    fn dims(&self) -> Dims;

    /// Contracts the two modes other than `free`. `x` belongs to the lower of
    /// those modes and `y` to the higher one. The result lives in `free`.
    fn tvv_raw(&self, free: Mode, x: &[f64], y: &[f64]) -> Vec<f64>;

    /// `leftᵀ · (A ×_mode x) · right`, where `left` acts on the lower of the
    /// two remaining modes and `right` on the higher one.
    fn contract_one_raw(
        &self,
        mode: Mode,
        x: &[f64],
        left: &DMatrix<f64>,
        right: &DMatrix<f64>,
    ) -> DMatrix<f64>;
}

/// Borrowed view of the concrete storage behind a [`Tensor3`].
#[derive(Clone, Copy, Debug)]
pub enum Storage<'a> {
    Dense(&'a DenseTensor3),
    Sparse(&'a SparseTensor3),
}

/// A stored third-order tensor.
pub trait Tensor3: TensorOp {
    fn storage(&self) -> Storage<'_>;

    /// Number of stored entries (`l·m·n` for dense storage).
    fn nnz(&self) -> usize {
        match self.storage() {
            Storage::Dense(d) => d.data().len(),
            Storage::Sparse(s) => s.nnz(),
        }
    }

    /// Visits every stored entry as `([i, j, k], value)`.
    fn for_each_entry(&self, f: &mut dyn FnMut([usize; 3], f64)) {
        match self.storage() {
            Storage::Dense(d) => d.for_each_entry(f),
            Storage::Sparse(s) => s.for_each_entry(f),
        }
    }

    fn to_dense(&self) -> DenseTensor3 {
        match self.storage() {
            Storage::Dense(d) => d.clone(),
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    fn norm_sq(&self) -> f64 {
        match self.storage() {
            Storage::Dense(d) => d.data().iter().map(|v| v * v).sum(),
            Storage::Sparse(s) => s.values().iter().map(|v| v * v).sum(),
        }
    }
}

/// An owned tensor in either representation, for callers that pick the
/// storage at run time (file ingestion, the CLI).
#[derive(Clone, Debug)]
pub enum AnyTensor {
    Dense(DenseTensor3),
    Sparse(SparseTensor3),
}

impl From<DenseTensor3> for AnyTensor {
    fn from(t: DenseTensor3) -> Self {
        AnyTensor::Dense(t)
    }
}

impl From<SparseTensor3> for AnyTensor {
    fn from(t: SparseTensor3) -> Self {
        AnyTensor::Sparse(t)
    }
}

impl TensorOp for AnyTensor {
    fn dims(&self) -> Dims {
        match self {
            AnyTensor::Dense(t) => t.dims(),
            AnyTensor::Sparse(t) => t.dims(),
        }
    }

    fn tvv_raw(&self, free: Mode, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self {
            AnyTensor::Dense(t) => t.tvv_raw(free, x, y),
            AnyTensor::Sparse(t) => t.tvv_raw(free, x, y),
        }
    }

    fn contract_one_raw(
        &self,
        mode: Mode,
        x: &[f64],
        left: &DMatrix<f64>,
        right: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        match self {
            AnyTensor::Dense(t) => t.contract_one_raw(mode, x, left, right),
            AnyTensor::Sparse(t) => t.contract_one_raw(mode, x, left, right),
        }
    }
}

impl Tensor3 for AnyTensor {
    fn storage(&self) -> Storage<'_> {
        match self {
            AnyTensor::Dense(t) => Storage::Dense(t),
            AnyTensor::Sparse(t) => Storage::Sparse(t),
        }
    }
}

/// Fixed-order dot product.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
