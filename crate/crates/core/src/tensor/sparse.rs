use std::collections::HashMap;
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Dims, Mode, Storage, Tensor3, TensorOp};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor3;

/// How repeated coordinates are treated when a sparse tensor is assembled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DuplicatePolicy {
    /// Values at the same coordinate are added together.
    #[default]
    Sum,
    /// A repeated coordinate is an error.
    Reject,
}

/// Coordinate-list tensor with entries sorted by `(k, j, i)`.
///
/// Entries of frontal slice `k` occupy `slice_ptr[k]..slice_ptr[k + 1]`, so
/// each slice can be walked as a sparse matrix, and within a slice each
/// mode-1 fibre is a contiguous run. Explicit zeros are never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseTensor3 {
    dims: Dims,
    coords: Vec<[u32; 3]>,
    values: Vec<f64>,
    slice_ptr: Vec<usize>,
}

impl SparseTensor3 {
    pub fn empty(dims: Dims) -> Self {
        SparseTensor3 {
            dims,
            coords: Vec::new(),
            values: Vec::new(),
            slice_ptr: vec![0; dims.0[2] + 1],
        }
    }

    /// Assembles a tensor from 0-based `(i, j, k, value)` triplets.
    pub fn from_triplets<I>(dims: Dims, triplets: I, policy: DuplicatePolicy) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, usize, f64)>,
    {
        if dims.0.iter().any(|&d| d > u32::MAX as usize) {
            return Err(Error::InvalidArgument(format!("dims {dims} exceed u32 index range")));
        }
        let mut raw: Vec<([u32; 3], f64)> = Vec::new();
        for (i, j, k, v) in triplets {
            for (mode, idx) in Mode::ALL.into_iter().zip([i, j, k]) {
                if idx >= dims[mode] {
                    return Err(Error::InvalidArgument(format!(
                        "index {} out of range for mode {mode} (dim {})",
                        idx + 1,
                        dims[mode]
                    )));
                }
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value at ({}, {}, {})",
                    i + 1,
                    j + 1,
                    k + 1
                )));
            }
            raw.push(([i as u32, j as u32, k as u32], v));
        }
        raw.sort_by_key(|&([i, j, k], _)| (k, j, i));

        let mut coords: Vec<[u32; 3]> = Vec::with_capacity(raw.len());
        let mut values: Vec<f64> = Vec::with_capacity(raw.len());
        for (c, v) in raw {
            if coords.last() == Some(&c) {
                match policy {
                    DuplicatePolicy::Sum => *values.last_mut().unwrap() += v,
                    DuplicatePolicy::Reject => {
                        return Err(Error::InvalidArgument(format!(
                            "duplicate coordinate ({}, {}, {})",
                            c[0] + 1,
                            c[1] + 1,
                            c[2] + 1
                        )))
                    }
                }
            } else {
                coords.push(c);
                values.push(v);
            }
        }
        // Summation can cancel to zero; zeros are not stored.
        let mut keep_c = Vec::with_capacity(coords.len());
        let mut keep_v = Vec::with_capacity(values.len());
        for (c, v) in coords.into_iter().zip(values) {
            if v != 0.0 {
                keep_c.push(c);
                keep_v.push(v);
            }
        }
        Ok(Self::from_sorted(dims, keep_c, keep_v))
    }

    fn from_sorted(dims: Dims, coords: Vec<[u32; 3]>, values: Vec<f64>) -> Self {
        let n = dims.0[2];
        let mut slice_ptr = vec![0usize; n + 1];
        for c in &coords {
            slice_ptr[c[2] as usize + 1] += 1;
        }
        for k in 0..n {
            slice_ptr[k + 1] += slice_ptr[k];
        }
        SparseTensor3 {
            dims,
            coords,
            values,
            slice_ptr,
        }
    }

    /// Sparse copy of a dense tensor, keeping its nonzero entries.
    pub fn from_dense(dense: &DenseTensor3) -> Self {
        let mut coords = Vec::new();
        let mut values = Vec::new();
        dense.for_each_entry(&mut |[i, j, k], v| {
            if v != 0.0 {
                coords.push([i as u32, j as u32, k as u32]);
                values.push(v);
            }
        });
        // dense layout already walks (k, j, i) in order
        Self::from_sorted(dense.dims(), coords, values)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coords(&self) -> &[[u32; 3]] {
        &self.coords
    }

    /// Entry range of frontal slice `k`.
    pub fn slice_range(&self, k: usize) -> Range<usize> {
        self.slice_ptr[k]..self.slice_ptr[k + 1]
    }

    /// 0-based `(i, j, k, value)` entries in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.coords
            .iter()
            .zip(&self.values)
            .map(|(c, &v)| (c[0] as usize, c[1] as usize, c[2] as usize, v))
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let r = self.slice_range(k);
        let key = (j as u32, i as u32);
        match self.coords[r.clone()].binary_search_by_key(&key, |c| (c[1], c[0])) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseTensor3 {
        let mut d = DenseTensor3::zeros(self.dims);
        for (i, j, k, v) in self.entries() {
            d.set(i, j, k, v);
        }
        d
    }

    pub(crate) fn for_each_entry(&self, f: &mut dyn FnMut([usize; 3], f64)) {
        for (i, j, k, v) in self.entries() {
            f([i, j, k], v);
        }
    }

    /// Mode product with a dense matrix; the result is dense.
    pub(crate) fn ttm_raw(&self, mode: Mode, matrix: &DMatrix<f64>) -> DenseTensor3 {
        let rows = matrix.nrows();
        let out_dims = self.dims.with(mode, rows);
        let mut data = vec![0.0; out_dims.len()];
        let [ol, om, _] = out_dims.0;
        for (i, j, k, v) in self.entries() {
            let idx = [i, j, k];
            let src = idx[mode.index()];
            for r in 0..rows {
                let mut t = idx;
                t[mode.index()] = r;
                data[t[0] + ol * (t[1] + om * t[2])] += matrix[(r, src)] * v;
            }
        }
        DenseTensor3::new(out_dims, data).expect("sized by construction")
    }

    /// `⟨A,A⟩_{-mode} · u` via the fibres along `mode`, without forming the Gram matrix.
    pub(crate) fn gram_matvec_raw(&self, mode: Mode, u: &[f64]) -> Vec<f64> {
        let [l, m, n] = self.dims.0;
        let mut y = vec![0.0; self.dims[mode]];
        match mode {
            Mode::One => {
                // mode-1 fibres (j, k) are contiguous runs
                let mut start = 0;
                while start < self.coords.len() {
                    let key = (self.coords[start][1], self.coords[start][2]);
                    let mut end = start + 1;
                    while end < self.coords.len()
                        && (self.coords[end][1], self.coords[end][2]) == key
                    {
                        end += 1;
                    }
                    let z: f64 = (start..end)
                        .map(|e| self.values[e] * u[self.coords[e][0] as usize])
                        .sum();
                    for e in start..end {
                        y[self.coords[e][0] as usize] += self.values[e] * z;
                    }
                    start = end;
                }
            }
            Mode::Two => {
                // per frontal slice: z = A_kᵀ-free accumulation over fibres (i, k)
                let mut z = vec![0.0; l];
                let mut touched = Vec::new();
                for k in 0..n {
                    let r = self.slice_range(k);
                    for e in r.clone() {
                        let i = self.coords[e][0] as usize;
                        if z[i] == 0.0 {
                            touched.push(i);
                        }
                        z[i] += self.values[e] * u[self.coords[e][1] as usize];
                    }
                    for e in r {
                        let c = self.coords[e];
                        y[c[1] as usize] += self.values[e] * z[c[0] as usize];
                    }
                    for &i in &touched {
                        z[i] = 0.0;
                    }
                    touched.clear();
                }
            }
            Mode::Three => {
                // fibres (i, j) span slices
                if l.saturating_mul(m) <= 1 << 22 {
                    let mut z = vec![0.0; l * m];
                    for (i, j, k, v) in self.entries() {
                        z[i + l * j] += v * u[k];
                    }
                    for (i, j, k, v) in self.entries() {
                        y[k] += v * z[i + l * j];
                    }
                } else {
                    let mut z: HashMap<(usize, usize), f64> = HashMap::new();
                    for (i, j, k, v) in self.entries() {
                        *z.entry((i, j)).or_insert(0.0) += v * u[k];
                    }
                    for (i, j, k, v) in self.entries() {
                        y[k] += v * z[&(i, j)];
                    }
                }
            }
        }
        y
    }

    /// Explicit `⟨A,A⟩_{-mode}` accumulated fibre by fibre.
    pub(crate) fn gram_raw(&self, mode: Mode) -> DMatrix<f64> {
        let d = self.dims[mode];
        let (a, b) = mode.others();
        let stride = self.dims[a] as u64;
        let mut keyed: Vec<(u64, u32, f64)> = self
            .coords
            .iter()
            .zip(&self.values)
            .map(|(c, &v)| {
                let key = c[a.index()] as u64 + stride * c[b.index()] as u64;
                (key, c[mode.index()], v)
            })
            .collect();
        keyed.sort_by_key(|&(key, idx, _)| (key, idx));
        let mut g = DMatrix::zeros(d, d);
        let mut start = 0;
        while start < keyed.len() {
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == keyed[start].0 {
                end += 1;
            }
            for p in start..end {
                for q in start..end {
                    g[(keyed[p].1 as usize, keyed[q].1 as usize)] += keyed[p].2 * keyed[q].2;
                }
            }
            start = end;
        }
        g
    }
}

impl TensorOp for SparseTensor3 {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn tvv_raw(&self, free: Mode, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims[free]];
        let (a, b) = free.others();
        let (fa, ia, ib) = (free.index(), a.index(), b.index());
        for (c, &v) in self.coords.iter().zip(&self.values) {
            out[c[fa] as usize] += v * x[c[ia] as usize] * y[c[ib] as usize];
        }
        out
    }

    fn contract_one_raw(
        &self,
        mode: Mode,
        x: &[f64],
        left: &DMatrix<f64>,
        right: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let (a, b) = mode.others();
        let q = right.ncols();
        // t = (A ×_mode x) · right, accumulated entry by entry
        let mut t = DMatrix::zeros(self.dims[a], q);
        for (c, &v) in self.coords.iter().zip(&self.values) {
            let s = v * x[c[mode.index()] as usize];
            if s == 0.0 {
                continue;
            }
            let ra = c[a.index()] as usize;
            let rb = c[b.index()] as usize;
            for col in 0..q {
                t[(ra, col)] += s * right[(rb, col)];
            }
        }
        left.tr_mul(&t)
    }
}

impl Tensor3 for SparseTensor3 {
    fn storage(&self) -> Storage<'_> {
        Storage::Sparse(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_and_indexes_slices() {
        let t = SparseTensor3::from_triplets(
            Dims::new(3, 3, 2),
            vec![(2, 0, 1, 1.0), (0, 1, 0, 2.0), (1, 0, 0, 3.0), (0, 0, 1, 4.0)],
            DuplicatePolicy::Sum,
        )
        .unwrap();
        let order: Vec<_> = t.entries().map(|(i, j, k, _)| (k, j, i)).collect();
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
        assert_eq!(t.slice_range(0), 0..2);
        assert_eq!(t.slice_range(1), 2..4);
        assert_eq!(t.get(1, 0, 0), 3.0);
        assert_eq!(t.get(2, 2, 1), 0.0);
    }

    #[test]
    fn duplicates_sum_or_reject() {
        let trip = vec![(0, 0, 0, 1.5), (0, 0, 0, 2.0), (1, 1, 1, 1.0)];
        let t = SparseTensor3::from_triplets(Dims::new(2, 2, 2), trip.clone(), DuplicatePolicy::Sum)
            .unwrap();
        assert_eq!(t.nnz(), 2);
        assert_eq!(t.get(0, 0, 0), 3.5);
        assert!(
            SparseTensor3::from_triplets(Dims::new(2, 2, 2), trip, DuplicatePolicy::Reject).is_err()
        );
    }

    #[test]
    fn zeros_are_dropped_including_cancellations() {
        let t = SparseTensor3::from_triplets(
            Dims::new(2, 2, 2),
            vec![(0, 0, 0, 1.0), (0, 0, 0, -1.0), (1, 0, 0, 0.0), (1, 1, 1, 2.0)],
            DuplicatePolicy::Sum,
        )
        .unwrap();
        assert_eq!(t.nnz(), 1);
    }

    #[test]
    fn out_of_range_is_rejected() {
        let err = SparseTensor3::from_triplets(
            Dims::new(2, 2, 2),
            vec![(2, 0, 0, 1.0)],
            DuplicatePolicy::Sum,
        );
        assert!(err.is_err());
    }

    #[test]
    fn dense_round_trip() {
        let d = DenseTensor3::from_fn(Dims::new(2, 3, 2), |i, j, k| {
            if (i + j + k) % 2 == 0 {
                (i + 2 * j + 3 * k) as f64 + 1.0
            } else {
                0.0
            }
        });
        let s = SparseTensor3::from_dense(&d);
        assert_eq!(s.to_dense(), d);
        assert_eq!(s.nnz(), 6);
    }
}
