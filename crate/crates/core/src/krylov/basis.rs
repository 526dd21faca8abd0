use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, norm};
use crate::tensor::{Dims, Mode};

/// Result of one Gram-Schmidt step against a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct AppendOutcome {
    /// Coefficients of the candidate against the basis as it was before the step.
    pub coeffs: Vec<f64>,
    /// Norm of the orthogonalized residual (the normalization constant).
    pub norm: f64,
    pub appended: bool,
}

/// Ordered orthonormal vectors in one mode, stored column-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthoBasis {
    mode: Mode,
    dim: usize,
    data: Vec<f64>,
}

impl OrthoBasis {
    pub fn new(mode: Mode, dim: usize) -> Self {
        OrthoBasis {
            mode,
            dim,
            data: Vec::new(),
        }
    }

    pub fn for_dims(dims: Dims) -> [OrthoBasis; 3] {
        Mode::ALL.map(|m| OrthoBasis::new(m, dims[m]))
    }

    /// Wraps the columns of `q`, which must be orthonormal to 1e-8.
    pub fn from_matrix(mode: Mode, q: &DMatrix<f64>) -> Result<Self> {
        let dev = crate::linalg::orthonormality_deviation(q);
        if dev > 1e-8 {
            return Err(Error::NotOrthonormal {
                mode,
                deviation: dev,
            });
        }
        Ok(OrthoBasis {
            mode,
            dim: q.nrows(),
            data: q.as_slice().to_vec(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() >= self.dim
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.len().checked_sub(1).map(|i| self.vector(i))
    }

    pub fn view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.dim, self.len())
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        self.view().into_owned()
    }

    /// The first `n` vectors as a matrix.
    pub fn leading(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.dim, n, &self.data[..n * self.dim])
    }

    /// `Σ coeffs[i] q_i`.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                for (o, q) in out.iter_mut().zip(self.vector(i)) {
                    *o += c * q;
                }
            }
        }
        out
    }

    /// `Qᵀ v`.
    pub fn coefficients(&self, v: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| crate::tensor::dot(self.vector(i), v))
            .collect()
    }

    /// Removes the components along the basis from `v` in place (two
    /// modified Gram-Schmidt passes) and returns the total coefficients.
    /// The first `known.len()` coefficients are taken from `known` instead of
    /// being computed; the second pass corrects only the computed ones.
    pub fn reduce(&self, v: &mut [f64], known: &[f64]) -> Vec<f64> {
        let len = self.len();
        let mut coeffs = vec![0.0; len];
        for (i, c) in coeffs.iter_mut().enumerate() {
            let q = self.vector(i);
            let h = if i < known.len() {
                known[i]
            } else {
                crate::tensor::dot(q, v)
            };
            for (x, qv) in v.iter_mut().zip(q) {
                *x -= h * qv;
            }
            *c = h;
        }
        for (i, c) in coeffs.iter_mut().enumerate() {
            let q = self.vector(i);
            let h = crate::tensor::dot(q, v);
            for (x, qv) in v.iter_mut().zip(q) {
                *x -= h * qv;
            }
            if i >= known.len() {
                *c += h;
            }
        }
        coeffs
    }

    /// Gram-Schmidt step with re-orthogonalization. The residual is appended
    /// (normalized) when its norm exceeds `tol · ‖v‖`.
    pub fn orthogonalize_append(&mut self, v: &[f64], tol: f64) -> Result<AppendOutcome> {
        self.orthogonalize_append_with(v, &[], tol, 0.0)
    }

    /// General form: `known` leading coefficients are trusted (see
    /// [`reduce`](Self::reduce)) and the breakdown threshold is
    /// `tol · max(scale, ‖v‖)`.
    pub fn orthogonalize_append_with(
        &mut self,
        v: &[f64],
        known: &[f64],
        tol: f64,
        scale: f64,
    ) -> Result<AppendOutcome> {
        if v.len() != self.dim {
            return Err(Error::mismatch(
                "orthogonalize_append",
                self.mode,
                self.dim,
                v.len(),
            ));
        }
        let vnorm = norm(v);
        let mut r = v.to_vec();
        let coeffs = self.reduce(&mut r, known);
        let rnorm = norm(&r);
        let threshold = tol * scale.max(vnorm);
        let appended = !self.is_full() && rnorm > threshold && rnorm > 0.0;
        if appended {
            self.data.extend(r.iter().map(|x| x / rnorm));
        }
        Ok(AppendOutcome {
            coeffs,
            norm: rnorm,
            appended,
        })
    }

    /// Appends a unit vector already orthogonal to the basis.
    pub(crate) fn push_unchecked(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        self.data.extend_from_slice(v);
    }

    /// `(I − QQᵀ) v`, applied twice for stability.
    pub fn project_out(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        self.reduce(&mut r, &[]);
        r
    }

    /// A random unit vector orthogonal to the basis, or `None` when full.
    pub fn random_orthogonal_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        if self.is_full() {
            return None;
        }
        loop {
            let r = self.project_out(&gaussian_vector(self.dim, rng));
            let nr = norm(&r);
            if nr > 1e-8 {
                return Some(r.iter().map(|x| x / nr).collect());
            }
        }
    }

    /// Keeps the first `n` vectors.
    pub fn truncate(&mut self, n: usize) {
        self.data.truncate(n * self.dim);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_to_empty() {
        let mut b = OrthoBasis::new(Mode::One, 3);
        let out = b.orthogonalize_append(&[1.0, 0.0, 0.0], 1e-12).unwrap();
        assert!(out.appended);
        assert!(out.coeffs.is_empty());
        assert_eq!(out.norm, 1.0);
        assert_eq!(b.vector(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn exact_breakdown() {
        let mut b = OrthoBasis::new(Mode::One, 3);
        b.orthogonalize_append(&[1.0, 0.0, 0.0], 1e-12).unwrap();
        let out = b.orthogonalize_append(&[1.0, 0.0, 0.0], 1e-12).unwrap();
        assert!(!out.appended);
        assert_eq!(out.norm, 0.0);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn hand_gram_schmidt() {
        let s = 0.5f64.sqrt();
        let mut b = OrthoBasis::new(Mode::Two, 3);
        b.orthogonalize_append(&[1.0, 0.0, 0.0], 1e-12).unwrap();
        let out = b.orthogonalize_append(&[s, s, 0.0], 1e-12).unwrap();
        assert!(out.appended);
        assert!((out.coeffs[0] - s).abs() < 1e-15);
        assert!((out.norm - s).abs() < 1e-15);
        let e2 = b.vector(1);
        assert!((e2[1] - 1.0).abs() < 1e-15 && e2[0].abs() < 1e-15);
    }

    #[test]
    fn dimension_checked() {
        let mut b = OrthoBasis::new(Mode::Three, 3);
        assert!(b.orthogonalize_append(&[1.0, 0.0], 1e-12).is_err());
    }

    #[test]
    fn full_basis_never_grows() {
        let mut b = OrthoBasis::new(Mode::One, 2);
        b.orthogonalize_append(&[1.0, 0.0], 1e-12).unwrap();
        b.orthogonalize_append(&[1.0, 1.0], 1e-12).unwrap();
        assert!(b.is_full());
        let out = b.orthogonalize_append(&[0.3, 0.7], 1e-12).unwrap();
        assert!(!out.appended);
        let mut rng = crate::linalg::seeded(1);
        assert!(b.random_orthogonal_unit(&mut rng).is_none());
    }

    #[test]
    fn known_coefficients_are_kept() {
        let mut b = OrthoBasis::new(Mode::One, 3);
        b.orthogonalize_append(&[1.0, 0.0, 0.0], 1e-12).unwrap();
        let out = b
            .orthogonalize_append_with(&[2.0, 1.0, 0.0], &[2.0], 1e-12, 0.0)
            .unwrap();
        assert_eq!(out.coeffs, vec![2.0]);
        assert!(out.appended);
    }
}
