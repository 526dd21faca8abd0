//! Subproblems of the optimized and small-mode recursions.
//!
//! Generating a vector in mode `y` from combinations `θ`, `η` of the bases of
//! the two other modes, the new direction is largest when `(θ, η)` solves a
//! best rank-(1,1,1) problem for the projected tensor
//! `C = ⟨A; Q_{x1}, Q_{x2}, I − Q_y Q_yᵀ⟩`. [`ImplicitProjection`] applies `C`
//! without forming it, so inner Krylov runs cost one tvv on `A` per tvv on `C`.

use nalgebra::DMatrix;

use super::basis::OrthoBasis;
use super::engine::{run_on_operator, tvv_for};
use super::matrix::{arnoldi, FnOperator};
use super::state::KrylovState;
use super::{Provenance, RecursionConfig, StartVectors, Strategy, Variant};
use crate::counter::OpCounter;
use crate::error::{Error, Result};
use crate::linalg::{norm, sym_eigen_desc};
use crate::tensor::{DenseTensor3, Dims, Mode, TensorOp};
use crate::tucker::rank111_multistart;

/// How one mode of an [`ImplicitProjection`] relates to the underlying tensor.
#[derive(Clone, Debug)]
pub enum ProjectionMap {
    Identity,
    /// Coordinates in the columns of an orthonormal matrix: the mode is
    /// multiplied by `Qᵀ`.
    Basis(DMatrix<f64>),
    /// The mode is multiplied by `I − QQᵀ`.
    Complement(OrthoBasis),
}

impl ProjectionMap {
    fn size(&self, full: usize) -> usize {
        match self {
            ProjectionMap::Basis(q) => q.ncols(),
            _ => full,
        }
    }

    /// Operator coordinates to tensor coordinates.
    fn lift(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ProjectionMap::Identity => x.to_vec(),
            ProjectionMap::Basis(q) => {
                let mut out = vec![0.0; q.nrows()];
                for (c, &xc) in x.iter().enumerate() {
                    if xc != 0.0 {
                        for (o, v) in out.iter_mut().zip(q.column(c).iter()) {
                            *o += xc * v;
                        }
                    }
                }
                out
            }
            ProjectionMap::Complement(b) => b.project_out(x),
        }
    }

    /// Tensor coordinates to operator coordinates.
    fn restrict(&self, r: Vec<f64>) -> Vec<f64> {
        match self {
            ProjectionMap::Identity => r,
            ProjectionMap::Basis(q) => q
                .column_iter()
                .map(|c| c.iter().zip(&r).map(|(a, b)| a * b).sum())
                .collect(),
            ProjectionMap::Complement(b) => b.project_out(&r),
        }
    }

    fn lift_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ProjectionMap::Identity => m.clone(),
            ProjectionMap::Basis(q) => q * m,
            ProjectionMap::Complement(b) => {
                let mut out = m.clone();
                for mut col in out.column_iter_mut() {
                    let p = b.project_out(col.as_slice());
                    col.copy_from_slice(&p);
                }
                out
            }
        }
    }
}

/// The tensor `A ×₁ M₁ ×₂ M₂ ×₃ M₃` with each `M_k` given by a
/// [`ProjectionMap`], applied on the fly.
pub struct ImplicitProjection<'a, T: TensorOp + ?Sized> {
    a: &'a T,
    maps: [ProjectionMap; 3],
}

impl<'a, T: TensorOp + ?Sized> ImplicitProjection<'a, T> {
    pub fn new(a: &'a T, maps: [ProjectionMap; 3]) -> Self {
        ImplicitProjection { a, maps }
    }
}

impl<T: TensorOp + ?Sized> TensorOp for ImplicitProjection<'_, T> {
    fn dims(&self) -> Dims {
        let d = self.a.dims();
        Dims(Mode::ALL.map(|m| self.maps[m.index()].size(d[m])))
    }

    fn tvv_raw(&self, free: Mode, x: &[f64], y: &[f64]) -> Vec<f64> {
        let (lo, hi) = free.others();
        let xl = self.maps[lo.index()].lift(x);
        let yl = self.maps[hi.index()].lift(y);
        self.maps[free.index()].restrict(self.a.tvv_raw(free, &xl, &yl))
    }

    fn contract_one_raw(
        &self,
        mode: Mode,
        x: &[f64],
        left: &DMatrix<f64>,
        right: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        let (lo, hi) = mode.others();
        self.a.contract_one_raw(
            mode,
            &self.maps[mode.index()].lift(x),
            &self.maps[lo.index()].lift_matrix(left),
            &self.maps[hi.index()].lift_matrix(right),
        )
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

fn unit_vec(len: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; len];
    e[i] = 1.0;
    e
}

/// Solves the subproblem exactly: forms `C` with `len₁·len₂` tvvs and takes
/// the best rank-(1,1,1) triple, started both from the HOSVD and from the
/// plain choice `init`.
pub(crate) fn exact_choice<T: TensorOp + ?Sized>(
    a: &T,
    bases: &[OrthoBasis; 3],
    y: Mode,
    init: (&[f64], &[f64]),
    plain_proj: &[f64],
    counter: &mut OpCounter,
) -> (Vec<f64>, Vec<f64>) {
    let (x1, x2) = y.others();
    let (b1, b2, by) = (&bases[x1.index()], &bases[x2.index()], &bases[y.index()]);
    let dims = a.dims().with(x1, b1.len()).with(x2, b2.len());
    let mut c = DenseTensor3::zeros(dims);
    for i1 in 0..b1.len() {
        for i2 in 0..b2.len() {
            let col = by.project_out(&tvv_for(a, y, b1.vector(i1), b2.vector(i2)));
            counter.tvv += 1;
            for (t, &v) in col.iter().enumerate() {
                let mut idx = [0; 3];
                idx[x1.index()] = i1;
                idx[x2.index()] = i2;
                idx[y.index()] = t;
                c.set(idx[0], idx[1], idx[2], v);
            }
        }
    }
    let mut starts = Vec::new();
    if let Some(w) = normalized(plain_proj) {
        let mut s = [Vec::new(), Vec::new(), Vec::new()];
        s[x1.index()] = init.0.to_vec();
        s[x2.index()] = init.1.to_vec();
        s[y.index()] = w;
        starts.push(s);
    }
    let tri = rank111_multistart(&c, &starts);
    (tri.factor(x1).to_vec(), tri.factor(x2).to_vec())
}

/// `inner` with its modes relabelled: mode `k` of the view is mode
/// `order[k]` of `inner`.
struct Reordered<'a> {
    inner: &'a dyn TensorOp,
    order: [Mode; 3],
}

impl Reordered<'_> {
    fn outer(&self, m: Mode) -> Mode {
        self.order[m.index()]
    }

    /// Outer free mode and whether the two remaining modes swap order.
    fn map(&self, free: Mode) -> (Mode, bool) {
        let (lo, hi) = free.others();
        (self.outer(free), self.outer(lo).index() > self.outer(hi).index())
    }
}

impl TensorOp for Reordered<'_> {
    fn dims(&self) -> Dims {
        let d = self.inner.dims();
        Dims::new(d[self.order[0]], d[self.order[1]], d[self.order[2]])
    }

    fn tvv_raw(&self, free: Mode, x: &[f64], y: &[f64]) -> Vec<f64> {
        match self.map(free) {
            (m, false) => self.inner.tvv_raw(m, x, y),
            (m, true) => self.inner.tvv_raw(m, y, x),
        }
    }

    fn contract_one_raw(&self, mode: Mode, x: &[f64], left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
        match self.map(mode) {
            (m, false) => self.inner.contract_one_raw(m, x, left, right),
            (m, true) => self.inner.contract_one_raw(m, x, right, left).transpose(),
        }
    }
}

/// Approximates the subproblem with `t` inner minimal steps on the implicit
/// `C`, started from the plain choice, followed by a best rank-(1,1,1)
/// solve on the `t×t×t` inner core. `None` when the inner run breaks down.
#[allow(clippy::too_many_arguments)]
pub(crate) fn inner_choice<T: TensorOp + ?Sized>(
    a: &T,
    bases: &[OrthoBasis; 3],
    y: Mode,
    init: (&[f64], &[f64]),
    plain_proj: &[f64],
    t: usize,
    cfg: &RecursionConfig,
    scale: f64,
    counter: &mut OpCounter,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let (x1, x2) = y.others();
    let (b1, b2, by) = (&bases[x1.index()], &bases[x2.index()], &bases[y.index()]);
    if norm(plain_proj) <= cfg.tol * scale {
        return None;
    }
    let t = t.min(b1.len()).min(b2.len()).min(by.dim() - by.len());
    if t == 0 {
        return None;
    }
    let mut maps = [ProjectionMap::Identity, ProjectionMap::Identity, ProjectionMap::Identity];
    maps[x1.index()] = ProjectionMap::Basis(b1.matrix());
    maps[x2.index()] = ProjectionMap::Basis(b2.matrix());
    maps[y.index()] = ProjectionMap::Complement(by.clone());
    let proj = ImplicitProjection::new(a, maps);
    // The inner run generates its last mode first from the other two, so `y`
    // goes last; otherwise its first step just reproduces the plain choice.
    let op = Reordered {
        inner: &proj as &dyn TensorOp,
        order: [x1, x2, y],
    };

    let start = StartVectors {
        u1: normalized(init.0)?,
        v1: normalized(init.1)?,
        w1: Some(normalized(plain_proj)?),
        provenance: Provenance::User,
    };
    let inner_cfg = RecursionConfig {
        strict: true,
        variant: Variant::MostRecent,
        warmup: 0,
        ..cfg.clone()
    };
    let run = run_on_operator(&op as &dyn TensorOp, &start, [t; 3], scale, &inner_cfg);
    let st: KrylovState = match run {
        Ok(st) => st,
        Err(_) => return None,
    };
    counter.tvv += st.counter.tvv;
    let f = st.factors();
    let mut core = DenseTensor3::zeros(Dims::new(t, t, t));
    for i in 0..t {
        let x: Vec<f64> = f[0].column(i).iter().copied().collect();
        let slice = op.contract_one_raw(Mode::One, &x, &f[1], &f[2]);
        counter.contractions += 1;
        for j in 0..t {
            for k in 0..t {
                core.set(i, j, k, slice[(j, k)]);
            }
        }
    }
    let e = unit_vec(t, 0);
    let tri = rank111_multistart(&core, &[[e.clone(), e.clone(), e]]);
    let lift = |m: Mode| -> Option<Vec<f64>> {
        let c = &f[m.index()] * nalgebra::DVector::from_column_slice(tri.factor(m));
        normalized(c.as_slice())
    };
    Some((lift(Mode::One)?, lift(Mode::Two)?))
}

/// Best combination `θ` of the (complete) basis of mode `small` when
/// generating mode `y` with the fixed vector `xo` in the remaining mode:
/// the top right singular vector of `M θ = (I − Q_y Q_yᵀ) ⟨A; U θ, xo⟩`,
/// found by Arnoldi on `MᵀM` (two tvvs per application) from `e_start`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn small_mode_choice<T: TensorOp + ?Sized>(
    a: &T,
    bases: &[OrthoBasis; 3],
    y: Mode,
    small: Mode,
    xo: &[f64],
    start: usize,
    tol: f64,
    counter: &mut OpCounter,
) -> Result<Vec<f64>> {
    let other = Mode::remaining(y, small).ok_or(Error::EqualModes(y))?;
    let (bs, by) = (&bases[small.index()], &bases[y.index()]);
    let len = bs.len();
    let mut applies = 0u64;
    let result = {
        let mut op = FnOperator::new(len, |theta: &[f64]| {
            applies += 1;
            let us = bs.combine(theta);
            let fwd = if small < other {
                tvv_for(a, y, &us, xo)
            } else {
                tvv_for(a, y, xo, &us)
            };
            let w = by.project_out(&fwd);
            let back = if other < y {
                tvv_for(a, small, xo, &w)
            } else {
                tvv_for(a, small, &w, xo)
            };
            bs.coefficients(&back)
        });
        arnoldi(&mut op, &unit_vec(len, start), len, tol)?
    };
    counter.tvv += 2 * applies;
    let j = result.u.ncols().min(result.h.ncols());
    let hs = result.h.view((0, 0), (j, j)).into_owned();
    let sym = (&hs + hs.transpose()) * 0.5;
    let (_, vecs) = sym_eigen_desc(&sym);
    let theta = result.u.columns(0, j) * vecs.column(0);
    normalized(theta.as_slice()).ok_or(Error::ZeroTensor)
}

/// Norms of the plain and the optimized candidate for the next vector of
/// one mode, after orthogonalization against that mode's basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateComparison {
    pub plain: f64,
    pub optimized: f64,
}

/// Compares, without modifying `state`, the plain minimal candidate
/// `⟨A; x_last, y_last⟩` for mode `target` with the optimized one.
pub fn compare_candidates<T: TensorOp + ?Sized>(
    a: &T,
    state: &KrylovState,
    target: Mode,
    strategy: Strategy,
    cfg: &RecursionConfig,
    scale: f64,
) -> Result<CandidateComparison> {
    let (x1, x2) = target.others();
    let (b1, b2, by) = (
        state.basis(x1),
        state.basis(x2),
        state.basis(target),
    );
    let (Some(l1), Some(l2)) = (b1.last(), b2.last()) else {
        return Err(Error::InvalidArgument("state has empty bases".into()));
    };
    let plain = by.project_out(&tvv_for(a, target, l1, l2));
    let c1 = unit_vec(b1.len(), b1.len() - 1);
    let c2 = unit_vec(b2.len(), b2.len() - 1);
    let mut counter = OpCounter::default();
    let choice = match strategy {
        Strategy::ExactHosvd => Some(exact_choice(
            a,
            &state.bases,
            target,
            (&c1, &c2),
            &plain,
            &mut counter,
        )),
        Strategy::InnerKrylov(t) => inner_choice(
            a,
            &state.bases,
            target,
            (&c1, &c2),
            &plain,
            t,
            cfg,
            scale,
            &mut counter,
        ),
    };
    let plain_norm = norm(&plain);
    let optimized = match choice {
        Some((theta, eta)) => {
            let w = by.project_out(&tvv_for(a, target, &b1.combine(&theta), &b2.combine(&eta)));
            norm(&w)
        }
        None => plain_norm,
    };
    Ok(CandidateComparison {
        plain: plain_norm,
        optimized,
    })
}
