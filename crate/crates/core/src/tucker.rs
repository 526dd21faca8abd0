//! Tucker approximations `A ≈ (U, V, W)·C`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::counter::OpCounter;
use crate::error::{Error, Result};
use crate::krylov::{modified_minimal_recursion, KrylovState, RecursionConfig, StartVectors};
use crate::linalg::{fix_signs, leading_eigvecs, leading_left_singular, norm, orthonormality_deviation};
use crate::tensor::{gram, matricize, ttm_multi, DenseTensor3, Dims, Mode, Storage, Tensor3, TensorOp};

/// Orthonormal factors and core.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuckerDecomp {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub core: DenseTensor3,
}

impl TuckerDecomp {
    pub fn factor(&self, mode: Mode) -> &DMatrix<f64> {
        match mode {
            Mode::One => &self.u,
            Mode::Two => &self.v,
            Mode::Three => &self.w,
        }
    }

    pub fn ranks(&self) -> [usize; 3] {
        [self.u.ncols(), self.v.ncols(), self.w.ncols()]
    }

    /// `(U, V, W)·C` as a dense tensor.
    pub fn reconstruct(&self) -> DenseTensor3 {
        ttm_multi(&self.core, [Some(&self.u), Some(&self.v), Some(&self.w)], false)
            .expect("factor shapes match the core")
    }
}

fn check_factors(dims: Dims, factors: [&DMatrix<f64>; 3]) -> Result<()> {
    for m in Mode::ALL {
        let f = factors[m.index()];
        if f.nrows() != dims[m] {
            return Err(Error::mismatch("core_project", m, dims[m], f.nrows()));
        }
        let dev = orthonormality_deviation(f);
        if dev > 1e-8 {
            return Err(Error::NotOrthonormal { mode: m, deviation: dev });
        }
    }
    Ok(())
}

/// The optimal core `⟨A; U, V, W⟩` for orthonormal factors.
pub fn core_project<T: Tensor3 + ?Sized>(
    a: &T,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<DenseTensor3> {
    core_project_counted(a, [u, v, w], &mut OpCounter::default())
}

/// As [`core_project`]. Dense tensors are contracted with matrix products;
/// sparse tensors with one tvv per pair of factor columns in the two modes
/// other than the shortest one (each charged to `counter`).
pub fn core_project_counted<T: Tensor3 + ?Sized>(
    a: &T,
    factors: [&DMatrix<f64>; 3],
    counter: &mut OpCounter,
) -> Result<DenseTensor3> {
    let dims = a.dims();
    check_factors(dims, factors)?;
    match a.storage() {
        Storage::Dense(d) => ttm_multi(d, factors.map(Some), true),
        Storage::Sparse(_) => Ok(core_by_tvv(a, factors, counter)),
    }
}

/// Core projection by tvv multiplications on any storage: one tvv per pair
/// of columns of the two factors beside the shortest mode.
pub fn core_project_tvv<T: Tensor3 + ?Sized>(
    a: &T,
    factors: [&DMatrix<f64>; 3],
    counter: &mut OpCounter,
) -> Result<DenseTensor3> {
    check_factors(a.dims(), factors)?;
    Ok(core_by_tvv(a, factors, counter))
}

fn core_by_tvv<T: TensorOp + ?Sized>(a: &T, factors: [&DMatrix<f64>; 3], counter: &mut OpCounter) -> DenseTensor3 {
    let dims = a.dims();
    let free = Mode::ALL
        .into_iter()
        .rev()
        .min_by_key(|&m| dims[m])
        .unwrap_or(Mode::Three);
    let (lo, hi) = free.others();
    let ranks = Dims(factors.map(|f| f.ncols()));
    let mut core = DenseTensor3::zeros(ranks);
    let ff = factors[free.index()];
    for b in 0..ranks[lo] {
        let x: Vec<f64> = factors[lo.index()].column(b).iter().copied().collect();
        for c in 0..ranks[hi] {
            let y: Vec<f64> = factors[hi.index()].column(c).iter().copied().collect();
            let z = DVector::from_vec(a.tvv_raw(free, &x, &y));
            counter.tvv += 1;
            let fibre = ff.tr_mul(&z);
            for (t, &val) in fibre.iter().enumerate() {
                let mut idx = [0; 3];
                idx[free.index()] = t;
                idx[lo.index()] = b;
                idx[hi.index()] = c;
                core.set(idx[0], idx[1], idx[2], val);
            }
        }
    }
    core
}

/// `‖A − (U,V,W)·C‖ = (‖A‖² − ‖C‖²)^{1/2}` for a projected core.
///
/// The subtraction cancels, so errors below roughly `√ε·‖A‖` read as
/// noise of that size rather than zero.
pub fn approx_error<T: Tensor3 + ?Sized>(a: &T, core: &DenseTensor3) -> Result<f64> {
    let na = a.norm_sq().sqrt();
    let nc = core.norm();
    if nc > na * (1.0 + 1e-10) {
        return Err(Error::ProjectionBound { core: nc, tensor: na });
    }
    Ok((na * na - nc * nc).max(0.0).sqrt())
}

fn check_ranks(dims: Dims, ranks: [usize; 3]) -> Result<()> {
    for m in Mode::ALL {
        if ranks[m.index()] > dims[m] {
            return Err(Error::RankExceeds {
                mode: m,
                rank: ranks[m.index()],
                available: dims[m],
            });
        }
    }
    Ok(())
}

/// Truncated HOSVD: leading eigenvectors of the mode Gram matrices `⟨A,A⟩_{-k}`.
pub fn truncated_hosvd<T: Tensor3 + ?Sized>(a: &T, ranks: [usize; 3]) -> Result<TuckerDecomp> {
    check_ranks(a.dims(), ranks)?;
    let factors: Vec<DMatrix<f64>> = Mode::ALL
        .iter()
        .map(|&m| {
            let mut f = leading_eigvecs(&gram(a, m), ranks[m.index()]);
            fix_signs(&mut f);
            f
        })
        .collect();
    let core = core_project(a, &factors[0], &factors[1], &factors[2])?;
    let [u, v, w]: [DMatrix<f64>; 3] = factors.try_into().expect("three factors");
    Ok(TuckerDecomp { u, v, w, core })
}

/// HOSVD through the Krylov route: the modified minimal recursion builds
/// bases of the requested sizes, the small core is projected and its HOSVD
/// is composed with the Krylov bases.
pub fn hosvd_via_krylov<T: Tensor3 + ?Sized>(a: &T, ranks: [usize; 3]) -> Result<TuckerDecomp> {
    let start = StartVectors::fibre_mean(a, false)?;
    hosvd_via_krylov_with(a, ranks, &start, &RecursionConfig::default())
}

pub fn hosvd_via_krylov_with<T: Tensor3 + ?Sized>(
    a: &T,
    ranks: [usize; 3],
    start: &StartVectors,
    cfg: &RecursionConfig,
) -> Result<TuckerDecomp> {
    hosvd_via_krylov_state(a, ranks, start, cfg).map(|(t, _)| t)
}

/// As [`hosvd_via_krylov_with`], also returning the recursion state. The
/// core projection's operations are added to the state's counter.
pub fn hosvd_via_krylov_state<T: Tensor3 + ?Sized>(
    a: &T,
    ranks: [usize; 3],
    start: &StartVectors,
    cfg: &RecursionConfig,
) -> Result<(TuckerDecomp, KrylovState)> {
    check_ranks(a.dims(), ranks)?;
    let mut state = modified_minimal_recursion(a, start, ranks, cfg)?;
    let [uk, vk, wk] = state.factors();
    let h = core_project_counted(a, [&uk, &vk, &wk], &mut state.counter)?;
    let small = truncated_hosvd(&h, h.dims().0)?;
    let decomp = TuckerDecomp {
        u: &uk * &small.u,
        v: &vk * &small.v,
        w: &wk * &small.w,
        core: small.core,
    };
    Ok((decomp, state))
}

/// `θ, η, ω` unit vectors with `σ = ⟨C; θ, η, ω⟩ ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rank1Triple {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
    pub omega: Vec<f64>,
    pub sigma: f64,
    pub sweeps: usize,
}

impl Rank1Triple {
    pub fn factor(&self, mode: Mode) -> &[f64] {
        match mode {
            Mode::One => &self.theta,
            Mode::Two => &self.eta,
            Mode::Three => &self.omega,
        }
    }
}

pub const HOOI_MAX_SWEEPS: usize = 50;
pub const HOOI_TOL: f64 = 1e-10;

/// Best rank-(1,1,1) approximation by alternating updates (HOOI), started
/// from the leading HOSVD vectors.
pub fn best_rank111(c: &DenseTensor3, iters: usize, tol: f64) -> Result<Rank1Triple> {
    if c.norm() == 0.0 {
        return Err(Error::ZeroTensor);
    }
    Ok(hooi_rank111(c, hosvd_start(c), iters, tol))
}

fn hosvd_start(c: &DenseTensor3) -> [Vec<f64>; 3] {
    Mode::ALL.map(|m| {
        let f = leading_left_singular(&matricize(c, m), 1);
        f.column(0).iter().copied().collect()
    })
}

/// HOOI from the given starting triple. Each sweep updates `θ`, then `η`,
/// then `ω`; `σ` never decreases. Stops after `iters` sweeps or when the
/// relative gain of `σ` drops to `tol`.
pub fn hooi_rank111(c: &DenseTensor3, init: [Vec<f64>; 3], iters: usize, tol: f64) -> Rank1Triple {
    let [mut theta, mut eta, mut omega] = init;
    let mut sigma = {
        let z = c.tvv_raw(Mode::Three, &theta, &eta);
        crate::tensor::dot(&z, &omega)
    };
    let update = |v: Vec<f64>, old: &mut Vec<f64>| -> f64 {
        let n = norm(&v);
        if n > 0.0 {
            *old = v.into_iter().map(|x| x / n).collect();
        }
        n
    };
    let mut sweeps = 0;
    for _ in 0..iters.max(1) {
        sweeps += 1;
        update(c.tvv_raw(Mode::One, &eta, &omega), &mut theta);
        update(c.tvv_raw(Mode::Two, &theta, &omega), &mut eta);
        let s = update(c.tvv_raw(Mode::Three, &theta, &eta), &mut omega);
        let gain = s - sigma;
        sigma = s;
        if gain <= tol * s {
            break;
        }
    }
    Rank1Triple {
        theta,
        eta,
        omega,
        sigma,
        sweeps,
    }
}

/// The best of HOOI runs from the HOSVD start and from each of `starts`.
pub(crate) fn rank111_multistart(c: &DenseTensor3, starts: &[[Vec<f64>; 3]]) -> Rank1Triple {
    let mut best = hooi_rank111(c, hosvd_start(c), HOOI_MAX_SWEEPS, HOOI_TOL);
    for s in starts {
        let t = hooi_rank111(c, s.clone(), HOOI_MAX_SWEEPS, HOOI_TOL);
        if t.sigma > best.sigma {
            best = t;
        }
    }
    best
}

/// Largest normalized inner product between distinct slices of the core,
/// over all modes; zero for an all-orthogonal core.
pub fn all_orthogonality_deviation(core: &DenseTensor3) -> f64 {
    let mut dev: f64 = 0.0;
    for m in Mode::ALL {
        let mat = matricize(core, m);
        let g = &mat * mat.transpose();
        let scale = g.diagonal().max().max(f64::MIN_POSITIVE);
        for r in 0..g.nrows() {
            for c in 0..g.ncols() {
                if r != c {
                    dev = dev.max(g[(r, c)].abs() / scale);
                }
            }
        }
    }
    dev
}
