//! Maximal Krylov recursion and its truncation.
//!
//! Loops run over the modes in turn (u, v, w, u, …). A loop for mode `y`
//! takes every pair of existing vectors of the two other modes that has
//! not fed mode `y` before, in lexicographic order, and orthogonalizes the
//! product against the basis of `y`. Coefficients against vectors that
//! existed when the loop started are read from `H`; the others are computed.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::OrthoBasis;
use super::state::{BreakdownEvent, CoeffTensor, Generation, Input, KrylovState, LoopRecord, RecursionKind, Resolution};
use super::{RecursionConfig, StartVectors};
use crate::counter::OpCounter;
use crate::error::{Error, Result};
use crate::linalg::leading_left_singular;
use crate::tensor::{Dims, Mode, Tensor3, TensorOp};
use crate::tucker::core_project_counted;

/// Size limits `(α_max, β_max, γ_max)` (`None`: the mode dimension) and an
/// optional cap on the number of loops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaximalLimits {
    pub alpha_max: Option<usize>,
    pub beta_max: Option<usize>,
    pub gamma_max: Option<usize>,
    pub max_loops: Option<usize>,
}

impl MaximalLimits {
    pub fn loops(max_loops: usize) -> Self {
        MaximalLimits {
            max_loops: Some(max_loops),
            ..Default::default()
        }
    }

    fn resolve(&self, dims: Dims) -> Result<[usize; 3]> {
        let given = [self.alpha_max, self.beta_max, self.gamma_max];
        let mut out = [0; 3];
        for m in Mode::ALL {
            let lim = given[m.index()].unwrap_or(dims[m]);
            if lim == 0 || lim > dims[m] {
                return Err(Error::RankExceeds {
                    mode: m,
                    rank: lim,
                    available: dims[m],
                });
            }
            out[m.index()] = lim;
        }
        Ok(out)
    }
}

/// A maximal recursion that can be advanced one loop at a time.
pub struct MaximalRun<'a, T: Tensor3 + ?Sized> {
    a: &'a T,
    cfg: RecursionConfig,
    limits: [usize; 3],
    max_loops: Option<usize>,
    state: KrylovState,
    used: [HashSet<(usize, usize)>; 3],
    next: Mode,
    scale: f64,
    idle: usize,
    finished: bool,
}

impl<'a, T: Tensor3 + ?Sized> MaximalRun<'a, T> {
    /// Generates `w_1` from `u_1, v_1`. The start must not carry a `w_1`.
    pub fn new(a: &'a T, start: &StartVectors, limits: MaximalLimits, cfg: &RecursionConfig) -> Result<Self> {
        let dims = a.dims();
        start.check(dims)?;
        if start.w1.is_some() {
            return Err(Error::InvalidArgument(
                "the maximal recursion generates w1 itself".into(),
            ));
        }
        let scale = a.norm_sq().sqrt();
        if scale == 0.0 {
            return Err(Error::ZeroTensor);
        }
        let lims = limits.resolve(dims)?;
        let mut state = KrylovState::new(RecursionKind::Maximal, dims, cfg.seed);
        state.bases[0].push_unchecked(&start.u1);
        state.bases[1].push_unchecked(&start.v1);
        let cand = a.tvv_raw(Mode::Three, &start.u1, &start.v1);
        state.counter.tvv += 1;
        let out = state.bases[2].orthogonalize_append_with(&cand, &[], cfg.tol, scale)?;
        if !out.appended {
            return Err(Error::Breakdown {
                mode: Mode::Three,
                step: 1,
                residual: out.norm,
            });
        }
        state.h.insert([0, 0, 0], out.norm);
        state.generations.push(Generation {
            target: Mode::Three,
            step: 0,
            inputs: [Input::Basis(0), Input::Basis(0)],
            coeffs: Vec::new(),
            norm: out.norm,
            appended: Some(0),
        });
        state.checkpoint();
        let mut used: [HashSet<(usize, usize)>; 3] = Default::default();
        used[2].insert((0, 0));
        Ok(MaximalRun {
            a,
            cfg: cfg.clone(),
            limits: lims,
            max_loops: limits.max_loops,
            state,
            used,
            next: Mode::One,
            scale,
            idle: 0,
            finished: false,
        })
    }

    pub fn state(&self) -> &KrylovState {
        &self.state
    }

    pub fn into_state(self) -> KrylovState {
        self.state
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Runs the next loop; `None` once the recursion has stopped.
    pub fn run_loop(&mut self) -> Result<Option<LoopRecord>> {
        if self.finished {
            return Ok(None);
        }
        if self.max_loops.is_some_and(|m| self.state.loops.len() >= m) {
            self.finished = true;
            return Ok(None);
        }
        let dims = self.a.dims();
        let sizes = self.state.sizes();
        let at_limit = |m: Mode| sizes[m.index()] >= self.limits[m.index()];
        let y = self.next;
        if Mode::ALL.iter().all(|&m| at_limit(m)) || (at_limit(y) && self.limits[y.index()] < dims[y]) {
            self.finished = true;
            return Ok(None);
        }

        let record = self.mode_loop(y)?;
        self.state.loops.push(record);
        self.state.checkpoint();
        self.next = match y {
            Mode::One => Mode::Two,
            Mode::Two => Mode::Three,
            Mode::Three => Mode::One,
        };
        if record.sizes == sizes {
            self.idle += 1;
        } else {
            self.idle = 0;
        }
        if !record.complete || self.idle >= 3 {
            self.finished = true;
        }
        Ok(Some(record))
    }

    fn mode_loop(&mut self, y: Mode) -> Result<LoopRecord> {
        let dims = self.a.dims();
        let (x1, x2) = y.others();
        let n1 = self.state.bases[x1.index()].len();
        let n2 = self.state.bases[x2.index()].len();
        let limit = self.limits[y.index()];
        let old = self.state.bases[y.index()].len();
        let loop_no = self.state.loops.len() + 1;
        let mut complete = true;

        'pairs: for i1 in 0..n1 {
            for i2 in 0..n2 {
                if self.used[y.index()].contains(&(i1, i2)) {
                    continue;
                }
                let basis = &self.state.bases[y.index()];
                if basis.len() >= limit && limit < dims[y] {
                    complete = false;
                    break 'pairs;
                }
                self.used[y.index()].insert((i1, i2));

                let cand = self.a.tvv_raw(
                    y,
                    self.state.bases[x1.index()].vector(i1),
                    self.state.bases[x2.index()].vector(i2),
                );
                self.state.counter.tvv += 1;
                let mut idx = [0; 3];
                idx[x1.index()] = i1;
                idx[x2.index()] = i2;
                let known = self.state.h.fibre(y, idx, old);

                let basis = &mut self.state.bases[y.index()];
                let before = basis.len();
                let out = basis.orthogonalize_append_with(&cand, &known, self.cfg.tol, self.scale)?;
                for (lambda, &c) in out.coeffs.iter().enumerate().skip(old) {
                    idx[y.index()] = lambda;
                    self.state.h.insert(idx, c);
                }
                if out.appended {
                    idx[y.index()] = before;
                    self.state.h.insert(idx, out.norm);
                } else if before < dims[y] {
                    if self.cfg.strict {
                        return Err(Error::Breakdown {
                            mode: y,
                            step: loop_no,
                            residual: out.norm,
                        });
                    }
                    self.state.events.push(BreakdownEvent {
                        mode: y,
                        step: loop_no,
                        residual: out.norm,
                        resolution: Resolution::SubspaceComplete,
                    });
                }
                self.state.generations.push(Generation {
                    target: y,
                    step: loop_no,
                    inputs: [Input::Basis(i1), Input::Basis(i2)],
                    coeffs: out.coeffs,
                    norm: out.norm,
                    appended: out.appended.then_some(before),
                });
            }
        }
        Ok(LoopRecord {
            mode: y,
            sizes: self.state.sizes(),
            complete,
        })
    }
}

/// Runs maximal loops until the limits, the loop cap, or saturation stop it.
pub fn maximal_recursion<T: Tensor3 + ?Sized>(
    a: &T,
    start: &StartVectors,
    limits: MaximalLimits,
    cfg: &RecursionConfig,
) -> Result<KrylovState> {
    let mut run = MaximalRun::new(a, start, limits, cfg)?;
    while run.run_loop()?.is_some() {}
    Ok(run.into_state())
}

fn check_target(state: &KrylovState, target: [usize; 3]) -> Result<()> {
    for m in Mode::ALL {
        let len = state.basis(m).len();
        if target[m.index()] == 0 || target[m.index()] > len {
            return Err(Error::RankExceeds {
                mode: m,
                rank: target[m.index()],
                available: len,
            });
        }
    }
    Ok(())
}

/// Dominant `p`-dimensional subspace of `⟨A; Q_{x1}, Q_{x2}⟩_{-y}`.
fn dominant<T: Tensor3 + ?Sized>(
    a: &T,
    y: Mode,
    q1: &OrthoBasis,
    q2: &OrthoBasis,
    p: usize,
    counter: &mut OpCounter,
) -> Result<OrthoBasis> {
    let dim = a.dims()[y];
    let mut cols = DMatrix::zeros(dim, q1.len() * q2.len());
    for i1 in 0..q1.len() {
        for i2 in 0..q2.len() {
            let z = a.tvv_raw(y, q1.vector(i1), q2.vector(i2));
            counter.tvv += 1;
            cols.column_mut(i1 * q2.len() + i2).copy_from_slice(&z);
        }
    }
    OrthoBasis::from_matrix(y, &leading_left_singular(&cols, p))
}

fn truncated_state(state: &KrylovState, bases: [OrthoBasis; 3], counter: OpCounter) -> KrylovState {
    KrylovState {
        kind: state.kind,
        dims: state.dims,
        bases,
        h: CoeffTensor::default(),
        generations: Vec::new(),
        events: state.events.clone(),
        counter,
        checkpoints: Vec::new(),
        loops: Vec::new(),
        seed: state.seed,
    }
}

/// Reduces each basis larger than its target to the leading left singular
/// subspace of `⟨A; Q_{x1}, Q_{x2}⟩_{-y}` formed with the full other bases.
/// Modes already at their target are kept. The result carries no
/// coefficient tensor: it is no longer a Krylov factorization.
pub fn maximal_truncate<T: Tensor3 + ?Sized>(
    state: &KrylovState,
    a: &T,
    target: [usize; 3],
) -> Result<KrylovState> {
    check_target(state, target)?;
    if state.sizes() == target {
        return Ok(state.clone());
    }
    let mut counter = state.counter;
    let mut bases = state.bases.clone();
    for y in Mode::ALL {
        let p = target[y.index()];
        if state.basis(y).len() > p {
            let (x1, x2) = y.others();
            bases[y.index()] = dominant(a, y, state.basis(x1), state.basis(x2), p, &mut counter)?;
        }
    }
    Ok(truncated_state(state, bases, counter))
}

/// Memory-bounded truncation: the other two bases are first reduced to the
/// `keep` vectors whose core slices `⟨A; U, V, W⟩` have the largest norms.
pub fn maximal_truncate_bounded<T: Tensor3 + ?Sized>(
    state: &KrylovState,
    a: &T,
    target: [usize; 3],
    keep: [usize; 3],
) -> Result<KrylovState> {
    check_target(state, target)?;
    if state.sizes() == target {
        return Ok(state.clone());
    }
    let mut counter = state.counter;
    let [u, v, w] = state.factors();
    let core = core_project_counted(a, [&u, &v, &w], &mut counter)?;
    let cd = core.dims();

    let mut slice_norms: [Vec<f64>; 3] = [vec![0.0; cd.0[0]], vec![0.0; cd.0[1]], vec![0.0; cd.0[2]]];
    for k in 0..cd.0[2] {
        for j in 0..cd.0[1] {
            for i in 0..cd.0[0] {
                let x = core.get(i, j, k).powi(2);
                slice_norms[0][i] += x;
                slice_norms[1][j] += x;
                slice_norms[2][k] += x;
            }
        }
    }
    let dominant_subset = |m: Mode| -> OrthoBasis {
        let b = state.basis(m);
        let n = keep[m.index()].clamp(1, b.len());
        let mut order: Vec<usize> = (0..b.len()).collect();
        order.sort_by(|&x, &y| slice_norms[m.index()][y].total_cmp(&slice_norms[m.index()][x]));
        let mut sub = OrthoBasis::new(m, b.dim());
        for &i in &order[..n] {
            sub.push_unchecked(b.vector(i));
        }
        sub
    };

    let mut bases = state.bases.clone();
    for y in Mode::ALL {
        let p = target[y.index()];
        if state.basis(y).len() > p {
            let (x1, x2) = y.others();
            let s1 = dominant_subset(x1);
            let s2 = dominant_subset(x2);
            bases[y.index()] = dominant(a, y, &s1, &s2, p, &mut counter)?;
        }
    }
    Ok(truncated_state(state, bases, counter))
}
