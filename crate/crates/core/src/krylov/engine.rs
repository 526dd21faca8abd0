//! Shared driver of the minimal recursion family.
//!
//! Each mode has a target size. At step `s` a new vector in mode `y` is
//! generated from one vector of each other mode `x`: the vector appended to
//! `x` at step `s` when `x` comes before `y` (step `s − 1` otherwise), so
//! that the plain run reproduces the minimal recursion exactly. When `x`
//! produced no vector at that step (target reached or subspace complete),
//! the exhausted-mode policy supplies one.

use std::collections::HashMap;

use super::optimized::{exact_choice, inner_choice, small_mode_choice};
use super::state::{BreakdownEvent, Generation, Input, KrylovState, RecursionKind, Resolution};
use super::{ExhaustedPolicy, RecursionConfig, StartVectors, Strategy, Variant};
use crate::error::{Error, Result};
use crate::linalg::{random_unit, seeded, SeededRng};
use crate::tensor::{Mode, Tensor3, TensorOp};

pub(crate) struct Plan {
    pub kind: RecursionKind,
    pub targets: [usize; 3],
    pub optimize: Option<Strategy>,
    pub exhausted: [ExhaustedPolicy; 3],
    /// Reference magnitude for the breakdown test, normally `‖A‖`.
    pub scale: f64,
}

/// `tvv` with `lo`/`hi` the vectors of the lower/higher of the other modes.
pub(crate) fn tvv_for<T: TensorOp + ?Sized>(a: &T, target: Mode, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    a.tvv_raw(target, lo, hi)
}

pub(crate) struct Engine<'a, T: TensorOp + ?Sized> {
    a: &'a T,
    cfg: &'a RecursionConfig,
    plan: Plan,
    pub(crate) state: KrylovState,
    rng: SeededRng,
    complete: [bool; 3],
    /// Index of the vector appended at each step, per mode.
    produced: [HashMap<usize, usize>; 3],
    memo: HashMap<(Mode, usize), Input>,
    cyclic: [usize; 3],
}

impl<'a, T: TensorOp + ?Sized> Engine<'a, T> {
    pub(crate) fn new(a: &'a T, cfg: &'a RecursionConfig, plan: Plan) -> Self {
        let state = KrylovState::new(plan.kind, a.dims(), cfg.seed);
        Engine {
            a,
            cfg,
            plan,
            state,
            rng: seeded(cfg.seed),
            complete: [false; 3],
            produced: Default::default(),
            memo: HashMap::new(),
            cyclic: [0; 3],
        }
    }

    pub(crate) fn run(mut self, start: &StartVectors) -> Result<KrylovState> {
        let dims = self.a.dims();
        start.check(dims)?;
        for m in Mode::ALL {
            let t = self.plan.targets[m.index()];
            if t == 0 || t > dims[m] {
                return Err(Error::RankExceeds {
                    mode: m,
                    rank: t,
                    available: dims[m],
                });
            }
        }
        if self.cfg.variant == Variant::Simultaneous && start.w1.is_none() {
            return Err(Error::InvalidArgument(
                "the simultaneous variant needs an explicit w1".into(),
            ));
        }

        self.state.bases[0].push_unchecked(&start.u1);
        self.state.bases[1].push_unchecked(&start.v1);
        self.produced[0].insert(1, 0);
        self.produced[1].insert(1, 0);
        match &start.w1 {
            Some(w) => {
                self.state.bases[2].push_unchecked(w);
                self.produced[2].insert(1, 0);
            }
            None => self.generate(Mode::Three, 1)?,
        }
        self.state.checkpoint();

        let mut step = 1;
        while Mode::ALL.iter().any(|&m| self.active(m)) {
            step += 1;
            for y in Mode::ALL {
                if self.active(y) {
                    self.generate(y, step)?;
                }
            }
            self.state.checkpoint();
        }
        Ok(self.state)
    }

    fn active(&self, m: Mode) -> bool {
        !self.complete[m.index()] && self.state.bases[m.index()].len() < self.plan.targets[m.index()]
    }

    fn expected_step(&self, x: Mode, y: Mode, step: usize) -> usize {
        match self.cfg.variant {
            Variant::MostRecent if x < y => step,
            _ => step - 1,
        }
    }

    /// The real input from mode `x`, if it produced a vector at the expected step.
    fn real_source(&self, x: Mode, y: Mode, step: usize) -> Option<Input> {
        let expected = self.expected_step(x, y, step);
        self.produced[x.index()].get(&expected).map(|&idx| Input::Basis(idx))
    }

    /// Stand-in for a missing vector of mode `x`, shared by all generations
    /// that refer to the same step.
    fn virtual_source(&mut self, x: Mode, y: Mode, step: usize) -> Input {
        let key = (x, self.expected_step(x, y, step));
        if let Some(input) = self.memo.get(&key) {
            return input.clone();
        }
        let len = self.state.bases[x.index()].len();
        let input = match self.plan.exhausted[x.index()] {
            ExhaustedPolicy::RandomCombination => Input::Combination(random_unit(len, &mut self.rng)),
            ExhaustedPolicy::Cyclic | ExhaustedPolicy::Optimized => {
                let c = self.cyclic[x.index()] % len;
                self.cyclic[x.index()] += 1;
                Input::Basis(c)
            }
        };
        self.memo.insert(key, input.clone());
        input
    }

    fn materialize(&self, x: Mode, input: &Input) -> Vec<f64> {
        let b = &self.state.bases[x.index()];
        match input {
            Input::Basis(i) => b.vector(*i).to_vec(),
            Input::Combination(c) => b.combine(c),
            Input::Free(v) => v.clone(),
        }
    }

    fn tvv(&mut self, y: Mode, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        self.state.counter.tvv += 1;
        tvv_for(self.a, y, lo, hi)
    }

    fn generate(&mut self, y: Mode, step: usize) -> Result<()> {
        let (x1, x2) = y.others();
        let r1 = self.real_source(x1, y, step);
        let r2 = self.real_source(x2, y, step);

        if let Some(strategy) = self.plan.optimize {
            if step > self.cfg.warmup {
                let in1 = r1.unwrap_or_else(|| self.virtual_source(x1, y, step));
                let in2 = r2.unwrap_or_else(|| self.virtual_source(x2, y, step));
                return self.optimized_generate(y, step, strategy, [in1, in2]);
            }
        }

        // a single missing input under the optimized policy is chosen per target
        let opt1 = r1.is_none() && self.plan.exhausted[x1.index()] == ExhaustedPolicy::Optimized;
        let opt2 = r2.is_none() && self.plan.exhausted[x2.index()] == ExhaustedPolicy::Optimized;
        if opt1 != opt2 && (r1.is_some() || r2.is_some()) {
            let (small, other, other_input) = if opt1 {
                (x1, x2, r2.clone().unwrap())
            } else {
                (x2, x1, r1.clone().unwrap())
            };
            return self.small_mode_generate(y, step, small, other, other_input);
        }

        let in1 = r1.unwrap_or_else(|| self.virtual_source(x1, y, step));
        let in2 = r2.unwrap_or_else(|| self.virtual_source(x2, y, step));
        let v1 = self.materialize(x1, &in1);
        let v2 = self.materialize(x2, &in2);
        let cand = self.tvv(y, &v1, &v2);
        let (appended, residual) = self.absorb(y, step, [in1, in2], &cand)?;
        if !appended {
            self.breakdown(y, step, residual)?;
        }
        Ok(())
    }

    /// Orthogonalizes `cand` into the basis of `y` and records the generation.
    fn absorb(&mut self, y: Mode, step: usize, inputs: [Input; 2], cand: &[f64]) -> Result<(bool, f64)> {
        let (x1, x2) = y.others();
        let basis = &mut self.state.bases[y.index()];
        let before = basis.len();
        let out = basis.orthogonalize_append_with(cand, &[], self.cfg.tol, self.plan.scale)?;
        if let [Input::Basis(i1), Input::Basis(i2)] = &inputs {
            let mut idx = [0; 3];
            idx[x1.index()] = *i1;
            idx[x2.index()] = *i2;
            for (lambda, &c) in out.coeffs.iter().enumerate() {
                idx[y.index()] = lambda;
                self.state.h.insert(idx, c);
            }
            if out.appended {
                idx[y.index()] = before;
                self.state.h.insert(idx, out.norm);
            }
        }
        let appended = out.appended.then_some(before);
        self.state.generations.push(Generation {
            target: y,
            step,
            inputs,
            coeffs: out.coeffs,
            norm: out.norm,
            appended,
        });
        if out.appended {
            self.produced[y.index()].insert(step, before);
        }
        Ok((out.appended, out.norm))
    }

    fn breakdown(&mut self, y: Mode, step: usize, residual: f64) -> Result<()> {
        if self.cfg.strict {
            return Err(Error::Breakdown {
                mode: y,
                step,
                residual,
            });
        }
        if !self.state.bases[y.index()].is_full() {
            let (x1, x2) = y.others();
            let dims = self.a.dims();
            for _ in 0..self.cfg.probes {
                let p1 = random_unit(dims[x1], &mut self.rng);
                let p2 = random_unit(dims[x2], &mut self.rng);
                let cand = self.tvv(y, &p1, &p2);
                let (appended, _) = self.absorb(y, step, [Input::Free(p1), Input::Free(p2)], &cand)?;
                if appended {
                    self.state.events.push(BreakdownEvent {
                        mode: y,
                        step,
                        residual,
                        resolution: Resolution::RandomReplacement,
                    });
                    return Ok(());
                }
            }
        }
        self.complete[y.index()] = true;
        self.state.events.push(BreakdownEvent {
            mode: y,
            step,
            residual,
            resolution: Resolution::SubspaceComplete,
        });
        Ok(())
    }

    /// Coordinates of an input in its mode's basis, normalized.
    fn coordinates(&self, x: Mode, input: &Input) -> Vec<f64> {
        let b = &self.state.bases[x.index()];
        let mut c = match input {
            Input::Basis(i) => {
                let mut e = vec![0.0; b.len()];
                e[*i] = 1.0;
                e
            }
            Input::Combination(c) => {
                let mut c = c.clone();
                c.resize(b.len(), 0.0);
                c
            }
            Input::Free(v) => b.coefficients(v),
        };
        let n = crate::linalg::norm(&c);
        if n > 0.0 {
            c.iter_mut().for_each(|v| *v /= n);
        }
        c
    }

    fn optimized_generate(&mut self, y: Mode, step: usize, strategy: Strategy, plain: [Input; 2]) -> Result<()> {
        let (x1, x2) = y.others();
        let v1 = self.materialize(x1, &plain[0]);
        let v2 = self.materialize(x2, &plain[1]);
        let plain_cand = self.tvv(y, &v1, &v2);
        let plain_proj = self.state.bases[y.index()].project_out(&plain_cand);
        let c1 = self.coordinates(x1, &plain[0]);
        let c2 = self.coordinates(x2, &plain[1]);

        let choice = match strategy {
            Strategy::ExactHosvd => Some(exact_choice(
                self.a,
                &self.state.bases,
                y,
                (&c1, &c2),
                &plain_proj,
                &mut self.state.counter,
            )),
            Strategy::InnerKrylov(t) => inner_choice(
                self.a,
                &self.state.bases,
                y,
                (&c1, &c2),
                &plain_proj,
                t,
                self.cfg,
                self.plan.scale,
                &mut self.state.counter,
            ),
        };

        let (appended, residual) = match choice {
            Some((theta, eta)) => {
                let w1 = self.state.bases[x1.index()].combine(&theta);
                let w2 = self.state.bases[x2.index()].combine(&eta);
                let cand = self.tvv(y, &w1, &w2);
                self.absorb(y, step, [Input::Combination(theta), Input::Combination(eta)], &cand)?
            }
            None => {
                self.state.events.push(BreakdownEvent {
                    mode: y,
                    step,
                    residual: crate::linalg::norm(&plain_proj),
                    resolution: Resolution::PlainFallback,
                });
                self.absorb(y, step, plain, &plain_cand)?
            }
        };
        if !appended {
            self.breakdown(y, step, residual)?;
        }
        Ok(())
    }

    fn small_mode_generate(
        &mut self,
        y: Mode,
        step: usize,
        small: Mode,
        other: Mode,
        other_input: Input,
    ) -> Result<()> {
        let xo = self.materialize(other, &other_input);
        let start = self.cyclic[small.index()] % self.state.bases[small.index()].len();
        self.cyclic[small.index()] += 1;
        let theta = small_mode_choice(
            self.a,
            &self.state.bases,
            y,
            small,
            &xo,
            start,
            self.cfg.tol,
            &mut self.state.counter,
        )?;
        let xs = self.state.bases[small.index()].combine(&theta);
        let (lo, hi, inputs) = if small < other {
            (&xs, &xo, [Input::Combination(theta), other_input])
        } else {
            (&xo, &xs, [other_input, Input::Combination(theta)])
        };
        let cand = self.tvv(y, lo, hi);
        let (appended, residual) = self.absorb(y, step, inputs, &cand)?;
        if !appended {
            self.breakdown(y, step, residual)?;
        }
        Ok(())
    }
}

fn run_plain<T: Tensor3 + ?Sized>(
    a: &T,
    start: &StartVectors,
    kind: RecursionKind,
    targets: [usize; 3],
    optimize: Option<Strategy>,
    exhausted: [ExhaustedPolicy; 3],
    cfg: &RecursionConfig,
) -> Result<KrylovState> {
    let scale = a.norm_sq().sqrt();
    if scale == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let plan = Plan {
        kind,
        targets,
        optimize,
        exhausted,
        scale,
    };
    Engine::new(a, cfg, plan).run(start)
}

/// Minimal Krylov recursion: `k` vectors per mode, one new vector per mode
/// and step from the most recent vectors of the other two modes.
pub fn minimal_recursion<T: Tensor3 + ?Sized>(
    a: &T,
    start: &StartVectors,
    k: usize,
    cfg: &RecursionConfig,
) -> Result<KrylovState> {
    run_plain(
        a,
        start,
        RecursionKind::Minimal,
        [k; 3],
        None,
        [cfg.exhausted; 3],
        cfg,
    )
}

/// Minimal recursion with per-mode targets `(p, q, r)`. A mode stops
/// growing at its target (or when its subspace is complete) and then feeds
/// the other modes through the configured exhausted-mode policy.
pub fn modified_minimal_recursion<T: Tensor3 + ?Sized>(
    a: &T,
    start: &StartVectors,
    target: [usize; 3],
    cfg: &RecursionConfig,
) -> Result<KrylovState> {
    run_plain(
        a,
        start,
        RecursionKind::Modified,
        target,
        None,
        [cfg.exhausted; 3],
        cfg,
    )
}

/// Minimal recursion whose new vectors use the combination of the other
/// modes' bases that maximizes the new direction, after `cfg.warmup` plain steps.
pub fn optimized_recursion<T: Tensor3 + ?Sized>(
    a: &T,
    start: &StartVectors,
    k: usize,
    strategy: Strategy,
    cfg: &RecursionConfig,
) -> Result<KrylovState> {
    if let Strategy::InnerKrylov(0) = strategy {
        return Err(Error::InvalidArgument("inner Krylov steps must be positive".into()));
    }
    run_plain(
        a,
        start,
        RecursionKind::Optimized,
        [k; 3],
        Some(strategy),
        [cfg.exhausted; 3],
        cfg,
    )
}

/// Recursion for a tensor with one small mode: the small mode's basis is
/// completed at its dimension and afterwards chosen by `policy`, while the
/// other modes grow to `k`.
pub fn small_mode_recursion<T: Tensor3 + ?Sized>(
    a: &T,
    start: &StartVectors,
    small: Mode,
    k: usize,
    policy: ExhaustedPolicy,
    cfg: &RecursionConfig,
) -> Result<KrylovState> {
    let dims = a.dims();
    if dims[small] >= k {
        return Err(Error::InvalidArgument(format!(
            "mode {small} has dimension {} which is not smaller than k = {k}",
            dims[small]
        )));
    }
    let mut targets = [k; 3];
    targets[small.index()] = dims[small];
    let mut exhausted = [cfg.exhausted; 3];
    exhausted[small.index()] = policy;
    run_plain(a, start, RecursionKind::SmallMode, targets, None, exhausted, cfg)
}

/// Runs the plain recursion on an arbitrary operator with all three start
/// vectors given (used for inner runs on implicit tensors). Taking a trait
/// object keeps nested implicit operators from multiplying instantiations.
pub(crate) fn run_on_operator(
    a: &dyn TensorOp,
    start: &StartVectors,
    targets: [usize; 3],
    scale: f64,
    cfg: &RecursionConfig,
) -> Result<KrylovState> {
    let plan = Plan {
        kind: RecursionKind::Minimal,
        targets,
        optimize: None,
        exhausted: [ExhaustedPolicy::RandomCombination; 3],
        scale,
    };
    Engine::new(a, cfg, plan).run(start)
}
