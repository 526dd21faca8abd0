use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::OrthoBasis;
use crate::counter::OpCounter;
use crate::tensor::{DenseTensor3, Dims, Mode};

/// Growing coefficient tensor `H` with `h_{λμν} = ⟨A; u_λ, v_μ, w_ν⟩`.
///
/// Only entries produced by the recursion are stored (the fill mask); every
/// other entry reads as zero. Entries are written once and never modified.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "CoeffRepr", into = "CoeffRepr")]
pub struct CoeffTensor {
    dims: [usize; 3],
    entries: HashMap<[usize; 3], f64>,
}

#[derive(Serialize, Deserialize)]
struct CoeffRepr {
    dims: [usize; 3],
    entries: Vec<([usize; 3], f64)>,
}

impl From<CoeffRepr> for CoeffTensor {
    fn from(r: CoeffRepr) -> Self {
        CoeffTensor {
            dims: r.dims,
            entries: r.entries.into_iter().collect(),
        }
    }
}

impl From<CoeffTensor> for CoeffRepr {
    fn from(t: CoeffTensor) -> Self {
        let mut entries: Vec<_> = t.entries.into_iter().collect();
        entries.sort_by_key(|(idx, _)| [idx[2], idx[1], idx[0]]);
        CoeffRepr {
            dims: t.dims,
            entries,
        }
    }
}

impl CoeffTensor {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, idx: [usize; 3]) -> f64 {
        self.entries.get(&idx).copied().unwrap_or(0.0)
    }

    pub fn is_filled(&self, idx: [usize; 3]) -> bool {
        self.entries.contains_key(&idx)
    }

    pub fn filled(&self) -> usize {
        self.entries.len()
    }

    /// Stores an entry unless it is already present; returns whether it was new.
    pub fn insert(&mut self, idx: [usize; 3], value: f64) -> bool {
        for (d, &i) in self.dims.iter_mut().zip(&idx) {
            *d = (*d).max(i + 1);
        }
        match self.entries.entry(idx) {
            std::collections::hash_map::Entry::Occupied(_) => false,
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(value);
                true
            }
        }
    }

    /// Overwrites an entry (fault injection and tests only).
    pub fn set(&mut self, idx: [usize; 3], value: f64) {
        self.entries.insert(idx, value);
    }

    /// Mode fibre along `mode` through position `fixed` (the entry of `fixed`
    /// in `mode` is ignored), of the given length.
    pub fn fibre(&self, mode: Mode, fixed: [usize; 3], len: usize) -> Vec<f64> {
        (0..len)
            .map(|t| {
                let mut idx = fixed;
                idx[mode.index()] = t;
                self.get(idx)
            })
            .collect()
    }

    /// The leading `dims` block as a dense tensor.
    pub fn block(&self, dims: Dims) -> DenseTensor3 {
        DenseTensor3::from_fn(dims, |i, j, k| self.get([i, j, k]))
    }
}

/// One argument of a generating tensor-vector-vector product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Input {
    /// A basis vector of that mode (0-based index).
    Basis(usize),
    /// A combination of the basis vectors of that mode.
    Combination(Vec<f64>),
    /// An arbitrary vector of the full mode dimension.
    Free(Vec<f64>),
}

/// Record of one generated candidate `tvv(A, x, y)` and its orthogonalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub target: Mode,
    pub step: usize,
    /// Inputs for the two other modes, lower mode first.
    pub inputs: [Input; 2],
    /// Coefficients against the target basis before the step.
    pub coeffs: Vec<f64>,
    pub norm: f64,
    /// Index of the appended vector, if any.
    pub appended: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    /// No direction outside the basis could be produced; the mode stops growing.
    SubspaceComplete,
    /// A probe in the range of the tensor supplied the new vector.
    RandomReplacement,
    /// The optimized step failed and the plain step was used instead.
    PlainFallback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreakdownEvent {
    pub mode: Mode,
    pub step: usize,
    pub residual: f64,
    pub resolution: Resolution,
}

/// Basis sizes and cumulative operation counts at the end of a step (or loop).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub sizes: [usize; 3],
    pub counter: OpCounter,
}

/// A loop of the maximal recursion: the mode that grew and the basis sizes
/// at its end. `complete` is false when a size limit cut the loop short.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub mode: Mode,
    pub sizes: [usize; 3],
    pub complete: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecursionKind {
    Minimal,
    Modified,
    Maximal,
    Optimized,
    SmallMode,
    Contracted,
}

/// Everything a recursion run produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KrylovState {
    pub kind: RecursionKind,
    pub dims: Dims,
    pub bases: [OrthoBasis; 3],
    pub h: CoeffTensor,
    pub generations: Vec<Generation>,
    pub events: Vec<BreakdownEvent>,
    pub counter: OpCounter,
    pub checkpoints: Vec<Checkpoint>,
    pub loops: Vec<LoopRecord>,
    pub seed: u64,
}

impl KrylovState {
    pub fn new(kind: RecursionKind, dims: Dims, seed: u64) -> Self {
        KrylovState {
            kind,
            dims,
            bases: OrthoBasis::for_dims(dims),
            h: CoeffTensor::default(),
            generations: Vec::new(),
            events: Vec::new(),
            counter: OpCounter::default(),
            checkpoints: Vec::new(),
            loops: Vec::new(),
            seed,
        }
    }

    pub fn basis(&self, mode: Mode) -> &OrthoBasis {
        &self.bases[mode.index()]
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.bases[0].len(), self.bases[1].len(), self.bases[2].len()]
    }

    pub fn factors(&self) -> [DMatrix<f64>; 3] {
        [
            self.bases[0].matrix(),
            self.bases[1].matrix(),
            self.bases[2].matrix(),
        ]
    }

    pub(crate) fn checkpoint(&mut self) {
        self.checkpoints.push(Checkpoint {
            sizes: self.sizes(),
            counter: self.counter,
        });
    }
}
