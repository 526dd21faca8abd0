//! Krylov-type recursions for third-order tensors.
//!
//! The minimal recursion generates one new vector per mode and step from the
//! most recent vectors of the two other modes; the maximal recursion uses
//! every unused pair. Variants handle exhausted modes, optimized vector
//! choices, one small mode, and Lanczos on the contracted products
//! `⟨A,A⟩_{-k}`. Every run returns a [`KrylovState`] that records the
//! bases, the coefficient tensor, each generation and all breakdowns.

mod basis;
mod contracted;
mod engine;
mod matrix;
mod maximal;
mod optimized;
mod state;
mod verify;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, random_unit};
use crate::tensor::{Dims, Mode, Tensor3};

pub use basis::{AppendOutcome, OrthoBasis};
pub use contracted::{contracted_lanczos, contracted_recursion, ContractedConfig, ContractedRun};
pub use engine::{
    minimal_recursion, modified_minimal_recursion, optimized_recursion, small_mode_recursion,
};
pub use matrix::{
    arnoldi, golub_kahan, lanczos, ArnoldiResult, FnOperator, GolubKahanResult, LanczosResult,
    LinearOperator,
};
pub use maximal::{
    maximal_recursion, maximal_truncate, maximal_truncate_bounded, MaximalLimits, MaximalRun,
};
pub use optimized::{compare_candidates, CandidateComparison, ImplicitProjection, ProjectionMap};
pub use state::{
    BreakdownEvent, Checkpoint, CoeffTensor, Generation, Input, KrylovState, LoopRecord,
    RecursionKind, Resolution,
};
pub use verify::{factorization_residuals, FactorizationReport};

/// Where the starting vectors came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Random,
    FibreMean,
    User,
}

/// Unit starting vectors `u_1`, `v_1` and optionally `w_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartVectors {
    pub u1: Vec<f64>,
    pub v1: Vec<f64>,
    pub w1: Option<Vec<f64>>,
    pub provenance: Provenance,
}

fn unit(v: &[f64], what: &str) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{what} has zero or non-finite norm"
        )));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

impl StartVectors {
    /// User-supplied vectors, normalized.
    pub fn user(u1: &[f64], v1: &[f64], w1: Option<&[f64]>) -> Result<Self> {
        Ok(StartVectors {
            u1: unit(u1, "u1")?,
            v1: unit(v1, "v1")?,
            w1: w1.map(|w| unit(w, "w1")).transpose()?,
            provenance: Provenance::User,
        })
    }

    pub fn random<R: Rng + ?Sized>(dims: Dims, with_w: bool, rng: &mut R) -> Self {
        StartVectors {
            u1: random_unit(dims.0[0], rng),
            v1: random_unit(dims.0[1], rng),
            w1: with_w.then(|| random_unit(dims.0[2], rng)),
            provenance: Provenance::Random,
        }
    }

    /// Normalized means of the mode-1, mode-2 and mode-3 fibres. These lie
    /// in the ranges of the respective matricizations.
    pub fn fibre_mean<T: Tensor3 + ?Sized>(a: &T, with_w: bool) -> Result<Self> {
        let dims = a.dims();
        let mut sums = [vec![0.0; dims.0[0]], vec![0.0; dims.0[1]], vec![0.0; dims.0[2]]];
        a.for_each_entry(&mut |idx, v| {
            for m in 0..3 {
                sums[m][idx[m]] += v;
            }
        });
        let fail = |_| Error::InvalidArgument("fibre means vanish; choose other start vectors".into());
        Ok(StartVectors {
            u1: unit(&sums[0], "u1").map_err(fail)?,
            v1: unit(&sums[1], "v1").map_err(fail)?,
            w1: if with_w {
                Some(unit(&sums[2], "w1").map_err(fail)?)
            } else {
                None
            },
            provenance: Provenance::FibreMean,
        })
    }

    pub(crate) fn check(&self, dims: Dims) -> Result<()> {
        let check = |v: &[f64], mode: Mode| -> Result<()> {
            if v.len() != dims[mode] {
                return Err(Error::mismatch("start vector", mode, dims[mode], v.len()));
            }
            if (norm(v) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "start vector for mode {mode} is not unit (norm {})",
                    norm(v)
                )));
            }
            Ok(())
        };
        check(&self.u1, Mode::One)?;
        check(&self.v1, Mode::Two)?;
        if let Some(w) = &self.w1 {
            check(w, Mode::Three)?;
        }
        Ok(())
    }
}

/// Which vectors feed a new one in the minimal recursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Variant {
    /// `u_{i+1}` from `(v_i, w_i)`, `v_{i+1}` from `(u_{i+1}, w_i)`,
    /// `w_{i+1}` from `(u_{i+1}, v_{i+1})`.
    #[default]
    MostRecent,
    /// Every new vector from the step-`i` vectors of the other modes.
    /// Needs an explicit `w_1`.
    Simultaneous,
}

/// What to feed from a mode that no longer grows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExhaustedPolicy {
    /// Seeded random unit combination of the existing basis vectors.
    #[default]
    RandomCombination,
    /// The basis vectors in turn: `q_1, q_2, …, q_len, q_1, …`.
    Cyclic,
    /// The combination maximizing the new vector, found by Arnoldi on the
    /// implicit normal matrix.
    Optimized,
}

/// How the optimized recursion solves its rank-(1,1,1) subproblem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Forms the projected tensor and solves the subproblem directly.
    ExactHosvd,
    /// `t` inner minimal steps on the implicit projected tensor.
    InnerKrylov(usize),
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::InnerKrylov(3)
    }
}

/// Options shared by the recursions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionConfig {
    /// Breakdown when the residual is at most `tol · max(‖A‖, ‖candidate‖)`.
    pub tol: f64,
    /// Abort with [`Error::Breakdown`] instead of resolving breakdowns.
    pub strict: bool,
    pub seed: u64,
    pub variant: Variant,
    /// Random probes tried before a mode is declared complete.
    pub probes: usize,
    /// Plain minimal steps before optimization starts.
    pub warmup: usize,
    pub exhausted: ExhaustedPolicy,
}

impl Default for RecursionConfig {
    fn default() -> Self {
        RecursionConfig {
            tol: 1e-12,
            strict: false,
            seed: 0,
            variant: Variant::MostRecent,
            probes: 3,
            warmup: 4,
            exhausted: ExhaustedPolicy::RandomCombination,
        }
    }
}
