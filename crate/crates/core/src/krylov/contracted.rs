//! Lanczos on the contracted products `⟨A,A⟩_{-k}`.

use serde::{Deserialize, Serialize};

use super::matrix::{lanczos, FnOperator, LanczosResult};
use super::state::{KrylovState, RecursionKind};
use super::StartVectors;
use crate::counter::OpCounter;
use crate::error::{Error, Result};
use crate::tensor::{gram, gram_matvec, Mode, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractedConfig {
    pub tol: f64,
    /// The mode-3 Gram matrix is formed explicitly when `n` is at most this.
    pub explicit_gram_max: usize,
}

impl Default for ContractedConfig {
    fn default() -> Self {
        ContractedConfig {
            tol: 1e-12,
            explicit_gram_max: 4096,
        }
    }
}

/// `k` Lanczos matvecs with `⟨A,A⟩_{-mode}`. Each matvec is charged as a
/// Gram matvec (two tvv-equivalents), also when the Gram matrix is explicit.
pub fn contracted_lanczos<T: Tensor3 + ?Sized>(
    a: &T,
    mode: Mode,
    k: usize,
    start: &[f64],
    cfg: &ContractedConfig,
    counter: &mut OpCounter,
) -> Result<LanczosResult> {
    let dim = a.dims()[mode];
    if k == 0 || k > dim {
        return Err(Error::RankExceeds {
            mode,
            rank: k,
            available: dim,
        });
    }
    let result = if mode == Mode::Three && dim <= cfg.explicit_gram_max {
        let mut g = gram(a, mode);
        lanczos(&mut g, mode, start, k, cfg.tol)?
    } else {
        let mut op = FnOperator::new(dim, |u: &[f64]| {
            gram_matvec(a, mode, u).expect("start length checked by lanczos")
        });
        lanczos(&mut op, mode, start, k, cfg.tol)?
    };
    counter.gram_matvec += result.matvecs as u64;
    Ok(result)
}

/// The three Lanczos runs and the state holding their bases.
#[derive(Clone, Debug)]
pub struct ContractedRun {
    pub state: KrylovState,
    pub lanczos: [LanczosResult; 3],
}

/// Lanczos in every mode with sizes `(p, q, r)` from `u_1, v_1, w_1`.
pub fn contracted_recursion<T: Tensor3 + ?Sized>(
    a: &T,
    start: &StartVectors,
    sizes: [usize; 3],
    cfg: &ContractedConfig,
) -> Result<ContractedRun> {
    let dims = a.dims();
    start.check(dims)?;
    let w1 = start.w1.as_ref().ok_or_else(|| {
        Error::InvalidArgument("contracted Lanczos needs a start vector in every mode".into())
    })?;
    let mut state = KrylovState::new(RecursionKind::Contracted, dims, 0);
    let starts = [&start.u1, &start.v1, w1];
    let mut runs = Vec::with_capacity(3);
    for m in Mode::ALL {
        let r = contracted_lanczos(a, m, sizes[m.index()], starts[m.index()], cfg, &mut state.counter)?;
        state.bases[m.index()] = r.basis.clone();
        runs.push(r);
    }
    state.checkpoint();
    let lanczos: [LanczosResult; 3] = runs.try_into().expect("three modes");
    Ok(ContractedRun { state, lanczos })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_vector, seeded, sym_eigen_desc};
    use crate::tensor::{DenseTensor3, Dims};

    #[test]
    fn ritz_values_lie_in_the_spectrum() {
        let mut rng = seeded(8);
        let dims = Dims::new(8, 8, 8);
        let a = DenseTensor3::new(dims, gaussian_vector(dims.len(), &mut rng)).unwrap();
        let start = crate::linalg::random_unit(8, &mut rng);
        let mut c = OpCounter::default();
        let r = contracted_lanczos(&a, Mode::One, 5, &start, &ContractedConfig::default(), &mut c).unwrap();
        assert_eq!(c.gram_matvec, 5);
        let (ev, _) = sym_eigen_desc(&gram(&a, Mode::One));
        let (ritz, _) = sym_eigen_desc(&r.tridiagonal());
        for t in ritz {
            assert!(t <= ev[0] * (1.0 + 1e-12) && t >= ev[7] * (1.0 - 1e-12));
        }
    }
}
