//! Seeded synthetic tensors.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, random_orthonormal, seeded, sym_eigen_desc};
use crate::tensor::{gram, ttm_multi, DenseTensor3, Dims, DuplicatePolicy, Mode, SparseTensor3};

/// `A = (X, Y, Z)·C` together with its ground truth.
#[derive(Clone, Debug)]
pub struct LowRank {
    pub tensor: DenseTensor3,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub core: DenseTensor3,
}

impl LowRank {
    pub fn factor(&self, mode: Mode) -> &DMatrix<f64> {
        match mode {
            Mode::One => &self.x,
            Mode::Two => &self.y,
            Mode::Three => &self.z,
        }
    }
}

/// Smallest over the modes of `λ_min / λ_max` of the core's Gram matrices.
fn core_conditioning(core: &DenseTensor3) -> f64 {
    Mode::ALL
        .iter()
        .map(|&m| {
            let (ev, _) = sym_eigen_desc(&gram(core, m));
            ev.last().copied().unwrap_or(0.0) / ev[0].max(f64::MIN_POSITIVE)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Random orthonormal `X, Y, Z` and a Gaussian core of multilinear rank
/// `ranks` (cores whose mode Gram matrices have an eigenvalue ratio below
/// `1e-6` are redrawn).
pub fn gen_low_rank(dims: Dims, ranks: [usize; 3], seed: u64) -> Result<LowRank> {
    for m in Mode::ALL {
        let r = ranks[m.index()];
        if r == 0 || r > dims[m] {
            return Err(Error::RankExceeds {
                mode: m,
                rank: r,
                available: dims[m],
            });
        }
    }
    let mut rng = seeded(seed);
    let x = random_orthonormal(dims.0[0], ranks[0], &mut rng);
    let y = random_orthonormal(dims.0[1], ranks[1], &mut rng);
    let z = random_orthonormal(dims.0[2], ranks[2], &mut rng);
    let cdims = Dims(ranks);
    let [p, q, r] = ranks;
    // a core matricization with fewer columns than rows cannot have full row rank
    if p > q * r || q > p * r || r > p * q {
        return Err(Error::InvalidArgument(format!(
            "ranks ({p}, {q}, {r}) are not attainable: each rank must be at most the product of the other two"
        )));
    }
    let mut core = DenseTensor3::new(cdims, gaussian_vector(cdims.len(), &mut rng))?;
    for _ in 0..100 {
        if core_conditioning(&core) > 1e-6 {
            break;
        }
        core = DenseTensor3::new(cdims, gaussian_vector(cdims.len(), &mut rng))?;
    }
    let tensor = ttm_multi(&core, [Some(&x), Some(&y), Some(&z)], false)?;
    Ok(LowRank {
        tensor,
        x,
        y,
        z,
        core,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueDistribution {
    #[default]
    Gaussian,
    /// Uniform on `[-1, 1)`.
    Uniform,
    /// Integers `1..=5`, like star ratings.
    Ratings,
}

impl std::str::FromStr for ValueDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ValueDistribution::Gaussian),
            "uniform" => Ok(ValueDistribution::Uniform),
            "ratings" => Ok(ValueDistribution::Ratings),
            other => Err(Error::InvalidArgument(format!("unknown distribution '{other}'"))),
        }
    }
}

fn draw<R: Rng + ?Sized>(dist: ValueDistribution, rng: &mut R) -> f64 {
    loop {
        let v = match dist {
            ValueDistribution::Gaussian => rng.sample(StandardNormal),
            ValueDistribution::Uniform => rng.random_range(-1.0..1.0),
            ValueDistribution::Ratings => rng.random_range(1..=5) as f64,
        };
        if v != 0.0 {
            return v;
        }
    }
}

/// `nnz` distinct random coordinates. With `single_per_tube`, every tube
/// `A(i, j, :)` holds at most one entry, so `⟨A,A⟩_{-3}` is diagonal.
pub fn gen_sparse(
    dims: Dims,
    nnz: usize,
    seed: u64,
    dist: ValueDistribution,
    single_per_tube: bool,
) -> Result<SparseTensor3> {
    let [l, m, n] = dims.0;
    let slots = if single_per_tube { l * m } else { dims.len() };
    if nnz > slots {
        return Err(Error::InvalidArgument(format!(
            "{nnz} nonzeros do not fit in {slots} available positions"
        )));
    }
    let mut rng = seeded(seed);
    let mut positions = sample(&mut rng, slots, nnz).into_vec();
    positions.sort_unstable();
    let mut triplets = Vec::with_capacity(nnz);
    for p in positions {
        let (i, j) = (p % l, (p / l) % m);
        let k = if single_per_tube {
            rng.random_range(0..n)
        } else {
            p / (l * m)
        };
        triplets.push((i, j, k, draw(dist, &mut rng)));
    }
    SparseTensor3::from_triplets(dims, triplets, DuplicatePolicy::Reject)
}
