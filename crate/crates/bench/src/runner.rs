//! Runs an [`ExperimentSpec`] and collects one row per (method, rank, rep).

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use tensor_krylov::archive::{self, Payload, TuckerMeta};
use tensor_krylov::krylov::{
    contracted_recursion, maximal_truncate, minimal_recursion,
    modified_minimal_recursion, optimized_recursion, small_mode_recursion, ContractedConfig,
    KrylovState, MaximalLimits, MaximalRun, RecursionConfig, StartVectors,
};
use tensor_krylov::linalg::{gaussian_vector, max_principal_angle, seeded};
use tensor_krylov::synth::{gen_low_rank, gen_sparse};
use tensor_krylov::tucker::{core_project_tvv, hosvd_via_krylov_state, truncated_hosvd, TuckerDecomp};
use tensor_krylov::{io, AnyTensor, DenseTensor3, Mode, OpCounter, Tensor3, TensorOp};

use crate::spec::{ExperimentSpec, Method, Rank, Source, StartPolicy};

/// One CSV line. Failed runs keep their identifying columns and leave the
/// measurements empty; the message goes to [`Report::failures`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub experiment_id: String,
    pub method: String,
    pub rank: String,
    pub rep: usize,
    pub seed: u64,
    pub core_norm: Option<f64>,
    pub rel_error: Option<f64>,
    pub max_principal_angle: Option<f64>,
    pub tvv_count: Option<u64>,
    pub wall_ms: Option<f64>,
    pub breakdowns: Option<usize>,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub rows: Vec<Row>,
    pub failures: Vec<String>,
}

impl Report {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Fraction of (rank, rep) pairs where method `a` has a strictly larger
    /// core norm than `b`. `None` when no pair has both values.
    pub fn win_fraction(&self, a: Method, b: Method) -> Option<f64> {
        let mut wins = 0usize;
        let mut total = 0usize;
        for ra in self.rows.iter().filter(|r| r.method == a.name()) {
            let rb = self
                .rows
                .iter()
                .find(|r| r.method == b.name() && r.rank == ra.rank && r.rep == ra.rep);
            if let (Some(x), Some(y)) = (ra.core_norm, rb.and_then(|r| r.core_norm)) {
                total += 1;
                wins += usize::from(x > y);
            }
        }
        (total > 0).then(|| wins as f64 / total as f64)
    }
}

/// Result of one method at one rank.
pub struct Outcome {
    pub factors: [DMatrix<f64>; 3],
    pub core: DenseTensor3,
    pub counter: OpCounter,
    pub breakdowns: usize,
    pub state: Option<KrylovState>,
}

struct Instance {
    tensor: AnyTensor,
    truth: Option<[DMatrix<f64>; 3]>,
}

fn build_instance(source: &Source, seed: u64) -> Result<Instance> {
    Ok(match source {
        Source::Random { dims } => {
            let mut rng = seeded(seed);
            let t = DenseTensor3::new(*dims, gaussian_vector(dims.len(), &mut rng))?;
            Instance {
                tensor: t.into(),
                truth: None,
            }
        }
        Source::LowRank { dims, ranks } => {
            let lr = gen_low_rank(*dims, *ranks, seed)?;
            Instance {
                truth: Some([lr.x, lr.y, lr.z]),
                tensor: lr.tensor.into(),
            }
        }
        Source::Sparse {
            dims,
            nnz,
            distribution,
            single_per_tube,
        } => Instance {
            tensor: gen_sparse(*dims, *nnz, seed, *distribution, *single_per_tube)?.into(),
            truth: None,
        },
        Source::File { path, duplicates } => Instance {
            tensor: io::read_coordinate_file(path, *duplicates)
                .with_context(|| format!("reading {}", path.display()))?
                .into(),
            truth: None,
        },
    })
}

/// Start vectors in all three modes; methods that build `w_1` themselves drop it.
fn start_vectors(policy: &StartPolicy, a: &AnyTensor, seed: u64) -> Result<StartVectors> {
    match policy {
        // offset so the start does not reuse the tensor generator's stream
        StartPolicy::Random => Ok(StartVectors::random(a.dims(), true, &mut seeded(seed ^ 0x5eed_5747))),
        StartPolicy::FibreMean => Ok(StartVectors::fibre_mean(a, true)?),
        StartPolicy::File(path) => read_start_file(path),
    }
}

/// Two or three lines of whitespace-separated numbers: `u_1`, `v_1` and optionally `w_1`.
pub fn read_start_file(path: &Path) -> Result<StartVectors> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let vecs: Vec<Vec<f64>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| anyhow!("{} line {}: {e}", path.display(), n + 1)))
                .collect()
        })
        .collect::<Result<_>>()?;
    match vecs.as_slice() {
        [u, v] => Ok(StartVectors::user(u, v, None)?),
        [u, v, w] => Ok(StartVectors::user(u, v, Some(w))?),
        _ => bail!("{}: expected two or three vectors, found {}", path.display(), vecs.len()),
    }
}

fn without_w(start: &StartVectors) -> StartVectors {
    StartVectors {
        w1: None,
        ..start.clone()
    }
}

fn smallest_mode(a: &AnyTensor) -> Mode {
    let dims = a.dims();
    Mode::ALL.into_iter().rev().min_by_key(|&m| dims[m]).unwrap_or(Mode::Three)
}

fn from_state(a: &AnyTensor, state: KrylovState) -> Result<Outcome> {
    let factors = state.factors();
    let mut counter = state.counter;
    let core = core_project_tvv(a, [&factors[0], &factors[1], &factors[2]], &mut counter)?;
    Ok(Outcome {
        factors,
        core,
        counter,
        breakdowns: state.events.len(),
        state: Some(state),
    })
}

fn from_tucker(t: TuckerDecomp, state: Option<KrylovState>) -> Outcome {
    Outcome {
        counter: state.as_ref().map(|s| s.counter).unwrap_or_default(),
        breakdowns: state.as_ref().map_or(0, |s| s.events.len()),
        factors: [t.u, t.v, t.w],
        core: t.core,
        state,
    }
}

/// Runs `method` at `rank`. Krylov methods project the core with tvv
/// multiplications so `tvv_count` follows the tvv cost model on any storage.
pub fn execute(
    method: Method,
    a: &AnyTensor,
    rank: Rank,
    start: &StartVectors,
    spec: &ExperimentSpec,
    cfg: &RecursionConfig,
) -> Result<Outcome> {
    let target = rank.per_mode();
    let cubical = || {
        rank.cubical()
            .ok_or_else(|| anyhow!("method {method} needs the same size in every mode, got {rank}"))
    };
    let uv = without_w(start);
    match method {
        Method::Minimal => from_state(a, minimal_recursion(a, &uv, cubical()?, cfg)?),
        Method::Modified => from_state(a, modified_minimal_recursion(a, &uv, target, cfg)?),
        Method::Optimized => from_state(a, optimized_recursion(a, &uv, cubical()?, spec.strategy, cfg)?),
        Method::SmallMode => {
            let small = spec.small_mode.unwrap_or_else(|| smallest_mode(a));
            from_state(a, small_mode_recursion(a, &uv, small, cubical()?, spec.exhausted, cfg)?)
        }
        Method::Contracted => {
            let ccfg = ContractedConfig {
                tol: spec.tol,
                ..ContractedConfig::default()
            };
            from_state(a, contracted_recursion(a, start, target, &ccfg)?.state)
        }
        Method::Maximal => {
            let mut run = MaximalRun::new(a, &uv, MaximalLimits::default(), cfg)?;
            while run.state().sizes().iter().zip(&target).any(|(s, t)| s < t) && run.run_loop()?.is_some() {}
            from_state(a, maximal_truncate(run.state(), a, target)?)
        }
        Method::TruncatedHosvd => Ok(from_tucker(truncated_hosvd(a, target)?, None)),
        Method::HosvdKrylov => {
            let (t, state) = hosvd_via_krylov_state(a, target, &uv, cfg)?;
            Ok(from_tucker(t, Some(state)))
        }
    }
}

fn rel_error(core_norm: f64, a_norm: f64) -> f64 {
    if a_norm == 0.0 {
        return 0.0;
    }
    (1.0 - (core_norm / a_norm).powi(2)).max(0.0).sqrt()
}

fn archive_outcome(dir: &Path, spec: &ExperimentSpec, method: Method, rank: Rank, rep: usize, out: &Outcome, err: f64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}-{}-{}-{}.json", spec.id, method, rank, rep));
    let payload = match &out.state {
        Some(s) if s.h.filled() > 0 => Payload::KrylovState(s.clone()),
        _ => Payload::Tucker {
            decomp: TuckerDecomp {
                u: out.factors[0].clone(),
                v: out.factors[1].clone(),
                w: out.factors[2].clone(),
                core: out.core.clone(),
            },
            meta: TuckerMeta {
                method: method.name().to_string(),
                ranks: rank.per_mode(),
                error: err,
                counter: out.counter,
            },
        },
    };
    archive::save(&path, &payload).with_context(|| format!("writing {}", path.display()))
}

fn run_rep(spec: &ExperimentSpec, shared: Option<&Instance>, rep: usize) -> Vec<Row> {
    let seed = spec.seed.wrapping_add(rep as u64);
    let blank = |method: Method, rank: Rank, error: String| Row {
        experiment_id: spec.id.clone(),
        method: method.name().to_string(),
        rank: rank.to_string(),
        rep,
        seed,
        core_norm: None,
        rel_error: None,
        max_principal_angle: None,
        tvv_count: None,
        wall_ms: None,
        breakdowns: None,
        error: Some(error),
    };
    let owned;
    let inst = match shared {
        Some(i) => i,
        None => match build_instance(&spec.source, seed) {
            Ok(i) => {
                owned = i;
                &owned
            }
            Err(e) => {
                return spec
                    .methods
                    .iter()
                    .flat_map(|&m| spec.schedule.iter().map(move |&r| (m, r)))
                    .map(|(m, r)| blank(m, r, format!("{e:#}")))
                    .collect();
            }
        },
    };
    let a = &inst.tensor;
    let a_norm = a.norm_sq().sqrt();
    let start = start_vectors(&spec.start, a, seed);
    let cfg = RecursionConfig {
        tol: spec.tol,
        seed,
        exhausted: spec.exhausted,
        ..RecursionConfig::default()
    };
    let mut rows = Vec::new();
    for &method in &spec.methods {
        for &rank in &spec.schedule {
            let t0 = Instant::now();
            let res = start
                .as_ref()
                .map_err(|e| anyhow!("{e:#}"))
                .and_then(|s| execute(method, a, rank, s, spec, &cfg));
            let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
            let out = match res {
                Ok(o) => o,
                Err(e) => {
                    rows.push(blank(method, rank, format!("{e:#}")));
                    continue;
                }
            };
            let core_norm = out.core.norm();
            let err = rel_error(core_norm, a_norm);
            let angle = inst.truth.as_ref().map(|truth| {
                Mode::ALL
                    .iter()
                    .map(|m| max_principal_angle(&out.factors[m.index()], &truth[m.index()]))
                    .fold(0.0, f64::max)
            });
            let mut error = None;
            if let Some(dir) = &spec.archive_dir {
                if let Err(e) = archive_outcome(dir, spec, method, rank, rep, &out, err * a_norm) {
                    error = Some(format!("{e:#}"));
                }
            }
            rows.push(Row {
                experiment_id: spec.id.clone(),
                method: method.name().to_string(),
                rank: rank.to_string(),
                rep,
                seed,
                core_norm: Some(core_norm),
                rel_error: Some(err),
                max_principal_angle: angle,
                tvv_count: Some(out.counter.tvv_equivalents()),
                wall_ms: Some(wall_ms),
                breakdowns: Some(out.breakdowns),
                error,
            });
        }
    }
    rows
}

/// Runs every repetition (in parallel on `threads` workers, all cores when
/// `None`) and returns rows ordered by method, schedule position and rep.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<Report> {
    let shared = if spec.source.is_generated() {
        None
    } else {
        Some(build_instance(&spec.source, spec.seed)?)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()?;
    let per_rep: Vec<Vec<Row>> =
        pool.install(|| (0..spec.reps).into_par_iter().map(|rep| run_rep(spec, shared.as_ref(), rep)).collect());
    let order = |r: &Row| {
        let m = spec.methods.iter().position(|m| m.name() == r.method).unwrap_or(usize::MAX);
        let k = spec.schedule.iter().position(|s| s.to_string() == r.rank).unwrap_or(usize::MAX);
        (m, k, r.rep)
    };
    let mut rows: Vec<Row> = per_rep.into_iter().flatten().collect();
    rows.sort_by_key(order);
    let failures = rows
        .iter()
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| format!("{} rank {} rep {}: {e}", r.method, r.rank, r.rep))
        })
        .collect();
    Ok(Report { rows, failures })
}
