use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tensor_krylov::archive::{self, Payload, TuckerMeta};
use tensor_krylov::krylov::factorization_residuals;
use tensor_krylov::linalg::{gaussian_vector, seeded};
use tensor_krylov::synth::{gen_low_rank, gen_sparse, ValueDistribution};
use tensor_krylov::tensor::DuplicatePolicy;
use tensor_krylov::tucker::{approx_error, TuckerDecomp};
use tensor_krylov::{io, DenseTensor3, Dims, Mode, OpCounter, SparseTensor3, Tensor3, TensorOp};
use tkbench::spec::parse_triple;
use tkbench::{run_experiment, ExperimentSpec, Method};

/// Benchmarks for Krylov recursions on third-order tensors.
///
/// Every flag can also be set through an environment variable named
/// `TKB_<FLAG>` (upper case, dashes as underscores), e.g. `TKB_THREADS=4`.
#[derive(Parser)]
#[command(name = "tkbench", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    LowRank,
    Random,
    Sparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dup {
    Sum,
    Reject,
}

impl From<Dup> for DuplicatePolicy {
    fn from(d: Dup) -> Self {
        match d {
            Dup::Sum => DuplicatePolicy::Sum,
            Dup::Reject => DuplicatePolicy::Reject,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic tensor in coordinate format.
    Gen {
        #[arg(long, value_enum, default_value = "low-rank", env = "TKB_KIND")]
        kind: Kind,
        /// Sizes as LxMxN.
        #[arg(long, env = "TKB_DIMS")]
        dims: String,
        /// Multilinear rank PxQxR (low-rank only).
        #[arg(long, env = "TKB_RANKS")]
        ranks: Option<String>,
        #[arg(long, default_value_t = 0, env = "TKB_NNZ")]
        nnz: usize,
        /// gaussian, uniform or ratings (sparse only).
        #[arg(long, default_value = "gaussian", env = "TKB_DISTRIBUTION")]
        distribution: String,
        /// At most one nonzero per mode-3 fibre (sparse only).
        #[arg(long, env = "TKB_SINGLE_PER_TUBE")]
        single_per_tube: bool,
        #[arg(long, default_value_t = 0, env = "TKB_SEED")]
        seed: u64,
        #[arg(short, long, env = "TKB_OUTPUT")]
        output: PathBuf,
        /// Also archive the ground-truth factors and core (low-rank only).
        #[arg(long, env = "TKB_TRUTH")]
        truth: Option<PathBuf>,
    },
    /// Run an experiment spec and write the CSV report.
    Run {
        spec: PathBuf,
        /// Overrides the spec's `output`; `-` writes to stdout.
        #[arg(short, long, env = "TKB_OUTPUT")]
        output: Option<PathBuf>,
        #[arg(long, env = "TKB_THREADS")]
        threads: Option<usize>,
        #[arg(long, env = "TKB_SEED")]
        seed: Option<u64>,
        #[arg(long, env = "TKB_REPS")]
        reps: Option<usize>,
    },
    /// Check the factorization identities of an archived recursion state.
    Verify {
        #[arg(long, env = "TKB_TENSOR")]
        tensor: PathBuf,
        #[arg(long, env = "TKB_STATE")]
        state: PathBuf,
        #[arg(long, value_enum, default_value = "sum", env = "TKB_DUPLICATES")]
        duplicates: Dup,
        /// Fail when any relative residual exceeds this.
        #[arg(long, default_value_t = 1e-10, env = "TKB_THRESHOLD")]
        threshold: f64,
    },
    /// Print tensor statistics.
    Info {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "sum", env = "TKB_DUPLICATES")]
        duplicates: Dup,
    },
}

fn dims_arg(s: &str) -> Result<Dims> {
    let [l, m, n] = parse_triple(s)?;
    Ok(Dims::new(l, m, n))
}

fn gen(
    kind: Kind,
    dims: &str,
    ranks: Option<&str>,
    nnz: usize,
    distribution: &str,
    single_per_tube: bool,
    seed: u64,
    output: &Path,
    truth: Option<&Path>,
) -> Result<()> {
    let dims = dims_arg(dims)?;
    let tensor = match kind {
        Kind::LowRank => {
            let ranks = parse_triple(ranks.context("--ranks is required for low-rank tensors")?)?;
            let lr = gen_low_rank(dims, ranks, seed)?;
            if let Some(path) = truth {
                let decomp = TuckerDecomp {
                    u: lr.x.clone(),
                    v: lr.y.clone(),
                    w: lr.z.clone(),
                    core: lr.core.clone(),
                };
                let meta = TuckerMeta {
                    method: "ground-truth".into(),
                    ranks,
                    error: 0.0,
                    counter: OpCounter::default(),
                };
                archive::save(path, &Payload::Tucker { decomp, meta })?;
            }
            SparseTensor3::from_dense(&lr.tensor)
        }
        Kind::Random => {
            let mut rng = seeded(seed);
            SparseTensor3::from_dense(&DenseTensor3::new(dims, gaussian_vector(dims.len(), &mut rng))?)
        }
        Kind::Sparse => {
            let dist: ValueDistribution = distribution.parse()?;
            gen_sparse(dims, nnz, seed, dist, single_per_tube)?
        }
    };
    io::write_coordinate_file(output, &tensor)?;
    eprintln!("wrote {} ({}, {} nonzeros)", output.display(), dims, tensor.nnz());
    Ok(())
}

fn run(spec: &Path, output: Option<PathBuf>, threads: Option<usize>, seed: Option<u64>, reps: Option<usize>) -> Result<()> {
    let mut spec = ExperimentSpec::from_file(spec)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(r) = reps {
        if r == 0 {
            bail!("--reps must be positive");
        }
        spec.reps = r;
    }
    let report = run_experiment(&spec, threads)?;
    match output.or_else(|| spec.output.clone()) {
        Some(p) if p.as_os_str() != "-" => {
            report.write_csv_file(&p)?;
            eprintln!("wrote {} rows to {}", report.rows.len(), p.display());
        }
        _ => report.write_csv(std::io::stdout().lock())?,
    }
    for f in &report.failures {
        eprintln!("failed: {f}");
    }
    if spec.methods.contains(&Method::Minimal) && spec.methods.contains(&Method::TruncatedHosvd) {
        if let Some(f) = report.win_fraction(Method::Minimal, Method::TruncatedHosvd) {
            eprintln!("minimal core norm above truncated-hosvd in {:.1}% of runs", 100.0 * f);
        }
    }
    Ok(())
}

fn verify(tensor: &Path, state: &Path, dup: Dup, threshold: f64) -> Result<bool> {
    let a = io::read_coordinate_file(tensor, dup.into())?;
    match archive::load(state)? {
        Payload::KrylovState(s) => {
            if s.dims != a.dims() {
                bail!("state dims {} do not match tensor dims {}", s.dims, a.dims());
            }
            let rep = factorization_residuals(&a, &s);
            for (name, (res, count)) in &rep.families {
                println!("{name:<10} {res:.3e}  ({count} identities)");
            }
            for m in Mode::ALL {
                println!("orthonormality mode {m}: {:.3e}", rep.orthonormality[m.index()]);
            }
            let worst = rep.max_residual().max(rep.orthonormality.iter().copied().fold(0.0, f64::max));
            println!("max {worst:.3e} (threshold {threshold:.1e})");
            Ok(worst <= threshold)
        }
        Payload::Tucker { decomp, meta } => {
            let err = approx_error(&a, &decomp.core)?;
            let dense = decomp.reconstruct();
            let direct = a.to_dense().sub(&dense).norm();
            println!("tucker ({}) ranks {:?}", meta.method, decomp.ranks());
            println!("error formula {err:.6e}, reconstruction {direct:.6e}, recorded {:.6e}", meta.error);
            let rel = (err - direct).abs() / a.norm_sq().sqrt().max(f64::MIN_POSITIVE);
            Ok(rel <= threshold.max(1e-8))
        }
    }
}

fn info(path: &Path, dup: Dup) -> Result<()> {
    let a = io::read_coordinate_file(path, dup.into())?;
    let dims = a.dims();
    println!("dims      {dims}");
    println!("nnz       {}", a.nnz());
    println!("density   {:.3e}", a.nnz() as f64 / dims.len().max(1) as f64);
    println!("norm      {:.12e}", a.norm_sq().sqrt());
    let mut used = [vec![false; dims.0[0]], vec![false; dims.0[1]], vec![false; dims.0[2]]];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    a.for_each_entry(&mut |idx, v| {
        for m in 0..3 {
            used[m][idx[m]] = true;
        }
        lo = lo.min(v);
        hi = hi.max(v);
    });
    for m in Mode::ALL {
        let n = used[m.index()].iter().filter(|&&u| u).count();
        println!("mode {m}    {n} of {} slices nonempty", dims[m]);
    }
    if a.nnz() > 0 {
        println!("values    [{lo}, {hi}]");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Gen {
            kind,
            dims,
            ranks,
            nnz,
            distribution,
            single_per_tube,
            seed,
            output,
            truth,
        } => gen(kind, &dims, ranks.as_deref(), nnz, &distribution, single_per_tube, seed, &output, truth.as_deref()),
        Cmd::Run {
            spec,
            output,
            threads,
            seed,
            reps,
        } => run(&spec, output, threads, seed, reps),
        Cmd::Verify {
            tensor,
            state,
            duplicates,
            threshold,
        } => match verify(&tensor, &state, duplicates, threshold) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("verification failed");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
        Cmd::Info { path, duplicates } => info(&path, duplicates),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
