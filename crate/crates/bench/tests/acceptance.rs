//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use tensor_krylov::krylov::{
    compare_candidates, contracted_recursion, factorization_residuals, minimal_recursion,
    modified_minimal_recursion, ContractedConfig, MaximalLimits, MaximalRun, RecursionConfig,
    StartVectors, Strategy,
};
use tensor_krylov::linalg::{
    gaussian_vector, max_off_diagonal, max_principal_angle, principal_angle_sines, seeded,
};
use tensor_krylov::synth::{gen_low_rank, gen_sparse, LowRank, ValueDistribution};
use tensor_krylov::tensor::{gram, gram_matvec, ttm_multi, DuplicatePolicy};
use tensor_krylov::tucker::{approx_error, hosvd_via_krylov, truncated_hosvd};
use tensor_krylov::{io, AnyTensor, DenseTensor3, Dims, Error, Mode, SparseTensor3, Tensor3, TensorOp};
use tkbench::spec::{ExperimentSpec, Method, Rank, Source, StartPolicy};
use tkbench::{execute, run_experiment};

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn in_range(basis: &DMatrix<f64>, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let c = DVector::from_vec(gaussian_vector(basis.ncols(), &mut rng));
    (basis * c).iter().copied().collect()
}

fn range_start(lr: &LowRank, seed: u64, with_w: bool) -> StartVectors {
    let w = in_range(&lr.z, seed + 2);
    StartVectors::user(&in_range(&lr.x, seed), &in_range(&lr.y, seed + 1), with_w.then_some(w.as_slice()))
        .expect("nonzero start vectors")
}

fn random_dense(dims: Dims, seed: u64) -> DenseTensor3 {
    let mut rng = seeded(seed);
    DenseTensor3::new(dims, gaussian_vector(dims.len(), &mut rng)).expect("sizes match")
}

fn worst_angle(factors: &[DMatrix<f64>; 3], lr: &LowRank) -> f64 {
    Mode::ALL
        .iter()
        .map(|&m| max_principal_angle(&factors[m.index()], lr.factor(m)))
        .fold(0.0, f64::max)
}

fn spec_for(source: Source, methods: Vec<Method>, schedule: Vec<Rank>, reps: usize, seed: u64) -> ExperimentSpec {
    ExperimentSpec {
        id: "acceptance".into(),
        source,
        methods,
        schedule,
        seed,
        reps,
        start: StartPolicy::Random,
        strategy: Strategy::InnerKrylov(3),
        exhausted: Default::default(),
        small_mode: None,
        tol: 1e-12,
        output: None,
        archive_dir: None,
    }
}

fn cubical_recovery() -> Verdict {
    let t0 = Instant::now();
    let ranks = [3, 5, 8, 12];
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let r = ranks[inst as usize % 4];
        let mut rng = seeded(1000 + inst);
        let mut side = || r + 2 + (gaussian_vector(1, &mut rng)[0].abs() * 10.0) as usize % (39 - r);
        let dims = Dims::new(side().min(40), side().min(40), side().min(40));
        let lr = gen_low_rank(dims, [r; 3], 2000 + inst).map_err(|e| e.to_string())?;
        let s = minimal_recursion(&lr.tensor, &range_start(&lr, 3000 + inst, false), r, &RecursionConfig::default())
            .map_err(|e| e.to_string())?;
        ensure(s.sizes() == [r; 3], || format!("instance {inst}: sizes {:?}", s.sizes()))?;
        ensure(s.checkpoints.len() == r, || format!("instance {inst}: {} steps for rank {r}", s.checkpoints.len()))?;
        ensure(s.events.is_empty(), || format!("instance {inst}: unexpected breakdown"))?;
        let a = worst_angle(&s.factors(), &lr);
        ensure(a < 1e-8, || format!("instance {inst} ({dims}, r={r}): angle {a:.2e}"))?;
        worst = worst.max(a);
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("20 instances, worst angle {worst:.1e}, {secs:.2} s"))
}

fn general_recovery() -> Verdict {
    let cfg = RecursionConfig::default();
    let lr = gen_low_rank(Dims::new(30, 40, 50), [5, 8, 12], 11).map_err(|e| e.to_string())?;
    let s = modified_minimal_recursion(&lr.tensor, &range_start(&lr, 12, false), [5, 8, 12], &cfg)
        .map_err(|e| e.to_string())?;
    ensure(s.sizes() == [5, 8, 12], || format!("sizes {:?}", s.sizes()))?;
    ensure(s.checkpoints.len() == 12, || format!("{} steps", s.checkpoints.len()))?;
    let a = worst_angle(&s.factors(), &lr);
    ensure(a < 1e-8, || format!("range starts: angle {a:.2e}"))?;

    // random u_1, v_1 outside the ranges: one extra vector in those modes
    let mut rng = seeded(13);
    let start = StartVectors::random(lr.tensor.dims(), false, &mut rng);
    let s2 = modified_minimal_recursion(&lr.tensor, &start, [6, 9, 13], &cfg).map_err(|e| e.to_string())?;
    let f = s2.factors();
    let mut worst: f64 = 0.0;
    for m in Mode::ALL {
        let sines = principal_angle_sines(lr.factor(m), &f[m.index()]);
        worst = worst.max(sines.first().copied().unwrap_or(1.0).asin());
    }
    ensure(worst < 1e-8, || format!("random starts: truth not inside bases {:?}, angle {worst:.2e}", s2.sizes()))?;
    Ok(format!("angle {a:.1e} in 12 steps; random starts {:?} angle {worst:.1e}", s2.sizes()))
}

fn partial_factorization() -> Verdict {
    let a = random_dense(Dims::new(20, 20, 20), 21);
    let start = StartVectors::random(a.dims(), false, &mut seeded(22));
    let s = minimal_recursion(&a, &start, 15, &RecursionConfig::default()).map_err(|e| e.to_string())?;
    let rep = factorization_residuals(&a, &s);
    let mut worst: f64 = 0.0;
    for fam in ["fibre-1", "fibre-2", "fibre-3"] {
        let r = rep.family(fam).ok_or_else(|| format!("no {fam} identities"))?;
        ensure(r < 1e-10, || format!("{fam} residual {r:.2e}"))?;
        worst = worst.max(r);
    }
    Ok(format!("worst relative residual {worst:.1e}"))
}

fn maximal_factorization() -> Verdict {
    let a = random_dense(Dims::new(30, 130, 25), 31);
    let start = StartVectors::random(a.dims(), false, &mut seeded(32));
    let mut run = MaximalRun::new(&a, &start, MaximalLimits::loops(6), &RecursionConfig::default())
        .map_err(|e| e.to_string())?;
    let mut sizes = vec![run.state().sizes()];
    let mut snapshots = vec![run.state().h.clone()];
    let mut worst: f64 = 0.0;
    while let Some(rec) = run.run_loop().map_err(|e| e.to_string())? {
        ensure(rec.complete, || format!("loop {:?} incomplete", rec.sizes))?;
        let rep = factorization_residuals(&a, run.state());
        let fam = format!("loop-{}", rec.mode);
        let r = rep.family(&fam).ok_or_else(|| format!("no {fam} identity after loop {:?}", rec.sizes))?;
        ensure(r < 1e-10, || format!("{fam} residual {r:.2e} after loop {:?}", rec.sizes))?;
        worst = worst.max(r);
        sizes.push(rec.sizes);
        snapshots.push(run.state().h.clone());
    }
    let expected = vec![[1, 1, 1], [2, 1, 1], [2, 3, 1], [2, 3, 6], [19, 3, 6], [19, 115, 6], [19, 115, 25]];
    ensure(sizes == expected, || format!("growth {sizes:?}"))?;
    let h = &run.state().h;
    for (snap, sz) in snapshots.iter().zip(&sizes) {
        ensure(snap.block(Dims(*sz)) == h.block(Dims(*sz)), || format!("H block {sz:?} changed"))?;
    }
    Ok(format!("growth ..., u:19, v:115, w:25; worst loop residual {worst:.1e}; nesting exact"))
}

fn error_identity() -> Verdict {
    let dense = random_dense(Dims::new(10, 10, 10), 41);
    let a: AnyTensor = dense.clone().into();
    let na2 = dense.norm().powi(2);
    let spec = spec_for(Source::Random { dims: dense.dims() }, Vec::new(), Vec::new(), 1, 0);
    let start = StartVectors::random(dense.dims(), true, &mut seeded(42));
    let cfg = RecursionConfig::default();
    let cases = [
        (Method::Minimal, Rank::Cubical(4)),
        (Method::Modified, Rank::Modes([3, 4, 5])),
        (Method::Optimized, Rank::Cubical(4)),
        (Method::Contracted, Rank::Modes([3, 4, 5])),
        (Method::Maximal, Rank::Modes([3, 4, 5])),
        (Method::TruncatedHosvd, Rank::Modes([3, 4, 5])),
        (Method::HosvdKrylov, Rank::Modes([3, 4, 5])),
    ];
    let mut worst: f64 = 0.0;
    for (method, rank) in cases {
        let out = execute(method, &a, rank, &start, &spec, &cfg).map_err(|e| format!("{method}: {e:#}"))?;
        let [u, v, w] = &out.factors;
        let approx = ttm_multi(&out.core, [Some(u), Some(v), Some(w)], false).map_err(|e| e.to_string())?;
        let direct2 = dense.sub(&approx).norm().powi(2);
        let formula = approx_error(&dense, &out.core).map_err(|e| e.to_string())?.powi(2);
        let rel = (direct2 - formula).abs() / na2;
        ensure(rel < 1e-10, || format!("{method}: squared errors differ by {rel:.2e}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("7 methods, worst relative gap {worst:.1e}"))
}

fn contracted_recovery() -> Verdict {
    let lr = gen_low_rank(Dims::new(20, 25, 30), [4, 6, 9], 51).map_err(|e| e.to_string())?;
    let run = contracted_recursion(&lr.tensor, &range_start(&lr, 52, true), [4, 6, 9], &ContractedConfig::default())
        .map_err(|e| e.to_string())?;
    ensure(run.state.sizes() == [4, 6, 9], || format!("sizes {:?}", run.state.sizes()))?;
    let a = worst_angle(&run.state.factors(), &lr);
    ensure(a < 1e-8, || format!("angle {a:.2e}"))?;

    let s = gen_sparse(Dims::new(10, 10, 10), 100, 53, ValueDistribution::Gaussian, false).map_err(|e| e.to_string())?;
    let d = s.to_dense();
    let mut rng = seeded(54);
    let mut gap: f64 = 0.0;
    for m in Mode::ALL {
        let x = gaussian_vector(10, &mut rng);
        let want = gram(&d, m) * DVector::from_column_slice(&x);
        let got = gram_matvec(&s, m, &x).map_err(|e| e.to_string())?;
        for (g, w) in got.iter().zip(want.iter()) {
            gap = gap.max((g - w).abs() / (1.0 + w.abs()));
        }
    }
    ensure(gap < 1e-12, || format!("gram matvec gap {gap:.2e}"))?;
    Ok(format!("angle {a:.1e}; gram matvec gap {gap:.1e}"))
}

fn optimized_dominance() -> Verdict {
    let cfg = RecursionConfig::default();
    let mut worst = f64::INFINITY;
    for trial in 0..50u64 {
        let dims = Dims::new(12 + trial as usize % 5, 14, 10 + trial as usize % 3);
        let a = random_dense(dims, 60 + trial);
        let na = a.norm();
        let start = StartVectors::random(dims, false, &mut seeded(160 + trial));
        let s = minimal_recursion(&a, &start, 2 + trial as usize % 4, &cfg).map_err(|e| e.to_string())?;
        let target = Mode::ALL[trial as usize % 3];
        let c = compare_candidates(&a, &s, target, Strategy::ExactHosvd, &cfg, na).map_err(|e| e.to_string())?;
        ensure(c.optimized >= c.plain - 1e-10, || format!("trial {trial}: {c:?}"))?;
        worst = worst.min(c.optimized - c.plain);
    }
    Ok(format!("50 trials, min(optimized - plain) = {worst:.2e}"))
}

fn fig1_replica() -> Verdict {
    let t0 = Instant::now();
    let spec = spec_for(
        Source::Random { dims: Dims::new(50, 60, 40) },
        vec![Method::Minimal, Method::TruncatedHosvd],
        vec![Rank::Cubical(10)],
        100,
        70,
    );
    let report = run_experiment(&spec, None).map_err(|e| format!("{e:#}"))?;
    ensure(report.failures.is_empty(), || report.failures.join("; "))?;
    let frac = report
        .win_fraction(Method::Minimal, Method::TruncatedHosvd)
        .ok_or("no comparable rows")?;
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!("minimal above truncated HOSVD in {:.0}% of 100 runs, {secs:.1} s", 100.0 * frac);
    ensure(frac >= 0.6, || detail.clone())?;
    ensure(secs < 120.0, || detail.clone())?;
    Ok(detail)
}

fn table2_replica() -> Verdict {
    let lr = gen_low_rank(Dims::new(150, 180, 130), [10, 10, 10], 81).map_err(|e| e.to_string())?;
    let a = &lr.tensor;
    let best_of = |f: &dyn Fn() -> Result<f64, String>| -> Result<(f64, f64), String> {
        let mut best = f64::INFINITY;
        let mut err = 0.0;
        for _ in 0..3 {
            let t0 = Instant::now();
            err = f()?;
            best = best.min(t0.elapsed().as_secs_f64());
        }
        Ok((best, err))
    };
    let (tk, ek) = best_of(&|| {
        let t = hosvd_via_krylov(a, [10, 10, 10]).map_err(|e| e.to_string())?;
        Ok(t.reconstruct().sub(a).norm())
    })?;
    let (th, eh) = best_of(&|| {
        let t = truncated_hosvd(a, [10, 10, 10]).map_err(|e| e.to_string())?;
        Ok(t.reconstruct().sub(a).norm())
    })?;
    let na = a.norm();
    ensure(ek <= 1e-8 * na && eh <= 1e-8 * na, || format!("errors {ek:.2e} / {eh:.2e}"))?;
    let detail = format!("krylov {:.3} s vs hosvd {:.3} s, speedup {:.1}x", tk, th, th / tk);
    ensure(tk < th, || detail.clone())?;
    Ok(detail)
}

fn complexity_accounting() -> Verdict {
    let (k, t) = (20u64, 3u64);
    let mut spec = spec_for(Source::Random { dims: Dims::new(30, 30, 30) }, Vec::new(), Vec::new(), 1, 0);
    spec.strategy = Strategy::InnerKrylov(t as usize);
    let cfg = RecursionConfig::default();
    let cube: AnyTensor = random_dense(Dims::new(30, 30, 30), 91).into();
    let flat: AnyTensor = random_dense(Dims::new(30, 30, 10), 92).into();
    let cases = [
        (Method::Minimal, &cube, k * k),
        (Method::Optimized, &cube, k * k + 9 * k * t),
        (Method::SmallMode, &flat, k * k + 2 * k),
        (Method::Contracted, &cube, k * k + 6 * k),
    ];
    let mut parts = Vec::new();
    for (method, a, model) in cases {
        let start = StartVectors::random(a.dims(), true, &mut seeded(93));
        let out = execute(method, a, Rank::Cubical(k as usize), &start, &spec, &cfg).map_err(|e| format!("{method}: {e:#}"))?;
        let got = out.counter.tvv_equivalents();
        ensure(got.abs_diff(model) <= 3 * k, || format!("{method}: {got} vs model {model}"))?;
        parts.push(format!("{method} {got}/{model}"));
    }
    Ok(parts.join(", "))
}

fn orthonormality_stress() -> Verdict {
    let t0 = Instant::now();
    let a = gen_sparse(Dims::new(500, 500, 500), 100_000, 101, ValueDistribution::Gaussian, false)
        .map_err(|e| e.to_string())?;
    let start = StartVectors::random(a.dims(), false, &mut seeded(102));
    let s = minimal_recursion(&a, &start, 100, &RecursionConfig::default()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for m in Mode::ALL {
        worst = worst.max(max_off_diagonal(&s.basis(m).matrix()));
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(s.sizes() == [100; 3], || format!("sizes {:?}", s.sizes()))?;
    ensure(worst < 1e-9, || format!("off-diagonal {worst:.2e}"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("max off-diagonal {worst:.1e}, {secs:.2} s"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn io_round_trip() -> Verdict {
    let raw = std::fs::read(fixture("canonical.tns")).map_err(|e| e.to_string())?;
    let t = io::read_coordinate(raw.as_slice(), DuplicatePolicy::Reject).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    io::write_coordinate(&mut out, &t).map_err(|e| e.to_string())?;
    ensure(out == raw, || "canonical fixture not reproduced byte for byte".into())?;
    let back = io::read_coordinate(out.as_slice(), DuplicatePolicy::Reject).map_err(|e| e.to_string())?;
    let bits = |s: &SparseTensor3| s.entries().map(|(i, j, k, v)| (i, j, k, v.to_bits())).collect::<Vec<_>>();
    ensure(bits(&back) == bits(&t), || "values changed bits".into())?;

    let random = gen_sparse(Dims::new(7, 5, 6), 60, 111, ValueDistribution::Gaussian, false).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    io::write_coordinate(&mut buf, &random).map_err(|e| e.to_string())?;
    let r2 = io::read_coordinate(buf.as_slice(), DuplicatePolicy::Reject).map_err(|e| e.to_string())?;
    ensure(bits(&r2) == bits(&random) && r2.dims() == random.dims(), || "random tensor round trip".into())?;

    let single = io::read_coordinate_file(fixture("single.tns"), DuplicatePolicy::Reject).map_err(|e| e.to_string())?;
    ensure(single.nnz() == 1 && single.norm_sq().sqrt() == 2.0, || "single entry fixture".into())?;
    let summed = io::read_coordinate_file(fixture("duplicate.tns"), DuplicatePolicy::Sum).map_err(|e| e.to_string())?;
    ensure(summed.to_dense().get(0, 1, 0) == 4.0, || "duplicates not summed".into())?;
    let empty = io::read_coordinate_file(fixture("empty.tns"), DuplicatePolicy::Reject).map_err(|e| e.to_string())?;
    ensure(empty.nnz() == 0 && empty.dims() == Dims::new(4, 3, 2), || "empty fixture".into())?;

    let malformed = [
        ("out_of_range.tns", 2, "outside"),
        ("zero_index.tns", 2, "outside"),
        ("duplicate.tns", 3, "duplicate"),
        ("bad_value.tns", 2, "not a number"),
        ("nan_value.tns", 2, "not finite"),
        ("bad_header.tns", 1, "header"),
        ("too_few.tns", 3, "declared 3"),
        ("too_many.tns", 3, "more than"),
        ("short_entry.tns", 2, "entry must be"),
        ("no_header.tns", 1, "missing header"),
    ];
    for (name, want_line, want_text) in malformed {
        match io::read_coordinate_file(fixture(name), DuplicatePolicy::Reject) {
            Err(Error::Parse { line, message }) => ensure(line == want_line && message.contains(want_text), || {
                format!("{name}: line {line} '{message}'")
            })?,
            other => return Err(format!("{name}: expected a parse error, got {other:?}")),
        }
    }
    Ok(format!("byte-exact round trip; {} malformed fixtures diagnosed", malformed.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("cubical rank recovery", cubical_recovery),
        ("general rank recovery", general_recovery),
        ("partial factorization", partial_factorization),
        ("maximal factorization", maximal_factorization),
        ("error identity", error_identity),
        ("contracted Lanczos recovery", contracted_recovery),
        ("optimized step dominance", optimized_dominance),
        ("core norm vs truncated HOSVD", fig1_replica),
        ("Krylov HOSVD speedup", table2_replica),
        ("operation counts", complexity_accounting),
        ("orthonormality stress", orthonormality_stress),
        ("coordinate I/O", io_round_trip),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let verdict = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("acceptance {:02} {name:<30} PASS  {detail} [{secs:.2} s]", n + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {:02} {name:<30} FAIL  {detail} [{secs:.2} s]", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
