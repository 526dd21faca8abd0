use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tensor_krylov::TensorOp;
use tkbench::{execute, run_experiment, ExperimentSpec, Method, Rank, Report, Row};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn spec(text: &str) -> ExperimentSpec {
    ExperimentSpec::parse(text, &fixture("")).unwrap()
}

fn rows_for<'a>(report: &'a Report, method: &str) -> Vec<&'a Row> {
    report.rows.iter().filter(|r| r.method == method).collect()
}

fn tkbench(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tkbench"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn csv_without_wall(report: &Report) -> Vec<String> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let wall = header.iter().position(|h| *h == "wall_ms").unwrap();
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(wall);
            f.join(",")
        })
        .collect()
}

#[test]
fn smoke_spec_is_deterministic() {
    let s = ExperimentSpec::from_file(&fixture("smoke.spec")).unwrap();
    let a = run_experiment(&s, Some(1)).unwrap();
    let b = run_experiment(&s, Some(4)).unwrap();
    assert_eq!(csv_without_wall(&a), csv_without_wall(&b));
    assert!(a.failures.is_empty(), "{:?}", a.failures);
    assert_eq!(a.rows.len(), 7 * 2);
}

#[test]
fn csv_header_columns() {
    let s = spec("source = low-rank\ndims = 6x5x4\nranks = 2x2x2\nmethods = minimal\nschedule = 2\n");
    let mut buf = Vec::new();
    run_experiment(&s, Some(1)).unwrap().write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "experiment_id,method,rank,rep,seed,core_norm,rel_error,max_principal_angle,tvv_count,wall_ms,breakdowns"
    );
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn exact_rank_gives_zero_error() {
    let s = ExperimentSpec::from_file(&fixture("smoke.spec")).unwrap();
    let report = run_experiment(&s, None).unwrap();
    for r in &report.rows {
        let err = r.rel_error.unwrap();
        assert!(err < 1e-6, "{} rep {}: error {err}", r.method, r.rep);
        assert!(r.max_principal_angle.unwrap() < 1e-6, "{} angle", r.method);
    }
}

#[test]
fn failing_method_leaves_an_empty_row() {
    let s = spec(
        "source = random\ndims = 6x5x4\nmethods = small-mode, truncated-hosvd\nschedule = 2x3x3\nreps = 2\n",
    );
    let report = run_experiment(&s, Some(2)).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.failures.len(), 2);
    for r in rows_for(&report, "small-mode") {
        assert!(r.core_norm.is_none() && r.tvv_count.is_none() && r.rel_error.is_none());
        assert!(r.error.is_some());
    }
    for r in rows_for(&report, "truncated-hosvd") {
        assert!(r.core_norm.is_some());
    }
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let blank = text.lines().find(|l| l.contains("small-mode")).unwrap();
    assert!(blank.ends_with(",,,,,,"), "{blank}");
}

#[test]
fn small_mode_runs_past_short_mode() {
    let s = spec(
        "source = low-rank\ndims = 12x10x3\nranks = 3x3x3\nmethods = small-mode, minimal\nschedule = 4\nstart = fibre-mean\n",
    );
    let report = run_experiment(&s, Some(1)).unwrap();
    let sm = rows_for(&report, "small-mode");
    assert!(sm[0].rel_error.unwrap() < 1e-6, "{:?}", report.failures);
    assert_eq!(sm[0].tvv_count.unwrap(), 4 * 4 + 2 * 4);
    assert!(rows_for(&report, "minimal")[0].core_norm.is_none());
    let text = "source = random\ndims = 12x10x3\nmethods = minimal\nschedule = 4\n";
    assert!(ExperimentSpec::parse(text, &fixture("")).is_err());
}

#[test]
fn minimal_count_matches_model() {
    let s = spec("source = random\ndims = 9x8x7\nmethods = minimal\nschedule = 2, 3, 5\n");
    let report = run_experiment(&s, Some(1)).unwrap();
    for r in &report.rows {
        let k: u64 = r.rank.parse().unwrap();
        assert_eq!(r.tvv_count.unwrap(), 3 * (k - 1) + 1 + k * k, "rank {k}");
    }
}

#[test]
fn core_norm_grows_along_schedule() {
    let s = spec("source = random\ndims = 10x9x8\nmethods = minimal, modified\nschedule = 1, 2, 3, 4, 6\nseed = 3\n");
    let report = run_experiment(&s, Some(1)).unwrap();
    for m in ["minimal", "modified"] {
        let norms: Vec<f64> = rows_for(&report, m).iter().map(|r| r.core_norm.unwrap()).collect();
        assert_eq!(norms.len(), 5);
        for w in norms.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{m}: {norms:?}");
        }
    }
}

#[test]
fn relative_error_in_unit_interval() {
    let s = spec(
        "source = sparse\ndims = 15x12x10\nnnz = 200\nmethods = minimal, optimized, contracted, truncated-hosvd\nschedule = 2, 4\nreps = 2\n",
    );
    let report = run_experiment(&s, None).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    for r in &report.rows {
        let e = r.rel_error.unwrap();
        assert!((0.0..=1.0).contains(&e), "{} {}: {e}", r.method, r.rank);
        assert!(r.max_principal_angle.is_none());
    }
}

#[test]
fn execute_reports_per_mode_rank() {
    let s = spec("source = random\ndims = 8x7x6\nmethods = contracted\nschedule = 2x3x4\n");
    let a = tensor_krylov::DenseTensor3::from_fn(tensor_krylov::Dims::new(8, 7, 6), |i, j, k| {
        ((i * 7 + j * 3 + k * 5) % 11) as f64 - 5.0 + 0.1 * (i * j * k) as f64
    });
    let start = tensor_krylov::krylov::StartVectors::fibre_mean(&a, true).unwrap();
    let cfg = tensor_krylov::krylov::RecursionConfig::default();
    let out = execute(Method::Contracted, &a.into(), Rank::Modes([2, 3, 4]), &start, &s, &cfg).unwrap();
    assert_eq!(out.factors.iter().map(|f| f.ncols()).collect::<Vec<_>>(), vec![2, 3, 4]);
    assert_eq!(out.core.dims(), tensor_krylov::Dims::new(2, 3, 4));
}

#[test]
fn file_source_spec_runs_on_fixture() {
    let s = ExperimentSpec::from_file(&fixture("file_source.spec")).unwrap();
    let report = run_experiment(&s, Some(1)).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    assert_eq!(report.rows.len(), 4);
    for r in &report.rows {
        assert!(r.rel_error.unwrap() <= 1.0);
    }
}

#[test]
fn start_file_policy() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("start.txt"), "1 0 0 0 0 0\n0 1 1 0 0\n").unwrap();
    std::fs::write(dir.path().join("short.txt"), "1 0\n").unwrap();
    let body = "source = random\ndims = 6x5x4\nmethods = minimal\nschedule = 3\nreps = 2\n";
    let good = ExperimentSpec::parse(&format!("{body}start = file:start.txt\n"), dir.path()).unwrap();
    let report = run_experiment(&good, Some(1)).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);

    let bad = ExperimentSpec::parse(&format!("{body}start = file:short.txt\n"), dir.path()).unwrap();
    let report = run_experiment(&bad, Some(1)).unwrap();
    assert_eq!(report.failures.len(), 2);
    assert!(report.rows.iter().all(|r| r.core_norm.is_none()));
}

#[test]
fn cli_gen_info_run_verify() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n).to_string_lossy().into_owned();

    let out = tkbench(
        &["gen", "--dims", "8x7x6", "--ranks", "2x3x2", "--seed", "5", "-o", &d("a.tns")],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = tkbench(
        &["gen", "--dims", "8x7x6", "--ranks", "2x3x2", "-o", &d("b.tns")],
        &[("TKB_SEED", "5")],
    );
    assert!(out.status.success());
    assert_eq!(std::fs::read(d("a.tns")).unwrap(), std::fs::read(d("b.tns")).unwrap());

    let out = tkbench(&["info", &d("a.tns")], &[]);
    assert!(out.status.success());
    let info = String::from_utf8(out.stdout).unwrap();
    assert!(info.contains("8x7x6") || info.contains("8 x 7 x 6") || info.contains("(8, 7, 6)"), "{info}");
    assert!(info.contains("nnz"));

    std::fs::write(
        dir.path().join("exp.spec"),
        "id = cli\nsource = file\npath = a.tns\nmethods = minimal, truncated-hosvd\nschedule = 3\narchive = states\n",
    )
    .unwrap();
    let out = tkbench(&["run", &d("exp.spec"), "-o", &d("out.csv")], &[("TKB_THREADS", "2")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d("out.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("cli,minimal,3,0,"));

    let state = d("states/cli-minimal-3-0.json");
    let out = tkbench(&["verify", "--tensor", &d("a.tns"), "--state", &state], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    // same dims, different tensor: the identities no longer hold
    let out = tkbench(&["gen", "--kind", "random", "--dims", "8x7x6", "-o", &d("c.tns")], &[]);
    assert!(out.status.success());
    let out = tkbench(&["verify", "--tensor", &d("c.tns"), "--state", &state], &[]);
    assert_eq!(out.status.code(), Some(1));

    let tucker = d("states/cli-truncated-hosvd-3-0.json");
    let out = tkbench(&["verify", "--tensor", &d("a.tns"), "--state", &tucker], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn cli_reports_bad_input() {
    let out = tkbench(&["info", fixture("zero_index.tns").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = tkbench(&["run", fixture("smoke.spec").to_str().unwrap(), "--reps", "0"], &[]);
    assert_eq!(out.status.code(), Some(2));
}
