use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sqnls(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqnls"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn sqnls")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const RUN_CFG: &str = "\
# small regression problem
problem.mode = generate
problem.m = 1000
problem.n = 20
problem.seed = 3

[sketch]
family = block_kaczmarz
block_size = 50

[stop]
max_iters = 200
tol = 1e-12

[run]
trace_every = 20
out = trace.csv
";

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn solve_writes_a_trace_and_converges() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), RUN_CFG).unwrap();
    let out = sqnls(dir.path(), &["solve", "--config", "run.cfg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("iterations=200"));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let errs: Vec<f64> = column(&trace, "err_xhat").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(errs.len(), 200);
    assert!(errs[199] < errs[9] && errs[9] < errs[0], "{} {} {}", errs[0], errs[9], errs[199]);

    let first = trace.clone();
    assert!(sqnls(dir.path(), &["solve", "--config", "run.cfg"]).status.success());
    assert_eq!(fs::read_to_string(dir.path().join("trace.csv")).unwrap(), first);

    let other = sqnls(dir.path(), &["--seed", "4", "solve", "--config", "run.cfg", "--out", "t4.csv"]);
    assert!(other.status.success());
    assert_ne!(fs::read_to_string(dir.path().join("t4.csv")).unwrap(), first);
}

#[test]
fn closed_form_xtilde_reference_for_enumerable_sketch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RUN_CFG.replace("[run]", "[refs]\nxtilde_mode = closed_form\n\n[run]");
    fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    let out = sqnls(dir.path(), &["solve", "--config", "run.cfg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("k,alpha,sample_f,full_f,err_xhat,err_xtilde,"));

    let random = RUN_CFG
        .replace("family = block_kaczmarz\nblock_size = 50", "family = sparse_random\nell = 20")
        .replace("[run]", "[refs]\nxtilde_mode = closed_form\n\n[run]");
    fs::write(dir.path().join("random.cfg"), random).unwrap();
    let out = sqnls(dir.path(), &["solve", "--config", "random.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RUN_CFG.replace("[stop]", "[strategy]\nlamda1 = 1e-5\n\n[stop]");
    fs::write(dir.path().join("bad.cfg"), cfg).unwrap();
    let out = sqnls(dir.path(), &["solve", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 12") && err.contains("strategy.lamda1"), "{err}");

    fs::write(dir.path().join("dup.cfg"), format!("{RUN_CFG}problem.n = 5\n")).unwrap();
    let err = String::from_utf8(sqnls(dir.path(), &["solve", "--config", "dup.cfg"]).stderr).unwrap();
    assert!(err.contains("line 18") && err.contains("line 4"), "{err}");

    let out = sqnls(dir.path(), &["solve", "--config", "missing.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn omega_grid_matches_known_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = sqnls(dir.path(), &["omega", "--mu", "0.5:2:4", "--nu", "10", "--out", "omega.csv"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("omega.csv")).unwrap();
    let omega: Vec<f64> = column(&csv, "omega").iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(omega.len(), 4);
    assert!((omega[1] - 1.178_511_301_977_579).abs() < 1e-12);
    assert!(omega.iter().all(|w| *w > 0.0));

    let bad = sqnls(dir.path(), &["omega", "--mu", "1:2", "--nu", "10"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sketch_verify_threshold_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sk.cfg"),
        "problem.m = 100\nsketch.family = sparse_rademacher\nsketch.ell = 10\nsketch.p = 10\n",
    )
    .unwrap();
    let ok = sqnls(dir.path(), &["sketch-verify", "--spec", "sk.cfg", "--n", "100000", "--threshold", "0.02"]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    let dev: f64 = column(&stdout(&ok), "deviation")[0].parse().unwrap();
    assert!(dev < 0.02);
    let strict = sqnls(dir.path(), &["sketch-verify", "--spec", "sk.cfg", "--n", "100", "--threshold", "1e-6"]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn compare_sketches_covers_four_families() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), RUN_CFG).unwrap();
    let out = sqnls(dir.path(), &["compare-sketches", "--config", "run.cfg", "--out", "cmp.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    let mut families = column(&csv, "distribution");
    families.dedup();
    assert_eq!(families, ["block_kaczmarz", "kaczmarz", "sparse_rademacher", "sparse_random"]);
    let rows = column(&csv, "rows_touched_cum");
    assert_eq!(rows[0], "1000");
}

#[test]
fn elm_train_then_eval_on_held_out_blobs() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["sqn", "qr"] {
        let model = format!("{method}.elm");
        let out = sqnls(
            dir.path(),
            &["--seed", "5", "elm", "train", "--blobs", "1500", "--hidden", "40", "--method", method, "--model", &model],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = sqnls(dir.path(), &["--seed", "5", "elm", "eval", "--blobs", "500", "--skip", "1500", "--model", &model]);
        assert!(out.status.success());
        let acc: f64 = column(&stdout(&out), "accuracy")[0].parse().unwrap();
        assert!(acc > 0.8, "{method}: {acc}");
    }
    let out = sqnls(dir.path(), &["elm", "train", "--blobs", "20", "--hidden", "40", "--model", "x.elm"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unbiasedness_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--seed", "9", "unbiasedness", "--trials", "500"];
    let a = stdout(&sqnls(dir.path(), &args));
    assert_eq!(a, stdout(&sqnls(dir.path(), &args)));
    assert_eq!(column(&a, "estimator"), ["xhat", "xhat", "xtilde", "xtilde"]);
}
