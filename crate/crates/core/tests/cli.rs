use mpcc_newton::problem::{save_point, toy_root};
use std::process::Command;

fn mpcc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpcc"))
}

#[test]
fn solve_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.csv");
    let st = mpcc()
        .args(["solve", "--problem", "toy", "--runs", "25", "--seed", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let stdout = String::from_utf8(st.stdout).unwrap();
    assert!(stdout.contains("converged          25"), "{stdout}");
    let mut rd = csv::Reader::from_path(&out).unwrap();
    assert_eq!(
        rd.headers().unwrap(),
        vec!["run", "seed", "status", "iters", "resid", "merit_grad", "err", "class", "ms"]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| &r[2] == "converged_residual" && &r[7] == "M"));
}

#[test]
fn same_seed_same_csv_regardless_of_execution() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for exec in ["sequential", "parallel"] {
        let out = dir.path().join(format!("{exec}.csv"));
        let st = mpcc()
            .args(["solve", "--problem", "perturbed", "--eps", "0.2", "--runs", "12", "--seed", "9"])
            .args(["--max-iter", "50", "--exec", exec, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(st.status.success());
        // drop the timing column
        let text = std::fs::read_to_string(&out).unwrap();
        let rows: Vec<String> = text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect();
        files.push(rows);
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn export_then_solve_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("obstacle.json");
    let st = mpcc().args(["export", "--problem", "obstacle", "--N", "4", "--out"]).arg(&file).status().unwrap();
    assert!(st.success());
    let out = mpcc()
        .args(["solve", "--problem"])
        .arg(&file)
        .args(["--runs", "5", "--seed", "1"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("converged          5"));
}

#[test]
fn diagnose_reports_toy_facts() {
    let dir = tempfile::tempdir().unwrap();
    let point = dir.path().join("z.json");
    save_point(&toy_root(), &point).unwrap();
    let out = mpcc().args(["diagnose", "--problem", "toy", "--point"]).arg(&point).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("stationarity   M\n"), "{text}");
    assert!(text.contains("MPCC-LICQ      false"));
    assert!(text.contains("relaxed CQ     true"));
    assert!(text.contains("MPCC-SSOC      true"));
}

#[test]
fn configuration_errors_exit_nonzero() {
    let bad = [
        vec!["solve", "--problem", "/nonexistent.json", "--runs", "2"],
        vec!["solve", "--problem", "toy", "--runs", "0"],
        vec!["solve", "--problem", "toy", "--c", "-1", "--runs", "2"],
        vec!["solve", "--problem", "toy", "--tol", "0", "--runs", "2"],
        vec!["diagnose", "--problem", "toy", "--point", "/nonexistent.json"],
        vec!["solve", "--bogus"],
    ];
    for args in bad {
        let out = mpcc().args(&args).output().unwrap();
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty());
    }
}
