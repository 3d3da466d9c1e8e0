use std::path::Path;
use std::process::{Command, Output};

use zovr::harness::records::{COLUMNS, TIMING_COLUMNS};

fn zovr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zovr"))
        .args(args)
        .current_dir(dir)
        .env("ZOVR_THREADS", "2")
        .output()
        .unwrap()
}

fn without_timing(csv: &str) -> Vec<String> {
    let skip: Vec<usize> = TIMING_COLUMNS
        .iter()
        .map(|c| COLUMNS.iter().position(|k| k == c).unwrap())
        .collect();
    csv.lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, v)| v)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

const RUN: [&str; 9] = [
    "run",
    "--problem",
    "ls",
    "--optimizer",
    "mezo-svrg",
    "--steps",
    "200",
    "--seed",
    "7",
];

#[test]
fn run_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = zovr(dir.path(), &[&RUN[..], &["--out", "r.csv"]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 201);
    assert_eq!(lines[0], COLUMNS.join(","));
    assert!(lines[1].starts_with("1,"));
    assert!(lines[200].starts_with("200,"));
}

#[test]
fn repeated_runs_match_except_timing() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        assert!(zovr(dir.path(), &[&RUN[..], &["--out", name]].concat())
            .status
            .success());
    }
    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(without_timing(&a), without_timing(&b));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.cfg"),
        "# small run\noptimizer = mezo\nsteps = 50\nbatch_size = 8\n",
    )
    .unwrap();
    let out = zovr(
        dir.path(),
        &["run", "--config", "run.cfg", "--steps", "20", "--out", "r.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = zovr::harness::records::load_records(&dir.path().join("r.csv")).unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(rows[0].cumulative_queries, 16);
}

#[test]
fn replay_reconstructs_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let extra = [
        "--traj-out",
        "r.trj",
        "--theta0-out",
        "t0.bin",
        "--params-out",
        "final.bin",
        "--out",
        "r.csv",
    ];
    let out = zovr(dir.path(), &[&RUN[..], &extra[..]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();

    let base = ["replay", "--trajectory", "r.trj", "--theta0", "t0.bin"];
    assert!(zovr(dir.path(), &[&base[..], &["--out", "last.bin"]].concat())
        .status
        .success());
    assert_eq!(read("last.bin"), read("final.bin"));

    assert!(
        zovr(dir.path(), &[&base[..], &["--step", "0", "--out", "zero.bin"]].concat())
            .status
            .success()
    );
    assert_eq!(read("zero.bin"), read("t0.bin"));

    let past = zovr(
        dir.path(),
        &[&base[..], &["--step", "201", "--out", "past.bin"]].concat(),
    );
    assert_eq!(past.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&past.stderr).contains("beyond"));
    assert!(!dir.path().join("past.bin").exists());
}

#[test]
fn replay_rejects_a_different_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = zovr(
        dir.path(),
        &[&RUN[..], &["--traj-out", "r.trj", "--out", "r.csv"]].concat(),
    );
    assert!(out.status.success());
    let theta = zovr::ParamVector::new(vec![0.5; 100]).unwrap();
    zovr::trajectory::save_params(&theta, &dir.path().join("other.bin")).unwrap();
    let res = zovr(
        dir.path(),
        &[
            "replay",
            "--trajectory",
            "r.trj",
            "--theta0",
            "other.bin",
            "--out",
            "x.bin",
        ],
    );
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("digest"));
}

#[test]
fn compare_reports_gaps_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    assert!(zovr(dir.path(), &[&RUN[..], &["--out", "a.csv"]].concat())
        .status
        .success());
    let same = zovr(dir.path(), &["compare", "a.csv", "a.csv", "--out", "curves.csv"]);
    assert!(same.status.success());
    let report = String::from_utf8_lossy(&same.stdout);
    assert!(
        report.contains("PASS") && report.contains("loss_gap=0.000000e0"),
        "{report}"
    );
    let curves = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2 * 200);

    std::fs::write(dir.path().join("bad.csv"), "x,y\n1,2\n").unwrap();
    assert_eq!(
        zovr(dir.path(), &["compare", "a.csv", "bad.csv"]).status.code(),
        Some(1)
    );
}

#[test]
fn divergence_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = zovr(
        dir.path(),
        &[
            "run",
            "--optimizer",
            "mezo",
            "--lr1",
            "10",
            "--steps",
            "500",
            "--out",
            "r.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("r.csv").exists());
}

#[test]
fn bad_configuration_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(zovr(dir.path(), &["run", "--optimizer", "adam"]).status.code(), Some(1));
    assert_eq!(zovr(dir.path(), &["run", "--preset", "nope"]).status.code(), Some(1));
    let traj = zovr(
        dir.path(),
        &["run", "--optimizer", "fo-sgd", "--steps", "5", "--traj-out", "t.trj"],
    );
    assert_eq!(traj.status.code(), Some(1));
}

#[test]
fn small_preset_writes_one_csv_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = zovr(
        dir.path(),
        &["run", "--preset", "anchor", "--query-budget", "1e5", "--out", "runs"],
    );
    assert!(out.status.code().is_some_and(|c| c == 0 || c == 3));
    for label in ["anchor-n", "anchor-n_2"] {
        assert!(dir.path().join(format!("runs/anchor-{label}.csv")).exists());
    }
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = zovr(dir.path(), &["verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.starts_with("PASS"))
            .count(),
        9
    );
}
