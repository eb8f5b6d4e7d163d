use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use elastoinv::config::KEYS;
use elastoinv::report::{list_files, report_manifest};
use elastoinv::train::{read_history_csv, Stage};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elastoinv"))
        .args(args)
        .output()
        .expect("spawn cli")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 10] = [
    "--set", "rows=10", "--set", "cols=10", "--set", "depth=2", "--set", "width=8", "--set", "omega=8",
];

fn with(dir: &Path, head: &[&str], extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = head.iter().map(|s| s.to_string()).collect();
    v.push("--out-dir".into());
    v.push(dir.display().to_string());
    v.extend(SMALL.iter().map(|s| s.to_string()));
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(dir: &Path, head: &[&str], extra: &[&str]) -> Output {
    let args = with(dir, head, extra);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    cli(&refs)
}

#[test]
fn help_lists_every_default() {
    let o = cli(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for (k, d, _) in KEYS {
        let line = text.lines().find(|l| l.trim_start().starts_with(k)).unwrap_or_else(|| panic!("{k} missing"));
        if !d.is_empty() {
            assert!(line.contains(d), "{line}");
        }
    }
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["generate"], &[]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"));

    let o = run(dir.path(), &["generate"], &["--seed", "1", "--set", "bogus=3"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus"));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\nwidht = 3\n").unwrap();
    let o = run(dir.path(), &["train", "--config", cfg.to_str().unwrap()], &[]);
    assert_eq!(code(&o), 1);

    let missing = dir.path().join("nowhere");
    let o = run(&missing, &["train"], &["--seed", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains(&missing.join("dataset.efd").display().to_string()));

    let o = cli(&["frobnicate"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    let o = run(&file, &["generate"], &["--seed", "1"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn truth_against_truth_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(d, &["generate"], &["--seed", "3", "--set", "phantom=homogeneous"])), 0);
    assert!(d.join("config.txt").is_file());
    let o = run(d, &["evaluate", "--truth-as-prediction"], &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = d.join("report");
    assert_eq!(list_files(&report).unwrap(), report_manifest(true));
    let csv = fs::read_to_string(report.join("metrics.csv")).unwrap();
    let e_row = csv.lines().find(|l| l.starts_with("E,")).unwrap();
    let mae: f64 = e_row.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(mae, 0.0);
}

#[test]
fn full_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let outputs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let d = dir.path().join(name);
            assert_eq!(code(&run(&d, &["generate"], &["--seed", "5"])), 0);
            let o = run(&d, &["train"], &["--seed", "5", "--desk-scale", "0.01"]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            assert_eq!(code(&run(&d, &["calibrate"], &[])), 0);
            assert_eq!(code(&run(&d, &["evaluate"], &[])), 0);
            assert_eq!(code(&run(&d, &["plot"], &[])), 0);
            for f in ["config.txt", "history.csv", "checkpoint.npk", "final.npk", "predicted.efd", "calibration.efd"] {
                assert!(d.join(f).is_file(), "{f}");
            }
            assert_eq!(list_files(&d.join("report")).unwrap(), report_manifest(true));
            assert!(d.join("plots/E.png").is_file());
            d
        })
        .collect();

    let history = read_history_csv(&outputs[0].join("history.csv")).unwrap();
    assert_eq!(history.len(), 2000);
    assert!(history.windows(2).all(|w| w[1].iteration == w[0].iteration + 1));
    for s in Stage::ALL {
        assert!(history.iter().any(|r| r.stage == s));
    }
    for f in ["history.csv", "predicted.efd", "calibration.efd", "report/metrics.csv"] {
        assert_eq!(
            fs::read(outputs[0].join(f)).unwrap(),
            fs::read(outputs[1].join(f)).unwrap(),
            "{f} differs between identical runs"
        );
    }
}
