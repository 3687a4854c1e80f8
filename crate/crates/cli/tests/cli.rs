use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use subfrac_cli::experiments::EigenRecord;
use subfrac_cli::output::{append_ledger, LedgerEntry};
use subfrac_cli::report::{report, CHECK_HEADER, EIGEN_HEADER};

fn subfrac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subfrac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

/// Rows of `results.csv` as column-name → value maps.
fn results(dir: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let text = fs::read_to_string(dir.join("results.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| {
            header
                .iter()
                .cloned()
                .zip(l.split(',').map(String::from))
                .collect()
        })
        .collect()
}

#[test]
fn hardy_mu_on_the_line_gives_twenty_positive_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = subfrac(&[
        "run",
        "hardy-mu",
        "--group",
        "abelian:1",
        "--deterministic",
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = results(&out);
    assert_eq!(rows.len(), 20);
    for r in &rows {
        assert_eq!(r["check_id"], "hardy_mu");
        assert!(r["lhs"].parse::<f64>().unwrap() > 0.0);
        assert_eq!(r["version"], subfrac_cli::VERSION);
        assert_eq!(r["config_hash"].len(), 64);
    }
    assert!(out.join("mu_curve.csv").exists());
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for exp in ["hardy-mu", "eigen", "lemma-lem1"] {
        let a = tmp.path().join(format!("{exp}-a"));
        let b = tmp.path().join(format!("{exp}-b"));
        for dir in [&a, &b] {
            let o = subfrac(&[
                "run",
                exp,
                "--deterministic",
                "--seed",
                "7",
                "--out",
                &out_arg(dir),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let mut names: Vec<_> = fs::read_dir(&a)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert!(names.len() >= 3);
        for name in names {
            let x = fs::read(a.join(&name)).unwrap();
            let y = fs::read(b.join(&name)).unwrap();
            assert!(x == y, "{exp}: {name:?} differs between identical runs");
        }
    }
}

#[test]
fn malformed_config_fails_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "experiment = eigen\nthis line has no equals sign\n").unwrap();
    let out = tmp.path().join("never");
    let o = subfrac(&["run", "--config", &out_arg(&cfg), "--out", &out_arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=config code=2 msg="), "{err}");
    assert!(!out.exists());

    // Inadmissible parameters are rejected the same way.
    for args in [
        vec!["run", "sobolev-scan", "--s", "0.75", "--p", "2"],
        vec!["run", "hardy-mu", "--gamma", "5"],
        vec!["run", "no-such-experiment"],
        vec![
            "run",
            "eigen",
            "--group",
            "heisenberg1",
            "--norm",
            "euclidean",
        ],
    ] {
        let mut args = args.clone();
        let o_arg = out_arg(&out);
        args.extend(["--out", o_arg.as_str()]);
        let o = subfrac(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!out.exists());
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(
        &cfg,
        "# line count\nexperiment = hardy-mu\ncount = 5\ns = 0.25\n",
    )
    .unwrap();
    let out = tmp.path().join("run");
    let o = subfrac(&[
        "run",
        "--config",
        &out_arg(&cfg),
        "--count",
        "3",
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(results(&out).len(), 3);
}

#[test]
fn report_slope_matches_the_dilation_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lyap");
    let o = subfrac(&[
        "run",
        "lyapunov",
        "--s",
        "0.25",
        "--p",
        "2",
        "--deterministic",
        "--out",
        &out_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep_dir = tmp.path().join("report");
    let rep = report(&out.join("ledger.jsonl"), Some(&rep_dir)).unwrap();
    let csv = fs::read_to_string(rep_dir.join("lambda_vs_R.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let slope: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!((slope + 0.5).abs() < 0.015, "slope {slope}");
    }
    assert!(rep.text.contains("lyapunov_scaling,2,0"));
}

#[test]
fn empty_ledger_report_is_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let ledger = tmp.path().join("ledger.jsonl");
    fs::write(&ledger, "").unwrap();
    let o = subfrac(&["report", "--ledger", &out_arg(&ledger)]);
    assert!(o.status.success());
    assert_eq!(
        String::from_utf8_lossy(&o.stdout),
        format!("{CHECK_HEADER}\n\n{EIGEN_HEADER}\n")
    );
}

#[test]
fn mixed_group_ledger_has_one_section_per_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let ledger = tmp.path().join("ledger.jsonl");
    let rec = |group: &str, norm: &str, r: f64| {
        LedgerEntry::Eigen(EigenRecord {
            run_id: format!("{group}-{r}"),
            group: group.into(),
            norm: norm.into(),
            s: 0.5,
            p: 2.0,
            radius: r,
            h: 0.1,
            lambda1: r.powf(-1.0),
            residual: 1e-12,
            iters: 10,
            config_hash: "0".repeat(64),
            version: subfrac_cli::VERSION.into(),
        })
    };
    append_ledger(
        &ledger,
        [
            rec("abelian:1", "euclidean", 1.0),
            rec("heisenberg1", "koranyi", 1.0),
        ],
    )
    .unwrap();
    append_ledger(
        &ledger,
        [
            rec("heisenberg1", "koranyi", 2.0),
            rec("heisenberg1", "wmax", 1.0),
        ],
    )
    .unwrap();
    let rep = report(&ledger, None).unwrap();
    let sections: Vec<&str> = rep.text.lines().filter(|l| l.starts_with('[')).collect();
    assert_eq!(
        sections,
        [
            "[abelian:1 / euclidean]",
            "[heisenberg1 / koranyi]",
            "[heisenberg1 / wmax]"
        ]
    );
    assert!(rep.text.contains("0.5,2.0,2.0,0.5,-1.0"));
}

#[test]
fn missing_ledger_is_a_config_error() {
    let o = subfrac(&["report", "--ledger", "/nonexistent/ledger.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
}
