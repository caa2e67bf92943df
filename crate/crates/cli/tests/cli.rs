//! End-to-end checks of the `cvrelay` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.scenario"))
}

fn cvrelay(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cvrelay"));
    c.args(args).env_remove("CVRELAY_WORKERS");
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

/// A bundled scenario with its sweep cut down to `points`.
fn small_scenario(dir: &Path, name: &str, points: usize) -> PathBuf {
    let text = fs::read_to_string(bundled(name))
        .unwrap()
        .replace("points = 201", &format!("points = {points}"));
    let path = dir.join(format!("{name}-small.scenario"));
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_bundled_scenarios() {
    for name in ["fig1", "fig4", "fig10-q1e5"] {
        let o = run(&mut cvrelay(&[
            "validate",
            "--config",
            bundled(name).to_str().unwrap(),
        ]));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let out = String::from_utf8(o.stdout).unwrap();
        assert!(
            out.starts_with(&format!("ok: {name} (201 points, sha256 ")),
            "{out}"
        );
    }
}

#[test]
fn config_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let base = fs::read_to_string(bundled("fig1")).unwrap();
    let cases = [
        (
            "negative-q",
            base.replace("\nQ_m = 1e7", "\nQ_m = -5"),
            "entangler.mech.Q_m",
        ),
        (
            "unknown",
            base.replace("\nQ_m = 1e7", "\nQ_m = 1e7\nqfactor = 3"),
            "entangler.mech.qfactor",
        ),
        ("syntax", base.replace("[sweep]", "[sweep"), "line"),
        (
            "unit",
            base.replace("\"4.2 K\"", "\"4.2 kg\""),
            "temperature",
        ),
    ];
    for (name, text, needle) in cases {
        let path = dir.path().join(format!("{name}.scenario"));
        fs::write(&path, text).unwrap();
        let o = run(&mut cvrelay(&[
            "validate",
            "--config",
            path.to_str().unwrap(),
        ]));
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
}

#[test]
fn bad_arguments_exit_with_2() {
    let o = run(&mut cvrelay(&["run", "--config", "x.scenario"]));
    assert_eq!(o.status.code(), Some(2));
    let o = run(cvrelay(&[
        "validate",
        "--config",
        bundled("fig1").to_str().unwrap(),
        "--bogus",
    ])
    .env("X", "1"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.scenario");
    let o = run(&mut cvrelay(&[
        "validate",
        "--config",
        missing.to_str().unwrap(),
    ]));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let cfg = small_scenario(dir.path(), "fig1", 3);
    let out = dir.path().join("no/such/dir/out.csv");
    let o = run(&mut cvrelay(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn run_writes_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = small_scenario(dir.path(), "fig1", 21);
    let out = dir.path().join("fig1.csv");
    let o = run(&mut cvrelay(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# cvrelay "));
    assert!(lines[1].starts_with("# scenario fig1 sha256="));
    assert_eq!(
        lines[2],
        "entangler.filter_a.center[omega_m],en_source,stability_margin,status"
    );
    let data: Vec<Vec<&str>> = lines[3..].iter().map(|l| l.split(',').collect()).collect();
    assert_eq!(data.len(), 21);
    for row in &data {
        assert_eq!(row.len(), 4);
        assert_eq!(row[3], "ok");
        for cell in &row[..3] {
            let mantissa = cell.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.replace('.', "").len(), 12, "{cell}");
        }
    }
    let peak = data
        .iter()
        .max_by(|a, b| {
            a[1].parse::<f64>()
                .unwrap()
                .total_cmp(&b[1].parse().unwrap())
        })
        .unwrap();
    assert!((peak[0].parse::<f64>().unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn output_is_identical_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = small_scenario(dir.path(), "fig7", 9);
    let mut files = Vec::new();
    for (i, workers) in ["1", "8", "1"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}.csv"));
        let o = run(&mut cvrelay(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        files.push(fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
}

#[test]
fn workers_come_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = small_scenario(dir.path(), "fig1", 5);
    let out = dir.path().join("env.csv");
    let args = [
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let o = run(cvrelay(&args).env("CVRELAY_WORKERS", "3"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(cvrelay(&args).env("CVRELAY_WORKERS", "many"));
    assert_eq!(o.status.code(), Some(2));
    // The flag wins over the variable.
    let mut with_flag = args.to_vec();
    with_flag.extend(["--workers", "2"]);
    let o = run(cvrelay(&with_flag).env("CVRELAY_WORKERS", "many"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn plot_data_writes_a_metadata_sidecar() {
    let dir = TempDir::new().unwrap();
    let cfg = small_scenario(dir.path(), "fig4", 5);
    let out = dir.path().join("fig4.dat");
    let o = run(&mut cvrelay(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "plot-data",
    ]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text
        .lines()
        .any(|l| l == "# entangler.filter_a.center[omega_m] fidelity_opt bound en_swapped status"));
    let meta = fs::read_to_string(dir.path().join("fig4.dat.meta.json")).unwrap();
    assert!(meta.contains("\"fidelity_opt\""), "{meta}");
}

#[test]
fn unstable_devices_are_flagged_not_fatal() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(bundled("fig1"))
        .unwrap()
        .replace(
            "power = \"6 mW\"",
            "power = \"6 mW\"\neffective_coupling = \"2 omega_m\"",
        )
        .replace("points = 201", "points = 11");
    let cfg = dir.path().join("unstable.scenario");
    fs::write(&cfg, text).unwrap();

    let o = run(&mut cvrelay(&[
        "stability",
        "--config",
        cfg.to_str().unwrap(),
    ]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("stable: false"), "{report}");
    assert!(report.contains("unstable sweep points: 11/11"), "{report}");

    let out = dir.path().join("unstable.csv");
    let o = run(&mut cvrelay(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().skip(3).collect();
    assert_eq!(rows.len(), 11);
    for r in rows {
        let cells: Vec<&str> = r.split(',').collect();
        assert_eq!(cells[1], "nan");
        assert_eq!(cells[3], "unstable");
    }
}

#[test]
fn stability_of_the_baseline() {
    let o = run(&mut cvrelay(&[
        "stability",
        "--config",
        bundled("fig1").to_str().unwrap(),
    ]));
    assert_eq!(o.status.code(), Some(0));
    let report = String::from_utf8(o.stdout).unwrap();
    assert!(report.contains("stable: true"));
    assert!(report.contains("unstable sweep points: 0/201"));
}
