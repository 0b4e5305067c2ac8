use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qpath(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpath"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn written(o: &Output) -> Vec<PathBuf> {
    String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(PathBuf::from)
        .collect()
}

fn stable(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with("# wall_time_s") && !l.starts_with("# created_unix"))
        .collect::<Vec<_>>()
        .join("\n")
}

const DIMENSION: &str = r#"
mode = "nonselective-dimension"
[schedule]
dx_range = { max = 100.0, min = 1.0, points = 7 }
b_scale = 0.5
[measurement]
D = ["inf", 1e-6]
"#;

const RELAXATION: &str = r#"
mode = "feedback-relaxation"
[state]
a = 1.0
b_mom = 1.0
[measurement]
D = 2.0
tau = 0.01
[ensemble]
n_traj = 200
n_steps = 100
checkpoint_every = 25
"#;

#[test]
fn validate_reports_config_errors_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("good.toml"), DIMENSION).unwrap();
    fs::write(
        dir.path().join("no_schedule.toml"),
        "mode = \"selective-dimension\"\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("typo.toml"),
        format!("{DIMENSION}\n[ensemble]\nseed = 3\n"),
    )
    .unwrap();

    assert_eq!(code(&qpath(&["validate", "good.toml"], dir.path())), 0);
    for bad in ["no_schedule.toml", "typo.toml", "missing.toml"] {
        let o = qpath(&["validate", bad], dir.path());
        assert_eq!(code(&o), 1, "{bad}");
        assert!(
            String::from_utf8_lossy(&o.stderr).starts_with("error: "),
            "{bad}"
        );
    }
    let o = qpath(
        &["validate", "good.toml", "--override", "measurement.D=-1"],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn run_writes_csv_and_json_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dim.toml"), DIMENSION).unwrap();
    let o = qpath(
        &["run", "dim.toml", "--out", "res", "--seed", "17"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let paths = written(&o);
    assert_eq!(paths.len(), 6);
    let main_csv = dir.path().join(&paths[0]);
    let name = main_csv.file_name().unwrap().to_string_lossy().to_string();
    assert!(
        name.starts_with("nonselective-dimension-") && name.ends_with(".csv"),
        "{name}"
    );

    let csv = fs::read_to_string(&main_csv).unwrap();
    assert!(csv.lines().any(|l| l == "# seed: 17"));
    assert!(csv.lines().any(|l| l.starts_with("# config: {")));
    assert!(csv.lines().any(|l| l.starts_with("# wall_time_s: ")));
    assert!(csv.lines().any(|l| l.starts_with("# code_version: qpath ")));
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("D,d_fit,residual,n_points"));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(&paths[1])).unwrap()).unwrap();
    assert_eq!(json["metadata"]["seed"], 17);
    assert_eq!(json["metadata"]["partial"], false);
    let rows = json["rows"].as_array().unwrap();
    let body: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), body.len());
    // D = inf is written as a string in JSON; d_fit agrees digit for digit
    assert_eq!(rows[0][0], "inf");
    let d_csv: f64 = body[1].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(rows[1][1].as_f64().unwrap(), d_csv);
    assert!((json["plot"]["y"][0].as_f64().unwrap() - 2.0).abs() < 0.02);
}

#[test]
fn rerun_from_emitted_metadata_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fb.toml"), RELAXATION).unwrap();
    let first = qpath(
        &["run", "fb.toml", "--out", "res", "--workers", "1"],
        dir.path(),
    );
    assert_eq!(
        code(&first),
        0,
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let p = written(&first);
    let csv = fs::read_to_string(dir.path().join(&p[0])).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("t,mean_a,stderr_a,reference_a"));

    for source in [&p[0], &p[1]] {
        let again = qpath(
            &["run", source.to_str().unwrap(), "--workers", "3"],
            dir.path(),
        );
        assert_eq!(
            code(&again),
            0,
            "{}",
            String::from_utf8_lossy(&again.stderr)
        );
        let q = written(&again);
        assert_ne!(q[0], p[0], "existing files are not overwritten");
        let csv2 = fs::read_to_string(dir.path().join(&q[0])).unwrap();
        assert_eq!(stable(&csv), stable(&csv2));
    }
}

#[test]
fn numeric_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("blowup.toml"),
        "mode = \"feedback-relaxation\"\n[state]\neps = 1e200\ndelta = 1e-300\n[measurement]\nD = \"inf\"\ntau = 1.0\n[feedback]\nenabled = false\n[ensemble]\nn_steps = 2\n",
    )
    .unwrap();
    let o = qpath(&["run", "blowup.toml", "--out", "res"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_flags_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dim.toml"), DIMENSION).unwrap();
    assert_eq!(
        code(&qpath(&["run", "dim.toml", "--workers", "0"], dir.path())),
        1
    );
    assert_eq!(
        code(&qpath(
            &["run", "dim.toml", "--override", "nokey"],
            dir.path()
        )),
        1
    );
    assert!(!dir.path().join("results").exists());
}
