use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trust-clusters"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn generate_default_population_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, &["--seed", "5"]);
    generate(&b, &["--seed", "5"]);
    assert_eq!(lines(&a.join("participants.csv")), 201);
    assert_eq!(lines(&a.join("events.csv")), 2001);
    for f in ["participants.csv", "events.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let c = tmp.path().join("c");
    generate(&c, &["--seed", "6"]);
    assert_ne!(
        fs::read(a.join("events.csv")).unwrap(),
        fs::read(c.join("events.csv")).unwrap()
    );
}

#[test]
fn ingest_counts_drive_types() {
    let tmp = tempfile::tempdir().unwrap();
    generate(tmp.path(), &["--n", "50"]);
    let o = run(&["ingest", "--data", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.starts_with("50 participants, 50 on analyzable drives"), "{out}");
    assert!(out.contains("drive G: 10"));
}

#[test]
fn unwritable_output_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = run(&["generate", "--n", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn missing_data_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["ingest", "--data", tmp.path().join("nope").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn invalid_spec_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.toml");
    fs::write(&spec, "confident_fraction = 1.5\n").unwrap();
    let o = run(&[
        "generate",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("confident_fraction"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["cluster", "--data", "x", "--out", "y", "--k-range", "1..3"])), 1);
    assert_eq!(code(&run(&["evaluate", "--data", "x", "--out", "y", "--criteria", "height"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn non_analyzable_dataset_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.toml");
    fs::write(&spec, "drive_types = [\"A\"]\nn_participants = 20\n").unwrap();
    let data = tmp.path().join("d");
    let o = run(&["generate", "--spec", spec.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = run(&[
        "report",
        "--data",
        data.to_str().unwrap(),
        "--out",
        tmp.path().join("r").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no participants remain"), "{}", stderr(&o));
}

#[test]
fn evaluate_trust_dynamics_only() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    let out = tmp.path().join("e");
    generate(&data, &["--n", "100"]);
    let o = run(&[
        "evaluate",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--criteria",
        "trust-dynamics",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(text, stdout(&o));
    assert!(text.contains("Trust dynamics   Confident"));
    assert!(text.contains("Trust dynamics   Skeptical"));
    for absent in ["Age", "Gender", "Driving style"] {
        assert!(!text.contains(absent), "{absent} in\n{text}");
    }
    assert!(out.join("report.json").exists());
}

#[test]
fn report_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    let out = tmp.path().join("r");
    generate(&data, &[]);
    let o = run(&["pipeline", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("silhouette selects k = 2"), "{}", stdout(&o));
    for f in [
        "features.csv",
        "clusters.csv",
        "clustering.json",
        "report.txt",
        "report.json",
        "trust_curves.csv",
        "feature_boxstats.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(lines(&out.join("features.csv")), 201);
    let text = fs::read_to_string(out.join("report.txt")).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("Criterion"))
        .skip(1)
        .take_while(|l| !l.is_empty())
        .collect();
    let criteria: Vec<&str> = rows.iter().map(|r| &r[..16]).map(str::trim).collect();
    assert_eq!(
        criteria,
        [
            "General",
            "Trust dynamics",
            "Trust dynamics",
            "Age",
            "Age",
            "Gender",
            "Gender",
            "Driving style",
            "Driving style"
        ]
    );
}

#[test]
fn fit_writes_loadable_models() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    let models = tmp.path().join("m/models.toml");
    generate(&data, &["--n", "100"]);
    let o = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--out",
        models.to_str().unwrap(),
        "--models",
        "ss",
        "--no-state-offset",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&models).unwrap();
    assert!(text.contains("[groups.\"general/All\".ss.params]"));
    assert!(text.contains("[groups.\"trust-dynamics/Confident\""));
    assert!(!text.contains(".lr]"));
}

#[test]
fn cluster_accepts_k_list() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    let out = tmp.path().join("c");
    generate(&data, &["--n", "120", "--seed", "3"]);
    let o = run(&[
        "cluster",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--k-range",
        "2,3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json = fs::read_to_string(out.join("clustering.json")).unwrap();
    assert!(json.contains("\"selected_k\""));
    assert_eq!(lines(&out.join("clusters.csv")), 121);
}
