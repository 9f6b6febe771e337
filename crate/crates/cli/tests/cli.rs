use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tf-lifeline"))
        .args(args)
        .env_remove("TF_API_URL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn analyze_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let list = fixtures().join("corpus.txt");
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let o = run(&[
            "analyze",
            "--projects",
            list.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--offline",
            "--jobs",
            jobs,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(out);
    }
    let names: Vec<_> = fs::read_dir(&outputs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(names.len() >= 10);
    for name in names {
        assert_eq!(
            fs::read(outputs[0].join(&name)).unwrap(),
            fs::read(outputs[1].join(&name)).unwrap(),
            "{name:?}"
        );
    }
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(outputs[0].join("report.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["aggregates"]["surviving"], 1);
}

#[test]
fn analyze_reports_failures_in_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let list = tmp.path().join("list.txt");
    fs::write(
        &list,
        format!(
            "{}\nnot-there.jsonl\n",
            fixtures().join("satis.jsonl").display()
        ),
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "analyze",
        "--projects",
        list.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--offline",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let projects = fs::read_to_string(out.join("projects.csv")).unwrap();
    assert!(projects.contains("not-there.jsonl,failed"));
}

#[test]
fn abandon_threshold_override() {
    let tmp = tempfile::tempdir().unwrap();
    let list = tmp.path().join("list.txt");
    fs::write(
        &list,
        format!("{}\n", fixtures().join("satis.jsonl").display()),
    )
    .unwrap();
    let out = tmp.path().join("out");
    // With a 5-year threshold nobody in the fixture has left.
    let o = run(&[
        "analyze",
        "--projects",
        list.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--offline",
        "--abandon-threshold",
        "5y",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    assert!(!out.join("projects.csv").exists());
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["aggregates"]["projects_with_tfdd"], 0);

    let bad = run(&[
        "analyze",
        "--projects",
        "x",
        "--out",
        "y",
        "--abandon-threshold",
        "soon",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn tf_at_a_date() {
    let satis = fixtures().join("satis.jsonl");
    let o = run(&[
        "tf",
        "--repo",
        satis.to_str().unwrap(),
        "--as-of",
        "2016-01-10",
        "--offline",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["tf"], 2);
    assert_eq!(
        json["tf_developers"],
        serde_json::json!(["alice@example.org", "bob@example.org"])
    );

    let early = run(&[
        "tf",
        "--repo",
        satis.to_str().unwrap(),
        "--as-of",
        "2001-01-01T00:00:00Z",
    ]);
    assert_eq!(early.status.code(), Some(2));
}

#[test]
fn sensitivity_table() {
    let tmp = tempfile::tempdir().unwrap();
    let list = fixtures().join("corpus.txt");
    let o = run(&[
        "sensitivity",
        "--projects",
        list.to_str().unwrap(),
        "--grid",
        "6m,1y,2y",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "threshold,precision,improvement,harmonic_mean");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("6m,"));

    let out = tmp.path().join("s");
    let o = run(&[
        "sensitivity",
        "--projects",
        list.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(out.join("sensitivity.json").exists());
    assert_eq!(
        fs::read_to_string(out.join("sensitivity.csv"))
            .unwrap()
            .lines()
            .count(),
        6
    );

    let unsorted = run(&[
        "sensitivity",
        "--projects",
        list.to_str().unwrap(),
        "--grid",
        "1y,6m",
    ]);
    assert_eq!(unsorted.status.code(), Some(2));
}
