use std::path::Path;
use std::process::Command;

use tf_lifeline::history::{ingest_repository, ChangeKind, FileChange};

fn git(dir: &Path, args: &[&str], date: &str, who: (&str, &str)) {
    let status = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args(args)
        .env("GIT_AUTHOR_NAME", who.0)
        .env("GIT_AUTHOR_EMAIL", who.1)
        .env("GIT_COMMITTER_NAME", who.0)
        .env("GIT_COMMITTER_EMAIL", who.1)
        .env("GIT_AUTHOR_DATE", date)
        .env("GIT_COMMITTER_DATE", date)
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .status()
        .expect("git runs");
    assert!(status.success(), "git {args:?}");
}

const ALICE: (&str, &str) = ("Alice", "Alice@Example.org");
const BOB: (&str, &str) = ("Bob", "bob@example.org");

fn write(dir: &Path, path: &str, body: &str) {
    let p = dir.join(path);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    std::fs::write(p, body).unwrap();
}

#[test]
fn reads_adds_renames_deletes_and_merges() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    git(
        d,
        &["init", "-q", "-b", "main"],
        "2020-01-01T00:00:00Z",
        ALICE,
    );
    write(
        d,
        "src/lib.rs",
        "fn a() {}\nfn b() {}\nfn c() {}\nfn d() {}\n",
    );
    write(d, "docs/read me.md", "hello\n");
    git(d, &["add", "."], "2020-01-01T00:00:00Z", ALICE);
    git(
        d,
        &["commit", "-q", "-m", "init"],
        "2020-01-01T00:00:00Z",
        ALICE,
    );

    git(
        d,
        &["mv", "src/lib.rs", "src/core.rs"],
        "2020-02-01T00:00:00Z",
        BOB,
    );
    git(
        d,
        &["commit", "-q", "-m", "rename"],
        "2020-02-01T00:00:00Z",
        BOB,
    );

    git(
        d,
        &["checkout", "-q", "-b", "side"],
        "2020-03-01T00:00:00Z",
        BOB,
    );
    write(d, "side.txt", "side\n");
    git(d, &["add", "."], "2020-03-01T00:00:00Z", BOB);
    git(
        d,
        &["commit", "-q", "-m", "side"],
        "2020-03-01T00:00:00Z",
        BOB,
    );
    git(
        d,
        &["checkout", "-q", "main"],
        "2020-03-02T00:00:00Z",
        ALICE,
    );
    git(
        d,
        &["rm", "-q", "docs/read me.md"],
        "2020-03-02T00:00:00Z",
        ALICE,
    );
    git(
        d,
        &["commit", "-q", "-m", "drop docs"],
        "2020-03-02T00:00:00Z",
        ALICE,
    );
    git(
        d,
        &["merge", "-q", "--no-ff", "-m", "merge side", "side"],
        "2020-04-01T00:00:00Z",
        ALICE,
    );

    let h = ingest_repository(d, "demo").unwrap();
    let commits = h.commits();
    assert_eq!(commits.len(), 5);
    assert_eq!(commits[0].dev_id.as_str(), "alice@example.org");
    assert_eq!(
        commits[0].changes,
        vec![
            FileChange::add("docs/read me.md"),
            FileChange::add("src/lib.rs")
        ]
    );
    assert_eq!(
        commits[1].changes,
        vec![FileChange::rename("src/lib.rs", "src/core.rs")]
    );
    assert_eq!(commits[1].changes[0].kind, ChangeKind::Rename);
    assert_eq!(commits[2].changes, vec![FileChange::add("side.txt")]);
    assert_eq!(
        commits[3].changes,
        vec![FileChange::delete("docs/read me.md")]
    );
    // A clean merge differs from neither parent in every file.
    assert!(commits[4].is_merge);
    assert!(commits[4].changes.is_empty());
    assert_eq!(h.created_at().to_rfc3339(), "2020-01-01T00:00:00+00:00");
}

#[test]
fn missing_repository_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(ingest_repository(tmp.path(), "empty").is_err());
    assert!(ingest_repository(&tmp.path().join("nope.jsonl"), "nope").is_err());
}
