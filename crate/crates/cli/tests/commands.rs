use std::path::Path;
use std::process::{Command, Output};

fn corpusforge(data: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_corpusforge"));
    for (key, _) in std::env::vars() {
        if key.starts_with("CORPUSFORGE_") {
            cmd.env_remove(key);
        }
    }
    cmd.arg("--data-dir")
        .arg(data)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn with_admin() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = corpusforge(
        &data,
        &["users", "add", "--id", "admin", "--name", "Admin", "--role", "admin", "--secret", "s"],
    );
    assert_eq!(stdout(&out), "added admin (admin)\n");
    (dir, data)
}

#[test]
fn import_is_idempotent_and_export_starts_empty() {
    let (dir, data) = with_admin();
    let file = dir.path().join("in.jsonl");
    std::fs::write(&file, "{\"en\":\"One.\"}\n\n{\"english_text\":\"Two.\"}\n").unwrap();
    let path = file.to_str().unwrap();
    assert_eq!(stdout(&corpusforge(&data, &["import", path, "--batch", "b"])), "imported 2, skipped 0\n");
    assert_eq!(stdout(&corpusforge(&data, &["import", path, "--batch", "b"])), "imported 0, skipped 2\n");
    assert_eq!(stdout(&corpusforge(&data, &["export", "-"])), "");
    let stats = stdout(&corpusforge(&data, &["stats", "--batch", "b", "--json"]));
    let counts: serde_json::Value = serde_json::from_str(&stats).unwrap();
    assert_eq!(counts["available"], 2);
    assert_eq!(stdout(&corpusforge(&data, &["check"])), "ok\n");
}

#[test]
fn bad_import_line_rejects_the_whole_file() {
    let (dir, data) = with_admin();
    let file = dir.path().join("in.jsonl");
    std::fs::write(&file, "{\"en\":\"fine\"}\n{\"en\":\"   \"}\n").unwrap();
    let out = corpusforge(&data, &["import", file.to_str().unwrap(), "--batch", "b"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    std::fs::write(&file, "{\"en\":\"fine\"}\nnot json\n").unwrap();
    let out = corpusforge(&data, &["import", file.to_str().unwrap(), "--batch", "b"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let stats = stdout(&corpusforge(&data, &["stats", "--json"]));
    assert!(!stats.contains("\"available\": 1"), "nothing should be imported: {stats}");
}

#[test]
fn exit_codes_follow_error_kind() {
    let (dir, data) = with_admin();
    let missing = dir.path().join("missing.jsonl");
    let out = corpusforge(&data, &["import", missing.to_str().unwrap(), "--batch", "b"]);
    assert_eq!(out.status.code(), Some(2));

    let out = corpusforge(&data, &["--actor", "nobody", "export", "-"]);
    assert_eq!(out.status.code(), Some(1));

    let out = corpusforge(&data, &["ledger", "disburse", "--translator", "admin", "--amount", "5"]);
    assert_eq!(out.status.code(), Some(1));

    let out = corpusforge(&data, &["simulate", "--p1", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ledger_commands_track_the_pool() {
    let (_dir, data) = with_admin();
    stdout(&corpusforge(&data, &["ledger", "contribute", "--member", "clan-a", "--amount", "250"]));
    let balances = stdout(&corpusforge(&data, &["ledger", "balances"]));
    assert!(balances.starts_with("pool        PGK2.50\n"), "{balances}");
    let entries = stdout(&corpusforge(&data, &["ledger", "entries"]));
    assert_eq!(entries.lines().count(), 1);
}

#[test]
fn spectrum_classifies_codes_and_reference_set() {
    let data = tempfile::tempdir().unwrap();
    let out = stdout(&corpusforge(data.path(), &["spectrum", "CCCC"]));
    assert!(out.starts_with("Level 5"), "{out}");
    let out = stdout(&corpusforge(data.path(), &["spectrum", "EEEE", "--consulted"]));
    assert!(out.starts_with("Level 1"), "{out}");
    let out = stdout(&corpusforge(data.path(), &["spectrum", "--reference"]));
    assert!(out.ends_with("8/8 match\n"), "{out}");
    let bad = corpusforge(data.path(), &["spectrum", "EEX"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn small_simulation_reports_distribution() {
    let data = tempfile::tempdir().unwrap();
    let out = stdout(&corpusforge(
        data.path(),
        &["simulate", "--sentences", "50", "--translators", "5", "--reviewers", "2", "--seed", "3"],
    ));
    assert!(out.contains("50"), "{out}");
}
