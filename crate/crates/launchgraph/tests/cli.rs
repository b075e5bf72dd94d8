use std::process::{Command, Output};

fn launchgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_launchgraph"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn unknown_program_is_a_usage_error() {
    let o = launchgraph(&["run", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
}

#[test]
fn short_bench_duration_is_a_usage_error() {
    assert_eq!(launchgraph(&["bench", "--duration", "0.1"]).status.code(), Some(2));
}

#[test]
fn unknown_parameter_is_a_usage_error() {
    assert_eq!(launchgraph(&["run", "es", "colour=red"]).status.code(), Some(2));
}

#[test]
fn run_producer_consumer_prints_the_range() {
    let o = launchgraph(&["run", "producer-consumer"]);
    assert_eq!(o.status.code(), Some(0));
    let expected: String = (0..20).map(|i| format!("{i}\n")).collect();
    assert_eq!(stdout(&o), expected);
}

#[test]
fn validate_reports_a_cycle_as_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let m = launchgraph(&["manifest", "cycle"]);
    assert_eq!(m.status.code(), Some(0));
    let path = dir.path().join("cycle.json");
    std::fs::write(&path, &m.stdout).unwrap();

    let o = launchgraph(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("warning: communication cycle"), "{text}");
    assert!(text.trim_end().ends_with("0 errors, 1 warnings"), "{text}");
}

#[test]
fn validate_rejects_a_dangling_handle() {
    let dir = tempfile::tempdir().unwrap();
    let m = stdout(&launchgraph(&["manifest", "producer-consumer"]));
    let broken = m.replacen(r#"{"__handle__":0}"#, r#"{"__handle__":99}"#, 1);
    assert_ne!(broken, m);
    let path = dir.path().join("broken.json");
    std::fs::write(&path, broken).unwrap();
    assert_eq!(launchgraph(&["validate", path.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn validate_missing_file_fails() {
    assert_eq!(launchgraph(&["validate", "/nonexistent/manifest.json"]).status.code(), Some(1));
}

#[test]
fn bench_to_an_unwritable_path_fails() {
    let o = launchgraph(&[
        "bench",
        "--duration",
        "1",
        "--variants",
        "single",
        "--requesters",
        "1",
        "--out",
        "/nonexistent/dir/bench.csv",
    ]);
    assert_eq!(o.status.code(), Some(1));
}
