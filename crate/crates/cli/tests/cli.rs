use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn pullback(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pullback")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn running() -> String {
    fixture("running.pb").display().to_string()
}

#[test]
fn check_prints_types() {
    let o = pullback(&["check", &running()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "(R × R)*");
    let o = pullback(&["check", &fixture("sum.pb").display().to_string()]);
    assert_eq!(stdout(&o).trim(), "((R ⇒ R ⇒ R) ⇒ R ⇒ R)*");
}

#[test]
fn run_prints_the_covector() {
    let o = pullback(&["run", &running()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "[660, 528]*");
}

#[test]
fn anf_has_four_bindings() {
    let o = pullback(&["anf", &running()]);
    let s = stdout(&o);
    assert!(s.starts_with("let "), "{s}");
    assert_eq!(s.matches(" = ").count(), 4, "{s}");
    assert!(s.contains("g(") && s.contains("mult(") && s.contains("pow2("));
}

#[test]
fn grad_prints_and_checks_a_row() {
    let o = pullback(&["grad", &running()]);
    assert_eq!(stdout(&o).trim(), "660 528");
    let o = pullback(&["grad", &running(), "--at", "-0.5,2", "--check"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let s = stdout(&o);
    assert!(s.contains("oracle:") && s.contains("finite differences:") && !s.contains("MISMATCH"), "{s}");
}

#[test]
fn trace_lines_are_json() {
    let o = pullback(&["trace", &running(), "--format", "lines"]);
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> =
        stdout(&o).lines().map(|l| serde_json::from_str(l).expect("one JSON object per line")).collect();
    let (last, steps) = lines.split_last().unwrap();
    assert_eq!(last["value"], "[660, 528]*");
    assert!(steps.iter().all(|s| s["rule"].is_string() && s["step"].is_u64()));
    assert!(steps.iter().any(|s| s["rule"] == "A"));
    let numbers: Vec<u64> = steps.iter().map(|s| s["step"].as_u64().unwrap()).collect();
    assert!(numbers.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn exit_codes() {
    let dir = std::env::temp_dir().join(format!("pullback-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.pb");
    std::fs::write(&bad, "pb (\\x. x").unwrap();
    let o = pullback(&["run", &bad.display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    let ill = dir.join("ill.pb");
    std::fs::write(&ill, "1 2").unwrap();
    assert_eq!(pullback(&["check", &ill.display().to_string()]).status.code(), Some(1));
    let o = pullback(&["--fuel", "3", "run", &running()]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn prims_lists_the_registry() {
    let s = stdout(&pullback(&["prims"]));
    assert!(s.lines().any(|l| l.starts_with("g: R^2 → R^2")), "{s}");
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(pullback(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pullback(&["--help"]).status.code(), Some(0));
}
