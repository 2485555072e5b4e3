use serde_json::Value;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn problem(name: &str) -> String {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems");
    dir.join(name).to_string_lossy().into_owned()
}

fn qmlsolver(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmlsolver")).args(args).output().expect("binary runs")
}

fn with_stdin(args: &[&str], input: &str, env: &[(&str, &str)]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_qmlsolver"))
        .args(args)
        .envs(env.iter().copied())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit status")
}

#[test]
fn barcan_is_valid_over_constant_domains() {
    let o = qmlsolver(&[&problem("barcan.qml")]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["verdict"], "valid");
    assert_eq!(r["decided"], "unsat");
    assert_eq!(r["backend"], "weakq");
    assert!(r.get("witness").is_none());
}

#[test]
fn barcan_fails_over_expanding_domains() {
    let o = qmlsolver(&[&problem("barcan.qml"), "--domains", "expanding", "--emit-witness", "json"]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    assert_eq!(r["verdict"], "invalid");
    assert_eq!(r["backend"], "qksat");
    assert_eq!(r["witness_role"], "counter_model");
    let worlds = r["witness"]["worlds"].as_array().unwrap();
    let sizes: Vec<usize> = worlds.iter().map(|w| w["domain"].as_array().unwrap().len()).collect();
    assert_eq!(sizes, [1, 2]);
}

#[test]
fn dot_witness() {
    let o = qmlsolver(&[&problem("non_rigid.qml"), "--emit-witness", "dot"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert!(r["witness_dot"].as_str().unwrap().starts_with("digraph"));
}

#[test]
fn cross_validation_runs_every_backend() {
    let o = qmlsolver(&[&problem("non_rigid.qml"), "--domains", "expanding", "--cross-validate"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    let names: Vec<&str> = r["backends"].as_array().unwrap().iter().map(|b| b["backend"].as_str().unwrap()).collect();
    assert_eq!(names, ["qksat", "weakq", "oracle"]);
    assert!(r["backends"].as_array().unwrap().iter().all(|b| b["sat"] == true));

    let o = qmlsolver(&[&problem("barcan.qml"), "--cross-validate"]);
    assert_eq!(code(&o), 0);
    let names: Vec<String> =
        json(&o)["backends"].as_array().unwrap().iter().map(|b| b["backend"].as_str().unwrap().to_string()).collect();
    assert_eq!(names, ["weakq", "links", "oracle"]);
}

#[test]
fn s5_global_consequence() {
    let o = qmlsolver(&[&problem("rigid_s5.qml")]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["verdict"], "valid");
    let steps: Vec<&str> = r["pipeline"].as_array().unwrap().iter().map(|s| s["step"].as_str().unwrap()).collect();
    assert!(steps.contains(&"s5_global_to_validity"), "{steps:?}");
}

#[test]
fn undecidable_and_incompatible_tasks_are_rejected() {
    let o = qmlsolver(&[&problem("global_kn.qml")]);
    assert_eq!(code(&o), 2);
    assert_eq!(json(&o)["error"]["code"], "undecidable");

    let o = qmlsolver(&[&problem("rigid_s5.qml"), "--logic", "s5n:2"]);
    assert_eq!(code(&o), 2);
    assert_eq!(json(&o)["error"]["code"], "undecidable");

    let o = qmlsolver(&[&problem("non_rigid.qml"), "--logic", "s5", "--domains", "expanding"]);
    assert_eq!(code(&o), 2);

    let o = qmlsolver(&[&problem("non_rigid.qml"), "--domains", "expanding", "--backend", "links"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn syntax_errors_carry_positions() {
    let o = with_stdin(&["-"], "logic: kn:1\nformula:\n  box 1 P(x\n", &[]);
    assert_eq!(code(&o), 2);
    let r = json(&o);
    assert_eq!(r["error"]["code"], "parse");
    assert!(r["error"]["message"].as_str().unwrap().contains("3:"), "{r}");
}

#[test]
fn resource_cap_exits_with_three() {
    let o = with_stdin(&["-"], "formula:\n  exists x. (P(x) and dia 1 Q(x))\n", &[("QMLSOLVER_CAP_TYPES", "4")]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(json(&o)["error"]["code"], "cap");
}

#[test]
fn output_is_deterministic_up_to_timings() {
    let strip = |o: &Output| {
        let mut v = json(o);
        v.as_object_mut().unwrap().remove("timings");
        v.to_string()
    };
    for args in [vec![problem("vulcan.qml"), "--emit-witness".into(), "json".into()], vec![problem("barcan.qml"), "--domains".into(), "expanding".into(), "--emit-witness".into(), "json".into()]] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = qmlsolver(&args);
        let b = qmlsolver(&args);
        assert_eq!(strip(&a), strip(&b));
    }
}

#[test]
fn reduce_prints_a_problem_that_parses_again() {
    let o = qmlsolver(&[&problem("barcan.qml"), "--domains", "expanding", "--constants", "total", "--reduce", "expanding_to_constant"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("domains: constant"), "{text}");
    // the relativised negation is still refutable: the reduction preserves the verdict
    let again = with_stdin(&["-"], &text, &[]);
    assert_eq!(code(&again), 1);
    assert_eq!(json(&again)["verdict"], "invalid");

    let o = qmlsolver(&[&problem("vulcan.qml"), "--reduce", "eliminate_dd"]);
    assert_eq!(code(&o), 0);
    assert!(!String::from_utf8(o.stdout).unwrap().contains("iota"));

    let o = qmlsolver(&[&problem("vulcan.qml"), "--reduce", "no_such_reduction"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn seed_is_echoed() {
    let o = qmlsolver(&[&problem("non_rigid.qml"), "--seed", "42"]);
    assert_eq!(json(&o)["seed"], 42);
}
