//! End-to-end tests of the `lincat` binary: outputs, exit codes and the
//! JSON schemas under `schemas/`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jsonschema::JSONSchema;
use lincat::graph::{almost_equal, Graph};
use lincat::syntax::{parse_term, typecheck};
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).to_string_lossy().into_owned()
}

fn lincat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lincat")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8")
}

/// A scratch file holding `text`, unique per test.
fn scratch(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("lincat-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

/// Parse stdout as JSON and validate it against `schemas/<name>.schema.json`.
fn json_output(out: &Output, schema: &str) -> Value {
    let v: Value = serde_json::from_str(&stdout(out)).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)));
    let path = root().join("schemas").join(format!("{schema}.schema.json"));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let compiled = JSONSchema::compile(&s).unwrap_or_else(|e| panic!("{schema} schema: {e}"));
    if let Err(errors) = compiled.validate(&v) {
        let msgs: Vec<String> = errors.map(|e| format!("{e} at {}", e.instance_path)).collect();
        panic!("{schema} output violates its schema: {msgs:?}\n{v:#}");
    };
    v
}

#[test]
fn typecheck_prints_the_judgement() {
    let out = lincat(&["typecheck", &fixture("promotion_square_left.lc")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains(": !a (x) !b -> !(!(a (x) b) (x) !(a (x) b))"), "{}", stdout(&out));
    let out = lincat(&["--format", "json", "typecheck", &fixture("promotion_square_left.lc")]);
    let v = json_output(&out, "typecheck");
    assert_eq!(v["source"], "!a (x) !b");
}

#[test]
fn parse_round_trips_through_the_printer() {
    let out = lincat(&["parse", &fixture("nested_boards.lc")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed = stdout(&out);
    let again = lincat(&["parse", &scratch("reparse.lc", &printed)]);
    assert_eq!(stdout(&again), printed);
}

#[test]
fn input_errors_exit_3_with_a_located_message() {
    let out = lincat(&["typecheck", &scratch("bad.lc", "id{a} (x) (dup{a} ; id{!a})")]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("mismatch at R"), "{}", stderr(&out));
    let out = lincat(&["parse", &scratch("empty.lc", "")]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("syntax error"), "{}", stderr(&out));
    let out = lincat(&["typecheck", "no/such/file.lc"]);
    assert_eq!(code(&out), 3);
    let out = lincat(&["--atoms", "a", "typecheck", &fixture("promotion_square_left.lc")]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("unknown atom `b`"), "{}", stderr(&out));
    let out = lincat(&["--fuel", "0", "parse", &fixture("nested_boards.lc")]);
    assert_eq!(code(&out), 3);
}

#[test]
fn normalize_shows_the_rewriting_trace() {
    let out = lincat(&["normalize", "--trace", &fixture("promotion_square_right.lc")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let rules: Vec<&str> =
        text.lines().filter_map(|l| l.split(" @ ").next()).filter(|r| r.parse::<u8>().is_ok()).collect();
    assert_eq!(rules, ["9", "11", "5", "5"]);
    let out = lincat(&["--format", "json", "normalize", "--trace", &fixture("promotion_square_right.lc")]);
    let v = json_output(&out, "normalize");
    assert_eq!(v["trace"]["steps"].as_array().unwrap().len(), 5);
    let left = lincat(&["--format", "json", "normalize", &fixture("promotion_square_left.lc")]);
    assert_eq!(json_output(&left, "normalize")["normal"], v["normal"]);
}

#[test]
fn normalize_out_of_fuel_is_inconclusive() {
    let out = lincat(&["--fuel", "1", "normalize", &fixture("promotion_square_right.lc")]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn graph_renders_boards_as_clusters() {
    let out = lincat(&["graph", "--dot", &fixture("nested_boards.lc")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let dot = stdout(&out);
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("subgraph cluster").count(), 4);
    let out = lincat(&["graph", &fixture("nested_boards.lc")]);
    assert!(stdout(&out).contains("4 boards") && stdout(&out).contains("well formed"), "{}", stdout(&out));
}

#[test]
fn graph_json_round_trips_and_matches_the_library() {
    let file = scratch("dup.lc", "dup{a}");
    let out = lincat(&["graph", "--json", &file]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json_output(&out, "graph");
    let dups = v["parts"].as_array().unwrap().iter().filter(|p| p["kind"] == "Duplicator").count();
    assert_eq!(dups, 1);
    let back = Graph::from_json(&v).unwrap();
    let direct = Graph::normal_of(&typecheck(&parse_term("dup{a}").unwrap()).unwrap()).unwrap();
    assert!(almost_equal(&back, &direct));
    let nested = lincat(&["--format", "json", "graph", &fixture("nested_boards.lc")]);
    assert_eq!(json_output(&nested, "graph")["boards"].as_array().unwrap().len(), 4);
}

#[test]
fn coeff_compares_the_two_evaluations() {
    let file = fixture("promotion_square_right.lc");
    let out = lincat(&["coeff", &file, "({a0},{b0})", "{({(a0,b0)},{})}"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("pi = 1") && stdout(&out).contains("matrix = 1"), "{}", stdout(&out));
    let out = lincat(&["--format", "json", "coeff", &file, "({a0},{b0})", "{({(a0,b0)},{(a0,b0)})}"]);
    let v = json_output(&out, "coeff");
    assert_eq!((v["pi"].as_str(), v["matrix"].as_str(), v["agree"].as_bool()), (Some("0"), Some("0"), Some(true)));
    let out = lincat(&["coeff", "--via", "matrix", &file, "({a0},{b0})", "{({(a0,b0)},{})}"]);
    assert_eq!(stdout(&out), "matrix = 1\n");
    let out = lincat(&["coeff", &file, "({a0},{b0})", "{(a0,b0)}"]);
    assert_eq!(code(&out), 3);
    let out = lincat(&["coeff", &file, "({a0}", "{}"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn pecho_builds_the_echo_instance() {
    let out = lincat(&["pecho", &fixture("duplicator_echo.lc")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("p = 13") && stdout(&out).contains("coefficient mod p = 2"), "{}", stdout(&out));
    let out = lincat(&["--format", "json", "pecho", &fixture("nested_boards.lc")]);
    let v = json_output(&out, "pecho");
    assert!(v["stars"].as_array().unwrap().iter().all(|s| s["holds"] == true));
    assert_eq!(v["k"].as_object().unwrap().len(), 4);
    let out = lincat(&["--p", "2", "pecho", &fixture("duplicator_echo.lc")]);
    assert_eq!(code(&out), 3);
    let out = lincat(&["--p", "15", "pecho", &fixture("duplicator_echo.lc")]);
    assert_eq!(code(&out), 3);
    let out = lincat(&["--p", "17", "pecho", &fixture("duplicator_echo.lc")]);
    assert_eq!(code(&out), 0);
}

#[test]
fn decide_exit_codes() {
    let (l, r) = (fixture("promotion_square_left.lc"), fixture("promotion_square_right.lc"));
    let out = lincat(&["decide", &l, &r]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("equivalent"));
    let swap = scratch("swap.lc", "symT{!a,!a}");
    let id = scratch("id.lc", "id{!a (x) !a}");
    let out = lincat(&["--format", "json", "decide", &swap, &id]);
    assert_eq!(code(&out), 1);
    let v = json_output(&out, "decide");
    assert_eq!((v["verdict"].as_str(), v["witness"]["kind"].as_str()), (Some("distinct"), Some("forms")));
    let out = lincat(&["--format", "json", "decide", "--semantic", &swap, &id]);
    assert_eq!(code(&out), 1);
    let v = json_output(&out, "decide");
    assert_eq!((v["witness"]["kind"].as_str(), v["witness"]["condition"].as_u64()), (Some("echo"), Some(1)));
    let out = lincat(&["--format", "json", "decide", "--semantic", &l, &r]);
    assert_eq!(code(&out), 0);
    json_output(&out, "decide");
    let out = lincat(&["--fuel", "1", "--format", "json", "decide", &l, &r]);
    assert_eq!(code(&out), 2);
    assert_eq!(json_output(&out, "decide")["verdict"], "inconclusive");
    let out = lincat(&["decide", &l, &fixture("nested_boards.lc")]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("boundaries differ"));
    let out = lincat(&["--p", "2", "decide", "--semantic", &swap, &id]);
    assert_eq!(code(&out), 3);
}

#[test]
fn selftest_passes_reproducibly() {
    let args = ["--format", "json", "--seed", "5", "selftest", "--count", "30"];
    let first = lincat(&args);
    assert_eq!(code(&first), 0, "{}", stdout(&first));
    let v = json_output(&first, "selftest");
    assert_eq!(v["ok"], true);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["failed"] == 0 && c["passed"].as_u64() > Some(0)));
    assert_eq!(stdout(&lincat(&args)), stdout(&first));
}

#[test]
fn selftest_catches_an_injected_failure() {
    let out = lincat(&["--seed", "5", "selftest", "--count", "10", "--inject-failure"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL coefficients"), "{}", stdout(&out));
}

#[test]
fn fixtures_resolve_through_the_environment() {
    let dir = std::env::temp_dir().join(format!("lincat-fixtures-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("only_here.lc"), "// a comment line\nweak{a}\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lincat"))
        .args(["typecheck", "only_here.lc"])
        .env("LINCAT_FIXTURES", &dir)
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out), "weak{a} : !a -> 1\n");
    // Without the override a bare name falls back to the shipped fixtures.
    let out = Command::new(env!("CARGO_BIN_EXE_lincat"))
        .args(["typecheck", "duplicator_echo.lc"])
        .env_remove("LINCAT_FIXTURES")
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}
