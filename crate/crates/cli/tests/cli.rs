use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).display().to_string()
}

fn foml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_foml")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

fn formula_file(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn sat_model_rechecks_through_check() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("model.json").display().to_string();
    for (fragment, file) in [("lbf", fixture("exists_box.fml")), ("abbabe", fixture("abbabe_example.fml"))] {
        let o = foml(&["--json", "sat", "--fragment", fragment, "--formula", &file, "--model-out", &model]);
        assert_eq!(o.status.code(), Some(0));
        let v = json(&o);
        assert_eq!(v["status"], "sat");
        let world = v["world"].as_str().unwrap().to_string();
        let assign: Vec<String> =
            v["assignment"].as_object().unwrap().iter().map(|(k, e)| format!("{k}={}", e.as_str().unwrap())).collect();
        let c = foml(&["check", "--model", &model, "--world", &world, "--formula", &file, "--assign", &assign.join(",")]);
        assert_eq!(c.status.code(), Some(0));
        assert_eq!(stdout(&c).trim(), "true", "{fragment}");
    }
}

#[test]
fn sat_reports_a_one_world_model() {
    let o = foml(&["--json", "sat", "--fragment", "lbf", "--formula", &fixture("exists_box.fml")]);
    let v = json(&o);
    assert_eq!(v["model"]["worlds"].as_array().unwrap().len(), 1);
    assert!(v["stats"]["nodes"].as_u64().unwrap() > 0);
    assert!(v["stats"]["wall_ms"].is_number());
}

#[test]
fn unsat_and_limits_have_their_own_codes() {
    let o = foml(&["sat", "--fragment", "lbf", "--formula", &fixture("dia_box_clash.fml")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("unsat"));
    let o = foml(&["--json", "sat", "--fragment", "lbf", "--formula", &fixture("beta1_two_tiles.fml"), "--max-nodes", "5"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&o)["status"], "resource-exceeded");
}

#[test]
fn fragment_violations_are_usage_errors() {
    let o = foml(&["sat", "--fragment", "lbf", "--formula", &fixture("phi2.fml")]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("forall x. (exists y."), "{err}");
    let o = foml(&["sat", "--fragment", "abbabe", "--formula", &fixture("exists_box.fml")]);
    assert_eq!(o.status.code(), Some(2));
    let o = foml(&["sat", "--fragment", "modal", "--formula", &fixture("exists_box.fml")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trace_lists_rule_applications() {
    let o = foml(&["sat", "--fragment", "lbf", "--strategy", "reference", "--trace", "--formula", &fixture("exists_box.fml")]);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().take(2).collect();
    assert_eq!(lines, ["exists r exists x. (box P(x))", "end r box P(x)"]);
}

#[test]
fn check_reproduces_the_example_models() {
    let o = foml(&["check", "--model", &fixture("m3.json"), "--world", "w3", "--formula", &fixture("exists_box.fml")]);
    assert_eq!(stdout(&o).trim(), "true");
    let dir = TempDir::new().unwrap();
    let f = formula_file(&dir, "f.fml", "box exists x. P(x)");
    let o = foml(&["--json", "check", "--model", &fixture("m2.json"), "--world", "w2", "--formula", &f]);
    let v = json(&o);
    assert_eq!(v["status"], "false");
    assert!(v["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("u2")));
    let f = formula_file(&dir, "g.fml", "box false");
    let o = foml(&["check", "--model", &fixture("m1.json"), "--world", "v1", "--formula", &f]);
    assert_eq!(stdout(&o).trim(), "true");
}

#[test]
fn check_names_uncovered_variables() {
    let dir = TempDir::new().unwrap();
    let f = formula_file(&dir, "f.fml", "P(y)");
    let o = foml(&["check", "--model", &fixture("m1.json"), "--world", "w1", "--formula", &f]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("free variable y"));
    let o = foml(&["check", "--model", &fixture("m1.json"), "--world", "v1", "--formula", &f, "--assign", "y=a"]);
    assert_eq!(stdout(&o).trim(), "true");
}

#[test]
fn classify_bundles_and_formulas() {
    let o = foml(&["classify", "--bundles", "ab", "--domain", "constant"]);
    assert!(stdout(&o).starts_with("Undecidable"));
    let o = foml(&["classify", "--bundles", "eb,be", "--domain", "increasing"]);
    assert!(stdout(&o).starts_with("No FMP"));
    let o = foml(&["classify", "--formula", &fixture("phi2.fml")]);
    assert!(stdout(&o).contains("not LBF: forbidden forall-exists alternation"));
    let o = foml(&["--json", "classify", "--formula", &fixture("beta1_one_tile.fml")]);
    assert_eq!(json(&o)["stats"]["lbf"], true);
}

#[test]
fn generate_writes_parsable_formulas() {
    let o = foml(&["generate", "delta", "--n", "2"]);
    assert_eq!(stdout(&o).trim(), "(dia true) & (box ((dia true) & (box true)))");
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("beta.fml").display().to_string();
    let o = foml(&["generate", "beta-nt", "--n", "1", "--tiling", &fixture("one_tile.json"), "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&out).unwrap(), fs::read_to_string(fixture("beta1_one_tile.fml")).unwrap());
    let o = foml(&["--json", "classify", "--formula", &out]);
    assert_eq!(json(&o)["stats"]["lbf"], true);
    let o = foml(&["generate", "sample-lbf", "--count", "5", "--seed", "3"]);
    assert_eq!(stdout(&o).lines().count(), 5);
    let o = foml(&["generate", "ebba"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_finds_nothing_for_phi2() {
    let o = foml(&["--json", "oracle", "--formula", &fixture("phi2.fml"), "--max-depth", "3", "--max-domain", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["status"], "none-within-bounds");
    let o = foml(&["oracle", "--formula", &fixture("phi2.fml"), "--max-depth", "3", "--max-domain", "3", "--ceiling", "10"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn oracle_models_recheck() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m.json").display().to_string();
    let o = foml(&["--json", "oracle", "--formula", &fixture("exists_box.fml"), "--model-out", &model]);
    let v = json(&o);
    assert_eq!(v["status"], "found");
    let world = v["world"].as_str().unwrap();
    let c = foml(&["check", "--model", &model, "--world", world, "--formula", &fixture("exists_box.fml")]);
    assert_eq!(stdout(&c).trim(), "true");
}

#[test]
fn parse_errors_report_positions() {
    let dir = TempDir::new().unwrap();
    let f = formula_file(&dir, "bad.fml", "box (P(x)");
    let o = foml(&["--json", "sat", "--fragment", "lbf", "--formula", &f]);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    assert_eq!(v["status"], "error");
    assert!(v["notes"][0].as_str().unwrap().contains("bad.fml:1:"));
}
