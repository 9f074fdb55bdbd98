use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kvwb_core::model::builtins::builtin;
use kvwb_core::model::io::model_to_json;
use serde_json::{json, Value};

fn kvwb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kvwb"))
        .args(args)
        .env_remove("KVWB_CAP")
        .output()
        .expect("kvwb runs")
}

fn json_out(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn model_file(dir: &Path, name: &str) -> PathBuf {
    let v: Value = serde_json::from_str(&model_to_json(&builtin(name).unwrap()).unwrap()).unwrap();
    write(dir, &format!("{}.json", name.replace(':', "_")), &v)
}

fn stage<'a>(report: &'a Value, name: &str) -> &'a Value {
    report["stages"].as_array().unwrap().iter().find(|s| s["stage"] == name).unwrap()
}

#[test]
fn trit_report() {
    let o = kvwb(&["run", "--builtin", "classical:3"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json_out(&o);
    assert_eq!(stage(&r, "spin")["details"]["form"], json!([["1/3", "0", "0"], ["0", "1/3", "0"], ["0", "0", "1/3"]]));
    assert_eq!(stage(&r, "self-duality")["status"], "pass");
    let cands = &stage(&r, "identification")["details"]["identification"]["candidates"];
    assert_eq!(cands[0], "DirectSum(RealSym(1), RealSym(1), RealSym(1))");
}

#[test]
fn qubit_report() {
    let r = json_out(&kvwb(&["run", "--builtin", "qubit:complex"]));
    assert_eq!(stage(&r, "self-duality")["details"]["sampled"]["method"], "sampled+analytic");
    let cands = stage(&r, "identification")["details"]["identification"]["candidates"].as_array().unwrap().clone();
    assert!(cands.contains(&json!("ComplexHerm(2)")));
}

#[test]
fn expectations_control_the_exit_code() {
    assert_eq!(kvwb(&["run", "--builtin", "squit", "--expect", "not-self-dual,not-sharp"]).status.code(), Some(0));
    assert_eq!(kvwb(&["run", "--builtin", "squit"]).status.code(), Some(1));
    assert_eq!(kvwb(&["run", "--builtin", "classical:2", "--expect", "not-sharp"]).status.code(), Some(1));
    assert_eq!(kvwb(&["run", "--builtin", "classical:2", "--expect", "bogus"]).status.code(), Some(2));
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let good = model_file(dir.path(), "classical:2");
    assert_eq!(kvwb(&["validate", good.to_str().unwrap()]).status.code(), Some(0));
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&good).unwrap()).unwrap();
    v["states"]["extreme"][0] = json!({"a0": "1/2", "a1": "1/3"});
    let bad = write(dir.path(), "bad.json", &v);
    let o = kvwb(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("state-normalization"));
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"outcomes\": [").unwrap();
    assert_eq!(kvwb(&["validate", broken.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn spin_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = model_file(dir.path(), "classical:4");
    let o = kvwb(&["spin", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = json_out(&o);
    assert_eq!(v["stage"]["details"]["solution_space_dim"], 1);
    assert_eq!(v["stage"]["details"]["form"][2][2], "1/4");
}

#[test]
fn selfdual_with_a_given_form() {
    let dir = tempfile::tempdir().unwrap();
    let m = model_file(dir.path(), "classical:3");
    let form = write(dir.path(), "form.json", &json!([[2, 0, 0], [0, 2, 0], [0, 0, 2]]));
    let o = kvwb(&["cone", "selfdual", "--form", form.to_str().unwrap(), m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = json_out(&o);
    assert_eq!(v["stage"]["details"]["form_source"], "override");
    assert_eq!(v["stage"]["details"]["certificate"]["verdict"], true);
    let skew = write(dir.path(), "skew.json", &json!([[1, 0, 0], [0, 1, 0], [0, 0, -1]]));
    let o = kvwb(&["cone", "selfdual", "--form", skew.to_str().unwrap(), m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn weak_and_dual_on_squit() {
    let o = kvwb(&["cone", "weak", "--builtin", "squit"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json_out(&o)["weak"]["verdict"], true);
    let d = json_out(&kvwb(&["cone", "dual", "--builtin", "squit"]));
    assert_eq!(d["equal"], false);
}

#[test]
fn saved_reports_recheck() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = kvwb(&["run", "--builtin", "squit", "--expect", "not-self-dual,not-sharp", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let rc = kvwb(&["recheck", out.to_str().unwrap()]);
    assert_eq!(rc.status.code(), Some(0), "{}", String::from_utf8_lossy(&rc.stdout));
    assert_eq!(json_out(&rc)["all_ok"], true);

    let mut r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for s in r["stages"].as_array_mut().unwrap() {
        if s["stage"] == "self-duality" {
            s["details"]["certificate"]["verdict"] = json!(true);
        }
    }
    let tampered = write(dir.path(), "t.json", &r);
    assert_eq!(kvwb(&["recheck", tampered.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn cap_comes_from_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_kvwb"))
        .args(["run", "--builtin", "classical:4"])
        .env("KVWB_CAP", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap"));
    assert_eq!(kvwb(&["run", "--builtin", "classical:4", "--cap", "3"]).status.code(), Some(2));
}

#[test]
fn markdown_report() {
    let o = kvwb(&["report", "--format", "md", "--builtin", "qubit:real"]);
    assert_eq!(o.status.code(), Some(0));
    let md = String::from_utf8(o.stdout).unwrap();
    for s in ["validation", "spin", "jordan-recovery", "identification"] {
        assert!(md.contains(&format!("## {s}")));
    }
}

#[test]
fn jordan_subcommands() {
    let v = kvwb(&["jordan", "verify", "--algebra", "QuatHerm(2)"]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(json_out(&v)["identity"]["exact"], true);
    assert_eq!(kvwb(&["jordan", "verify", "--algebra", "SpinFactor(3)", "--corrupt"]).status.code(), Some(1));
    let id = json_out(&kvwb(&["jordan", "identify", "--algebra", "SpinFactor(5)"]));
    assert!(id["candidates"].as_array().unwrap().contains(&json!("QuatHerm(2)")));
    let rec = kvwb(&["jordan", "recover", "--builtin", "qubit:real"]);
    assert_eq!(rec.status.code(), Some(0));
    assert_eq!(json_out(&rec)["stage"]["details"]["report"]["unique"], true);
}

#[test]
fn images() {
    let dir = tempfile::tempdir().unwrap();
    let map = write(
        dir.path(),
        "map.json",
        &json!({
            "target": {"outcomes": ["b0", "b1"], "tests": [["b0", "b1"]]},
            "map": {"a0": "b0", "a1": "b1", "a2": "b0", "a3": "b1"}
        }),
    );
    let o = kvwb(&["image", "--builtin", "classical-copies:2:2", "--map", map.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = json_out(&o);
    assert!(v["isomorphic_to"].as_array().unwrap().contains(&json!("classical:2")));
    let q = json_out(&kvwb(&["image", "--builtin", "qubit:complex"]));
    assert_eq!(q["no_nontrivial_images"], true);
    assert_eq!(kvwb(&["image", "--builtin", "classical:3"]).status.code(), Some(2));
}
