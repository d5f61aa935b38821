use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lidonor"));
    c.env_remove("LIDONOR_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lidonor")
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn bundled() -> String {
    repo().join("docs/schedules/pi_then_ret.json").to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn load(name: &str) -> Value {
    let text = std::fs::read_to_string(repo().join("docs/schema").join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Replaces references to sibling schema files with their contents; file-relative ids go.
fn inline_refs(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("$id");
            if let Some(Value::String(r)) = map.get("$ref") {
                if r.ends_with(".schema.json") {
                    let mut sub = load(r);
                    inline_refs(&mut sub);
                    *v = sub;
                    return;
                }
            }
            map.values_mut().for_each(inline_refs);
        }
        Value::Array(items) => items.iter_mut().for_each(inline_refs),
        _ => {}
    }
}

fn assert_valid(schema: &str, doc: &Value) {
    let mut s = load(schema);
    inline_refs(&mut s);
    let compiled = jsonschema::JSONSchema::compile(&s).expect("schema compiles");
    let msgs: Vec<String> = match compiled.validate(doc) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    assert!(msgs.is_empty(), "{schema}: {msgs:?}");
}

fn json_of(args: &[&str]) -> Value {
    serde_json::from_str(&stdout(&run(args))).unwrap()
}

#[test]
fn lifetimes_csv_layout() {
    let text = stdout(&run(&["lifetimes", "--eps", "0.05:0.5:0.05"]));
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(lines.next(), Some("eps,tau10_s,tau21_s"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[9].starts_with("5e-1,"));
    for key in ["# program:", "# constants:", "# overrides:", "# shell_quadrature:", "# coupling_quadrature:"] {
        assert!(text.lines().any(|l| l.starts_with(key)), "{key}");
    }
}

#[test]
fn tables_match_schema() {
    for args in [
        vec!["levels", "--format", "json"],
        vec!["lifetimes", "--format", "json", "--eps", "logN(0.01,1,5)"],
        vec!["coupling", "--format", "json", "--r", "50,100"],
        vec!["rabi", "--format", "json", "--freq-ghz", "10"],
        vec!["operating-point", "--format", "json"],
        vec!["operating-point", "--format", "json", "--sweep", "fig3-temperature", "--printed"],
        vec!["operating-point", "--format", "json", "--sweep", "fig1-lifetimes", "--eps", "logN(0.01,1,4)"],
        vec!["operating-point", "--format", "json", "--sweep", "coupling-vs-r", "--r", "20:100:20"],
        vec!["operating-point", "--format", "json", "--sweep", "rates-vs-omega", "--eps", "0.1,0.2"],
    ] {
        let doc = json_of(&args);
        assert_valid("table.schema.json", &doc);
        let width = doc["columns"].as_array().unwrap().len();
        assert!(doc["rows"].as_array().unwrap().iter().all(|r| r.as_array().unwrap().len() == width), "{args:?}");
    }
}

#[test]
fn other_documents_match_schema() {
    assert_valid("constants.schema.json", &json_of(&["constants", "--format", "json"]));
    assert_valid("verify.schema.json", &json_of(&["verify", "--skip-couplings", "--format", "json"]));
    let b = bundled();
    let evo = json_of(&["simulate", "--schedule", &b, "--sample-ns", "20"]);
    assert_valid("evolution.schema.json", &evo);
    assert!(evo["result"]["trace_deviation"].as_f64().unwrap() < 1e-9);
    assert!(evo["result"]["fidelity_report"][0]["fidelity"].as_f64().unwrap() > 0.98);
    assert_valid("schedule.schema.json", &json_of(&["simulate", "--schedule", &b, "--validate-only"]));
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(&b).unwrap()).unwrap();
    assert_valid("schedule.schema.json", &raw);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let b = bundled();
    for (i, args) in [
        vec!["lifetimes"],
        vec!["operating-point", "--sweep", "fig3-temperature"],
        vec!["simulate", "--schedule", b.as_str()],
    ]
    .iter()
    .enumerate()
    {
        let file = dir.path().join(format!("{i}.out"));
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let o = bin().args(args).arg("--out").arg(&file).output().unwrap();
            assert!(o.status.success());
            assert!(o.stdout.is_empty());
            outputs.push(std::fs::read_to_string(&file).unwrap());
        }
        assert!(outputs[0] == outputs[1], "{args:?}");
    }
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["levels", "--eps", "1:0:1"]).status.code(), Some(1));
    assert_eq!(run(&["--set", "nope=1", "constants"]).status.code(), Some(1));
    let missing = run(&["levels", "--out", "/definitely/not/here/x.csv"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("does not exist"));
    assert_eq!(run(&["verify", "--skip-couplings", "--quad-order", "4"]).status.code(), Some(2));
    // Far outside the long-wavelength regime the closed form and the quadrature part ways.
    let fail = run(&["verify", "--skip-couplings", "--set", "delta_c_meV=10", "--set", "a_perp_nm=5"]);
    assert_eq!(fail.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&fail.stderr).contains("FAIL"));
    assert_eq!(run(&["verify", "--skip-couplings"]).status.code(), Some(0));
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn config_file_and_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"xi_u_eV": 9.5}"#);
    let value_of = |doc: &Value| {
        doc["constants"].as_array().unwrap().iter().find(|e| e["key"] == "xi_u_eV").unwrap()["value"].as_f64().unwrap()
    };
    let via_flag: Value = serde_json::from_str(&stdout(
        &run(&["constants", "--format", "json", "--config", cfg.to_str().unwrap()]),
    ))
    .unwrap();
    assert_eq!(value_of(&via_flag), 9.5);
    let via_env = bin().args(["constants", "--format", "json"]).env("LIDONOR_CONFIG", &cfg).output().unwrap();
    let via_env: Value = serde_json::from_str(&stdout(&via_env)).unwrap();
    assert_eq!(value_of(&via_env), 9.5);
    assert_eq!(via_env["metadata"]["config"], Value::String(cfg.to_string_lossy().into_owned()));
    let both: Value = serde_json::from_str(&stdout(
        &run(&["constants", "--format", "json", "--config", cfg.to_str().unwrap(), "--set", "xi_u_eV=7"]),
    ))
    .unwrap();
    assert_eq!(value_of(&both), 7.0);
    assert_eq!(both["metadata"]["overrides"]["xi_u_eV"], 7.0);
}

#[test]
fn schedule_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let register = r#""register": {"n": 1, "spacing_nm": 50, "epsilon0": 0.2, "mode": "two_level", "temperature_mk": 0}"#;
    let empty = write(dir.path(), "empty.json", &format!("{{{register}, \"pulses\": [], \"total_time_ns\": 1}}"));
    assert!(run(&["simulate", "--schedule", empty.to_str().unwrap()]).status.success());
    let pulse = |t: f64| format!(r#"{{"kind": "ac_stress", "target": 0, "t_start_ns": {t}, "duration_ns": 2, "amplitude_dyn_cm2": 1e5, "carrier_rad_per_ns": 1.0}}"#);
    let overlap = write(dir.path(), "overlap.json", &format!("{{{register}, \"pulses\": [{}, {}]}}", pulse(0.0), pulse(1.0)));
    let o = run(&["simulate", "--schedule", overlap.to_str().unwrap(), "--validate-only"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("#0") && err.contains("#1"), "{err}");
    let bad = write(dir.path(), "bad.json", &format!("{{\n{register},\n\"pulses\": [], \"bogus\": 1}}"));
    let o = run(&["simulate", "--schedule", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bogus") && err.contains("line 3"), "{err}");
}

#[test]
fn coupling_oracle_columns() {
    let text = stdout(&run(&["coupling", "--r", "100", "--oracle"]));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header.split(',').count(), 7, "{header}");
}
