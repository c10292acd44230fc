use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ltbarrier_cli::config::RunConfig;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ltbarrier"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], config: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn column(v: &Value, key: &str) -> Vec<Value> {
    v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r[key].clone())
        .collect()
}

fn floats(v: &Value, key: &str) -> Vec<f64> {
    column(v, key).iter().map(|x| x.as_f64().unwrap()).collect()
}

const MODEL_FREE: &str = r#"{
  "schema_version": 1,
  "model": { "type": "gbm", "sigma": 0.2 },
  "contract": {
    "lower": { "type": "constant", "level": 90.0 },
    "payoff": { "type": "call", "strike": 90.0 },
    "maturity": 1.0
  },
  "run": { "n": 256, "spots": [92.0, 100.0, 115.0, 130.0], "method": "volterra" }
}"#;

#[test]
fn configs_round_trip_byte_identical() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let once = RunConfig::from_json(&text).unwrap().to_json();
        let twice = RunConfig::from_json(&once).unwrap().to_json();
        assert_eq!(once, twice, "{}", path.display());
        let out = run(&["canonical"], &path);
        assert_eq!(String::from_utf8(out.stdout).unwrap(), once);
        seen += 1;
    }
    assert!(seen >= 3);
}

#[test]
fn unknown_fields_and_versions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let extra = MODEL_FREE.replace(r#""maturity": 1.0"#, r#""maturity": 1.0, "expiry": 2.0"#);
    let out = run(&["price"], &write_config(&dir, "a.json", &extra));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expiry"));
    let extra = MODEL_FREE.replace(r#""sigma": 0.2"#, r#""sigma": 0.2, "kappa": 1.0"#);
    assert_eq!(
        run(&["price"], &write_config(&dir, "b.json", &extra))
            .status
            .code(),
        Some(1)
    );
    let v2 = MODEL_FREE.replace(r#""schema_version": 1"#, r#""schema_version": 2"#);
    assert_eq!(
        run(&["price"], &write_config(&dir, "c.json", &v2))
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let crossing = r#"{
      "schema_version": 1,
      "model": { "type": "gbm", "sigma": 0.2 },
      "contract": {
        "lower": { "type": "exponential", "level": 100.0, "growth": 0.5 },
        "upper": { "type": "constant", "level": 120.0 },
        "payoff": { "type": "double_no_touch" },
        "maturity": 1.0
      },
      "run": { "spots": [110.0] }
    }"#;
    let out = run(&["price"], &write_config(&dir, "x.json", crossing));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("barriers cross"));

    let cev = configs_dir().join("cev_uao_put.json");
    assert_eq!(
        run(&["price", "--method", "laplace"], &cev).status.code(),
        Some(1)
    );

    let mf = write_config(&dir, "mf.json", MODEL_FREE);
    let outside = MODEL_FREE.replace("[92.0, 100.0, 115.0, 130.0]", "[85.0]");
    assert_eq!(
        run(&["price"], &write_config(&dir, "o.json", &outside))
            .status
            .code(),
        Some(1)
    );
    assert_eq!(bin().arg("price").output().unwrap().status.code(), Some(1));
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(run(&["validate"], &mf).status.code(), Some(0));
    assert_eq!(
        run(&["price"], &dir.path().join("missing.json"))
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn csv_round_trips_to_full_precision() {
    let path = configs_dir().join("dnt.json");
    let json = stdout_json(&run(&["price"], &path));
    let csv = run(&["price", "--format", "csv"], &path);
    assert!(csv.status.success());
    let text = String::from_utf8(csv.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header[0], "spot");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for (row, obj) in rows.iter().zip(json["rows"].as_array().unwrap()) {
        for (key, field) in header.iter().zip(row.split(',')) {
            match &obj[*key] {
                Value::Bool(b) => assert_eq!(field, b.to_string()),
                v => {
                    let (a, b) = (field.parse::<f64>().unwrap(), v.as_f64().unwrap());
                    assert!((a - b).abs() <= 1e-15 * b.abs(), "{key}: {a} vs {b}");
                }
            }
        }
    }

    // the engine value survives the text round trip to 15 significant digits
    let cfg = RunConfig::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let engine = ltbarrier_cli::commands::Engine::new(&cfg).unwrap();
    let p = engine.solve(cfg.run.n).unwrap();
    let direct = ltbarrier::pricing::price(&engine.model, &engine.contract, 100.0, &p)
        .unwrap()
        .price;
    let printed: f64 = rows[1].split(',').nth(4).unwrap().parse().unwrap();
    assert_eq!(format!("{direct:.14e}"), format!("{printed:.14e}"));
}

#[test]
fn model_free_price_and_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(&dir, "mf.json", MODEL_FREE);
    let v = stdout_json(&run(&["price"], &path));
    for (s, p) in floats(&v, "spot").iter().zip(floats(&v, "price")) {
        assert!((p - (s - 90.0)).abs() < 1e-3 * (s - 90.0), "{s}: {p}");
    }
    let l = stdout_json(&run(&["ladder"], &path));
    for d in floats(&l, "delta") {
        assert!((d - 1.0).abs() < 1e-3, "{d}");
    }
    let d = stdout_json(&run(&["deltas", "--n", "64"], &path));
    assert_eq!(d["rows"].as_array().unwrap().len(), 65);
    assert!(column(&d, "delta_plus").iter().all(|x| x == "n/a"));
    assert!(floats(&d, "delta_minus")
        .iter()
        .all(|x| (x - 1.0).abs() < 1e-3));

    let c = stdout_json(&run(&["convergence"], &path));
    let orders = column(&c, "profile_order");
    assert!(orders.iter().all(|o| o == "n/a"), "{orders:?}");
}

#[test]
fn zero_payoff_is_zero_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let text = MODEL_FREE.replace(
        r#""type": "call", "strike": 90.0"#,
        r#""type": "put", "strike": 80.0"#,
    );
    let path = write_config(&dir, "z.json", &text);
    let v = stdout_json(&run(&["price"], &path));
    for key in [
        "european",
        "premium_lower",
        "premium_upper",
        "price",
        "discounted_price",
    ] {
        assert!(floats(&v, key).iter().all(|&x| x == 0.0), "{key}");
    }
    let d = stdout_json(&run(&["deltas"], &path));
    assert!(floats(&d, "delta_minus").iter().all(|&x| x == 0.0));
}

#[test]
fn single_spot_ladder_matches_price() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs_dir().join("dnt.json"))
        .unwrap()
        .replace("[95.0, 100.0, 105.0]", "[101.0]");
    let path = write_config(&dir, "one.json", &text);
    let p = stdout_json(&run(&["price"], &path));
    let l = stdout_json(&run(&["ladder"], &path));
    assert_eq!(floats(&p, "price"), floats(&l, "price"));
    assert!(floats(&l, "gamma")[0] < 0.0);
}

#[test]
fn double_barrier_delta_signs() {
    let path = configs_dir().join("dnt.json");
    for method in ["volterra", "laplace"] {
        let d = stdout_json(&run(&["deltas", "--method", method], &path));
        assert_eq!(d["method"], method);
        let (plus, minus) = (floats(&d, "delta_plus"), floats(&d, "delta_minus"));
        let upto = plus.len() * 9 / 10;
        assert!(plus[..upto].iter().all(|&x| x <= 1e-9), "{method}");
        assert!(minus[..upto].iter().all(|&x| x >= -1e-9), "{method}");
    }
}

#[test]
fn compare_passes_and_fails() {
    let dnt = configs_dir().join("dnt.json");
    let out = run(&["compare", "--seed", "3"], &dnt);
    let v = stdout_json(&out);
    assert_eq!(v["pass"], true);
    assert!(floats(&v, "closed_form_rel_error")
        .iter()
        .all(|&e| e < 1e-2));

    // two unbridged steps let most knocked-out paths survive
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs_dir().join("dao_call.json")).unwrap().replace(
        r#""method": "volterra""#,
        r#""method": "volterra", "oracles": { "mc": { "paths": 20000, "steps": 2, "seed": 1, "bridge_correction": false } }"#,
    );
    let dao = write_config(&dir, "biased.json", &text);
    let out = run(&["compare"], &dao);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], false);
}

#[test]
fn out_flag_and_pretty_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = configs_dir().join("exponential_dao.json");
    let target = dir.path().join("result.csv");
    let out = bin()
        .args(["ladder", "--format", "csv", "--out"])
        .arg(&target)
        .arg("--config")
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&target).unwrap();
    assert!(text.starts_with("spot,price,delta,gamma\n"));
    assert_eq!(text.lines().count(), 4);

    let pretty = run(&["price", "--pretty"], &path);
    let text = String::from_utf8(pretty.stdout).unwrap();
    assert!(text.contains("\n  \"rows\": ["));
    assert!(text.contains("\"spot\": 100.000000"));
}
