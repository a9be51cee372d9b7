//! Runs the `mdrate` binary on instance documents fed through stdin.

use std::io::Write;
use std::process::{Command, Output, Stdio};

const FLAGSHIP: &str = "N 1\nL 2\nKx\n1.0\nD 1\n0.5\nD 2\n0.5\nD0\n0.2\n";

fn mdrate(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_mdrate"))
        .args(args)
        .arg("-")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn sumrate_text() {
    let o = mdrate(&["sumrate"], FLAGSHIP);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("sum_rate_nats: 0.836988216786\ncase: Interior\n"), "{text}");
}

#[test]
fn sumrate_bits() {
    let o = mdrate(&["sumrate", "--bits", "--json"], FLAGSHIP);
    let v = json(&o)["sum_rate_bits"].as_f64().unwrap();
    assert!((v - 0.5 * (16.0f64 / 3.0).log2()).abs() < 1e-11);
    assert!((v - 1.207519).abs() < 1e-6);
}

#[test]
fn json_keys_and_stability() {
    let a = mdrate(&["sumrate", "--json"], FLAGSHIP);
    let b = mdrate(&["sumrate", "--json"], FLAGSHIP);
    assert_eq!(a.stdout, b.stdout);
    let doc = json(&a);
    let keys: Vec<&str> = doc.as_object().unwrap().keys().map(String::as_str).collect();
    for k in ["sum_rate_nats", "case", "A_star", "Kz", "Kw_block_1", "Kw_block_2", "D_achieved_1", "D_achieved_2", "D0_achieved", "corners"] {
        assert!(keys.contains(&k), "missing {k} in {keys:?}");
    }
    assert_eq!(keys[0], "sum_rate_nats");
}

#[test]
fn verify_passes() {
    let o = mdrate(&["verify", "--samples", "1000000", "--seed", "42", "--json"], FLAGSHIP);
    assert_eq!(o.status.code(), Some(0));
    let doc = json(&o);
    assert_eq!(doc["pass"], serde_json::Value::Bool(true));
    assert!(doc["max_rel_err"].as_f64().unwrap() <= 0.02);
    let again = mdrate(&["verify", "--samples", "1000000", "--seed", "42", "--json"], FLAGSHIP);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn verify_failure_exit_code() {
    let o = mdrate(&["verify", "--samples", "1000", "--tol", "1e-9"], FLAGSHIP);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("pass: false"));
}

#[test]
fn region_and_vertices() {
    let o = mdrate(&["region"], FLAGSHIP);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("subsets: bitmask, lowest bit = description 1"));
    assert!(text.contains("subset,members,bound\n1,{1},0.34657359028\n"), "{text}");
    assert!(text.contains("order,R1,R2\n1 2,0.34657359028,0.490414626506\n"), "{text}");

    let three = "N 1\nL 3\nKx\n1\nD 1\n0.4\nD 2\n0.4\nD 3\n0.4\nD0\n0.15\n";
    let doc = json(&mdrate(&["vertices", "--json"], three));
    let vertices = doc["vertices"].as_array().unwrap();
    assert_eq!(vertices.len(), 6);
    for v in vertices {
        let total: f64 = (1..=3).map(|l| v[format!("R{l}")].as_f64().unwrap()).sum();
        assert!((total - 1.391717519).abs() < 1e-8, "{total}");
    }
}

#[test]
fn scalar_and_riccati() {
    let doc = json(&mdrate(&["scalar", "--json"], &FLAGSHIP.replace("0.2", "0.7").replace("0.5", "0.9")));
    assert_eq!(doc["case"], "Case3");
    assert_eq!(doc["a_star"].as_f64(), Some(1.0));
    let doc = json(&mdrate(&["riccati", "--json"], FLAGSHIP));
    assert_eq!(doc["path"], "riccati");
    assert_eq!(doc["interior_guaranteed"], serde_json::Value::Bool(true));
    assert!((doc["A_star"][0][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let o = mdrate(&["riccati"], "N 1\nL 1\nKx\n1\nD 1\n0.5\nD0\n0.2\n");
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn input_errors() {
    let o = mdrate(&["sumrate"], &FLAGSHIP.replace("D0\n0.2", "D0\n0.5"));
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("D0 ≺ D1"), "{err}");

    let o = mdrate(&["sumrate", "--json"], "N 2\nL 1\nKx\n1 0\n0\n");
    assert_eq!(o.status.code(), Some(3));
    let e: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "parse");
    assert_eq!(e["line"], 5);
    assert_eq!(e["parse_error"], "dimension");

    let o = mdrate(&["scalar"], "N 2\nL 1\nKx\n1 0\n0 1\nD 1\n0.5 0\n0 0.5\nD0\n0.2 0\n0 0.2\n");
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors() {
    let o = Command::new(env!("CARGO_BIN_EXE_mdrate")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_mdrate")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8(o.stdout).unwrap().contains("sumrate"));
}
