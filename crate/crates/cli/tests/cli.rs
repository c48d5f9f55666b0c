use std::path::Path;
use std::process::{Command, Output};

fn tribell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tribell")).args(args).output().expect("binary runs")
}

fn rows(out: &Output) -> Vec<Vec<String>> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn value(rows: &[Vec<String>], experiment: &str, settings: Option<&str>) -> f64 {
    rows.iter()
        .find(|r| r[0] == experiment && settings.is_none_or(|s| r[1] == s))
        .unwrap_or_else(|| panic!("row {experiment} missing"))[2]
        .parse()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bad_config_exits_with_two_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let out_s = out.to_str().unwrap();
    for (name, body) in [
        ("malformed.json", "{\"p_c\": 0.001,"),
        ("unknown.json", "{\"p_c\": 0.001, \"colour\": 3}"),
        ("range.json", "{\"eta\": 1.5}"),
        ("pc.json", "{\"p_c\": 0.5}"),
    ] {
        let cfg = write(dir.path(), name, body);
        let o = tribell(&["ghz", "--config", &cfg, "--out", out_s]);
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name} left output behind");
    }
    assert_eq!(tribell(&["ghz", "--config", "/nonexistent/cfg.json"]).status.code(), Some(2));
    assert_eq!(tribell(&["ghz", "--engine", "quantum"]).status.code(), Some(2));
    assert_eq!(tribell(&["ghz", "--threads", "0"]).status.code(), Some(2));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"seed": 3, "shots": 500, "engine": "montecarlo"}"#);
    let o = tribell(&["ghz", "--config", &cfg, "--shots", "700"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("# config {"));
    assert!(header.contains("\"shots\":700") && header.contains("\"seed\":3"));
}

#[test]
fn pair_defaults_and_dead_detectors() {
    let o = tribell(&["pair"]);
    assert!(o.status.success());
    let r = rows(&o);
    assert!(value(&r, "pair_fidelity", None) >= 0.999);
    assert_eq!(value(&r, "pair_success", None), 1.0);

    let o = tribell(&["pair", "--eta", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&o);
    assert_eq!(value(&r, "pair_herald_probability", None), 0.0);
    assert_eq!(value(&r, "pair_success", None), 0.0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("note:"));
}

#[test]
fn ghz_exact_and_sampled() {
    let exact = rows(&tribell(&["ghz"]));
    for (s, v) in [("YYX", -1.0), ("YXY", -1.0), ("XYY", -1.0), ("XXX", 1.0)] {
        assert_eq!(value(&exact, "ghz_correlation", Some(s)), v);
    }
    assert_eq!(value(&exact, "ghz_lhv_xxx_prediction", None), -1.0);
    let mc = rows(&tribell(&["ghz", "--engine", "montecarlo", "--shots", "100000", "--seed", "1"]));
    for r in mc.iter().filter(|r| r[0] == "ghz_correlation") {
        let (v, se): (f64, f64) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        let e = value(&exact, "ghz_correlation", Some(&r[1]));
        assert!((v - e).abs() <= 5.0 * se + 1e-12);
    }
}

#[test]
fn csv_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["w", "--engine", "montecarlo", "--shots", "5000", "--seed", "42", "--flag-treatment", "erase"];
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "1"].iter().enumerate() {
        let path = dir.path().join(format!("run{i}.csv"));
        let mut a = vec!["--threads", threads, "--out", path.to_str().unwrap()];
        a.extend(args);
        assert!(tribell(&a).status.success());
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn w_flag_treatments() {
    let abs = rows(&tribell(&["w", "--flag-treatment", "abstract"]));
    for e in ["w_two_z_minus_one", "w_xj_eq_xk_given_zi", "w_xi_eq_xk_given_zj"] {
        assert!((value(&abs, e, None) - 1.0).abs() < 1e-9);
    }
    assert!((value(&abs, "w_all_equal", None) - 0.75).abs() < 1e-9);

    let o = tribell(&["w", "--flag-treatment", "trace"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("discrepancy"));
    let trace = rows(&o);
    assert!((value(&trace, "w_xj_eq_xk_given_zi", None) - 0.5).abs() < 1e-9);
    assert!((value(&trace, "w_xi_eq_xk_given_zj", None) - 0.5).abs() < 1e-9);

    let erase = rows(&tribell(&["w", "--flag-treatment", "erase"]));
    assert!((value(&erase, "w_xj_eq_xk_given_zi", None) - 1.0).abs() < 1e-9);
}

#[test]
fn mermin_examples() {
    let w = rows(&tribell(&["mermin", "--protocol", "w", "--a", "Z", "--b", "X", "--flag-treatment", "abstract"]));
    assert!((value(&w, "mermin_value", None) + 3.0).abs() < 1e-9);
    assert_eq!(value(&w, "mermin_violated", None), 1.0);
    let g = rows(&tribell(&["mermin", "--protocol", "ghz", "--a", "X", "--b", "Y"]));
    assert!((value(&g, "mermin_value", None) - 4.0).abs() < 1e-9);
    let p = rows(&tribell(&["mermin", "--protocol", "ghz", "--source", "product"]));
    assert!(value(&p, "mermin_value", None).abs() <= 2.0 + 1e-9);
    assert_eq!(value(&p, "mermin_violated", None), 0.0);
    assert_eq!(tribell(&["mermin", "--protocol", "pair"]).status.code(), Some(2));
}

#[test]
fn timing_examples() {
    let g = rows(&tribell(&["timing", "--protocol", "ghz", "--t0", "1", "--shots", "4000"]));
    assert_eq!(value(&g, "formula_time", None), 4.0);
    let mean = value(&g, "simulated_mean_attempts", None);
    assert!((mean - 4.0).abs() < 0.3, "{mean}");
    let g = rows(&tribell(&["timing", "--protocol", "ghz", "--eta", "0.5", "--shots", "200"]));
    assert_eq!(value(&g, "formula_time", None), 32.0);
    let w = rows(&tribell(&["timing", "--protocol", "w", "--t0", "1", "--t1", "2", "--shots", "200"]));
    assert_eq!(value(&w, "formula_time", None), 8.0);
    assert_eq!(value(&w, "coincidence_weight", None), 0.125);
    assert_eq!(tribell(&["timing", "--protocol", "pair", "--pc", "0", "--shots", "3"]).status.code(), Some(3));
}

#[test]
fn json_report_carries_config_and_hash() {
    let o = tribell(&["--format", "json", "ghz"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let hash = doc["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 16);
    let records = doc["records"].as_array().unwrap();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| r["config_hash"] == hash));
    assert_eq!(doc["config"]["protocol"], "ghz");
    let csv = String::from_utf8(tribell(&["ghz"]).stdout).unwrap();
    assert!(csv.lines().nth(2).unwrap().ends_with(hash));
}
