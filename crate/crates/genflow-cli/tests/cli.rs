use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn genflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genflow")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn failing(r: &Value) -> Vec<String> {
    r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["asserted"] == true && c["pass"] == false)
        .map(|c| c["check"].as_str().unwrap().to_string())
        .collect()
}

const KINETIC: &str = r#"
version = 1
seed = 4

[model]
kind = "kinetic"
potential = { kind = "quadratic" }
grid = { x = { min = -7.0, max = 7.0, n = 32 }, v = { min = -7.0, max = 7.0, n = 32 } }

[evolve]
t_end = 2.0
monitors = ["S_mu", "h_norm2_mu"]
initial = { kind = "gaussian", center = [1.0, -0.5], std = 1.0 }
"#;

#[test]
fn reversible_chain_audit_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "version = 1\n[model]\nkind = \"chain\"\nrates = [[-1.0, 1.0], [2.0, -2.0]]\nreversible = true\n");
    let out = tmp.path().join("out");
    let o = genflow(&["full-audit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    assert_eq!(r["model"]["states"], 2);

    let m: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let entry = m["files"].as_array().unwrap().iter().find(|f| f["name"] == "report.json").unwrap();
    let bytes = std::fs::read(out.join("report.json")).unwrap();
    use sha2::Digest;
    let hex: String = sha2::Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(entry["sha256"], hex.as_str());
    let cfg_hex: String = sha2::Sha256::digest(std::fs::read(&cfg).unwrap()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(m["config_sha256"], cfg_hex.as_str());
}

#[test]
fn corrupted_reversible_chain_fails_detailed_balance() {
    // A birth-death chain with one extra jump 0 -> 2.
    let q: [[f64; 3]; 3] = [[-1.3, 1.0, 0.3], [1.0, -2.0, 1.0], [0.0, 2.0, -2.0]];
    // Kolmogorov's cycle criterion on 0 -> 1 -> 2 -> 0 fails, so no detailed balance exists.
    let forward = q[0][1] * q[1][2] * q[2][0];
    let backward = q[0][2] * q[2][1] * q[1][0];
    assert!((forward - backward).abs() > 0.1);

    let tmp = tempfile::tempdir().unwrap();
    let rows: Vec<String> = q.iter().map(|r| format!("[{}]", r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", "))).collect();
    let text = format!("version = 1\ntask = \"structure-check\"\n[model]\nkind = \"chain\"\nrates = [{}]\nreversible = true\n", rows.join(", "));
    let cfg = write(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("out");
    let o = genflow(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(failing(&report(&out)), vec!["detailed-balance".to_string()]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("detailed-balance"));
}

#[test]
fn schema_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cases = [
        ("unknown.toml", "version = 1\ncolour = \"red\"\n[model]\nkind = \"chain\"\nrates = [[-1.0, 1.0], [1.0, -1.0]]\n"),
        ("version.toml", "version = 2\n[model]\nkind = \"chain\"\nrates = [[-1.0, 1.0], [1.0, -1.0]]\n"),
        ("grid.toml", "version = 1\n[model]\nkind = \"kinetic\"\npotential = { kind = \"quadratic\" }\n"),
        ("monitor.toml", &KINETIC.replace("\"h_norm2_mu\"", "\"bogus\"")),
    ];
    for (name, text) in cases {
        let cfg = write(tmp.path(), name, text);
        let o = genflow(&["structure-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = genflow(&["structure-check", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let bad = write(tmp.path(), "report.json", "{\"schema\": 1}");
    assert_eq!(code(&genflow(&["render", bad.to_str().unwrap()])), 2);
}

#[test]
fn evolve_then_render() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "k.toml", KINETIC);
    let out = tmp.path().join("out");
    let o = genflow(&["fp-evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--T", "1.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    let ev = &r["evolution"];
    assert_eq!(ev["t_end"], 1.5);
    let s: Vec<f64> = ev["monitors"][0]["values"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(ev["monitors"][0]["name"], "S_mu");
    assert!(s.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(s.last().unwrap() < &s[0]);
    for f in ["trace.csv", "final_density.json", "final_density.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }

    let plots = tmp.path().join("plots");
    let o = genflow(&["render", out.join("report.json").to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(plots.join("S_mu.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,S_mu"));
    assert_eq!(lines.count(), s.len());
    assert!(plots.join("h_norm2_mu.csv").is_file());

    let none = write(tmp.path(), "none.toml", &KINETIC.replace("monitors = [\"S_mu\", \"h_norm2_mu\"]", "monitors = []"));
    let out2 = tmp.path().join("out2");
    assert_eq!(code(&genflow(&["fp-evolve", "--config", none.to_str().unwrap(), "--out", out2.to_str().unwrap()])), 0);
    let plots2 = tmp.path().join("plots2");
    assert_eq!(code(&genflow(&["render", out2.join("report.json").to_str().unwrap(), "--out", plots2.to_str().unwrap()])), 0);
    assert_eq!(std::fs::read_dir(&plots2).unwrap().count(), 0);
}

fn without_timestamp(dir: &Path) -> Value {
    let mut r = report(dir);
    r.as_object_mut().unwrap().remove("generated_at");
    r
}

#[test]
fn reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{KINETIC}\n[sample]\nt_end = 300.0\n").replace("kind = \"kinetic\"", "kind = \"andersen\"\nlambda_r = 1.0");
    let cfg = write(tmp.path(), "a.toml", &text);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = genflow(&["full-audit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(without_timestamp(&a), without_timestamp(&b));
    for f in ["trace.csv", "final_density.json", "trajectory.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sampler_from_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = genflow(&[
        "pdmp-sample",
        "--potential",
        "quadratic",
        "--v-tilde",
        "tilt:1",
        "--lambda-r",
        "1",
        "--T",
        "200",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["t", "x1", "v1", "event_kind"]);
    let mut last = -1.0;
    let mut bounces = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let t: f64 = rec[0].parse().unwrap();
        assert!(t >= last);
        last = t;
        bounces += usize::from(&rec[3] == "bounce");
    }
    assert!(bounces > 0);
    let r = report(&out);
    assert_eq!(r["sampler"]["bounces"].as_u64().unwrap() as usize, bounces);
    assert!(last < 200.0 && last > 199.8);

    let o = genflow(&["pdmp-sample", "--potential", "cubic:1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            genflow_cli::config::load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
