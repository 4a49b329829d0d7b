use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use powerlaw_periodic::cli::artifacts::{sha256_hex, RunManifest, MANIFEST, ORBIT, TRAJECTORY};
use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_powerlaw-periodic"));
    c.env("RUST_LOG", "off");
    c
}

fn example_config(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs").join(name);
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    if let Some(cfg) = config {
        c.arg("--config").arg(cfg);
    }
    c.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_forcing_gives_the_zero_orbit() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_config("linear_orbit.json");
    cfg["forcing"]["modes"] = json!([]);
    let path = write_config(tmp.path(), "zero.json", &cfg);
    let out = tmp.path().join("run");
    let o = run(&["solve-periodic"], Some(&path), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let orbit: Value = serde_json::from_str(&std::fs::read_to_string(out.join(ORBIT)).unwrap()).unwrap();
    assert_eq!(orbit["converged"], json!(true));
    assert_eq!(orbit["residual"], json!(0.0));
    assert!(orbit["initial"].as_array().unwrap().iter().all(|m| m["re"] == json!(0.0) && m["im"] == json!(0.0)));
    let v = run(&["verify"], None, &out);
    assert_eq!(code(&v), 0, "{}", String::from_utf8_lossy(&v.stdout));
}

#[test]
fn invalid_q_is_rejected_with_its_location() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_config("linear_orbit.json");
    cfg["stress"]["q"] = json!(1.0);
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let o = run(&["solve-periodic"], Some(&path), &tmp.path().join("run"));
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("q > 6/5"), "{err}");
    assert!(err.contains("bad.json:"), "{err}");
    assert!(!tmp.path().join("run").join(MANIFEST).exists());
}

#[test]
fn malformed_and_unknown_inputs_are_invalid() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_config("linear_orbit.json");
    cfg["stress"]["viscosity"] = json!(1.0);
    let path = write_config(tmp.path(), "unknown.json", &cfg);
    assert_eq!(code(&run(&["solve-periodic"], Some(&path), &tmp.path().join("a"))), 2);

    let broken = tmp.path().join("broken.json");
    std::fs::write(&broken, "{\n  \"schema_version\": 1,\n  \"domain\": [\n").unwrap();
    let o = run(&["solve-periodic"], Some(&broken), &tmp.path().join("b"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("broken.json:"), "{}", stderr(&o));

    let o = bin().args(["solve-periodic", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 2);
    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 2);
}

#[test]
fn degenerate_rheology_needs_override() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_config("linear_orbit.json");
    cfg["stress"] = json!({ "q": 1.5, "kappa": 0.0 });
    cfg["forcing"]["modes"] = json!([]);
    let path = write_config(tmp.path(), "degenerate.json", &cfg);
    let o = run(&["solve-periodic"], Some(&path), &tmp.path().join("a"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("11/5"), "{}", stderr(&o));
    let o = run(&["solve-periodic", "--override-degenerate"], Some(&path), &tmp.path().join("b"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn extinction_rejects_shear_thickening() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_config("extinction.json");
    cfg["stress"] = json!({ "q": 2.5, "kappa": 0.0 });
    let path = write_config(tmp.path(), "thick.json", &cfg);
    let o = run(&["extinction"], Some(&path), &tmp.path().join("run"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("q < 2"), "{}", stderr(&o));
}

#[test]
fn extinction_rejects_a_period_too_short_for_the_bound() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_config("extinction.json");
    cfg["forcing"]["period"] = json!(2.0);
    cfg["forcing"]["shutoff"] = json!(1.0);
    let path = write_config(tmp.path(), "short.json", &cfg);
    let o = run(&["extinction"], Some(&path), &tmp.path().join("run"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("need T >="), "{}", stderr(&o));
}

fn solved_linear_run(tmp: &TempDir) -> PathBuf {
    let path = write_config(tmp.path(), "linear.json", &example_config("linear_orbit.json"));
    let out = tmp.path().join("run");
    let o = run(&["solve-periodic"], Some(&path), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

#[test]
fn verify_flags_corrupted_artifacts_as_invalid_input() {
    let tmp = TempDir::new().unwrap();
    let out = solved_linear_run(&tmp);
    let csv = out.join(TRAJECTORY);
    let text = std::fs::read_to_string(&csv).unwrap();
    std::fs::write(&csv, &text[..text.len() / 2]).unwrap();
    let v = run(&["verify"], None, &out);
    assert_eq!(code(&v), 2);
    assert!(stderr(&v).contains("digest mismatch"), "{}", stderr(&v));

    std::fs::remove_file(out.join(MANIFEST)).unwrap();
    assert_eq!(code(&run(&["verify"], None, &out)), 2);
}

#[test]
fn verify_fails_on_injected_energy() {
    let tmp = TempDir::new().unwrap();
    let out = solved_linear_run(&tmp);
    let csv = out.join(TRAJECTORY);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mid = lines.len() / 2;
    let mut fields: Vec<String> = lines[mid].split(',').map(String::from).collect();
    let kinetic: f64 = fields[1].parse().unwrap();
    fields[1] = format!("{:.16e}", kinetic + 10.0);
    lines[mid] = fields.join(",");
    let tampered = lines.join("\n") + "\n";
    std::fs::write(&csv, &tampered).unwrap();

    let mpath = out.join(MANIFEST);
    let mut manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
    let entry = manifest.artifacts.iter_mut().find(|a| a.path == TRAJECTORY).unwrap();
    entry.sha256 = sha256_hex(tampered.as_bytes());
    entry.bytes = tampered.len() as u64;
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();

    let v = run(&["verify"], None, &out);
    assert_eq!(code(&v), 1, "{}", stderr(&v));
    let stdout = String::from_utf8_lossy(&v.stdout);
    assert!(stdout.contains("FAIL energy_inequality"), "{stdout}");
    assert!(stdout.contains("FAIL reproducible"), "{stdout}");
}

#[test]
fn one_cell_sweep_matches_solve_periodic() {
    let tmp = TempDir::new().unwrap();
    let single = solved_linear_run(&tmp);
    let mut cfg = example_config("linear_orbit.json");
    cfg["sweep"] = json!({ "n_max": [2], "epsilon": [0.0], "kappa": [0.0] });
    let path = write_config(tmp.path(), "sweep.json", &cfg);
    let out = tmp.path().join("sweep");
    let o = run(&["sweep"], Some(&path), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let manifest: RunManifest = serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST)).unwrap()).unwrap();
    let cell_orbit = manifest.artifacts.iter().find(|a| a.path.ends_with(ORBIT)).unwrap();
    let prefix = cell_orbit.path.trim_end_matches(ORBIT);
    for name in [ORBIT, TRAJECTORY] {
        let a = std::fs::read(single.join(name)).unwrap();
        let b = std::fs::read(out.join(format!("{prefix}{name}"))).unwrap();
        assert!(a == b, "{name} differs between solve-periodic and the sweep cell");
    }
    assert_eq!(code(&run(&["verify"], None, &out)), 0);
}

#[test]
fn sweep_resumes_finished_cells() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = example_config("linear_orbit.json");
    cfg["sweep"] = json!({ "n_max": [2], "epsilon": [0.0, 0.01], "kappa": [0.0] });
    let path = write_config(tmp.path(), "sweep.json", &cfg);
    let out = tmp.path().join("sweep");
    assert_eq!(code(&run(&["sweep", "--workers", "2"], Some(&path), &out)), 0);
    let first: RunManifest = serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST)).unwrap()).unwrap();
    let stamp = |m: &RunManifest| -> Vec<_> {
        m.artifacts
            .iter()
            .map(|a| (a.path.clone(), std::fs::metadata(out.join(&a.path)).unwrap().modified().unwrap()))
            .filter(|(p, _)| p.starts_with("cells/"))
            .collect()
    };
    let before = stamp(&first);
    assert_eq!(before.len() % 4, 0);

    assert_eq!(code(&run(&["sweep", "--workers", "1"], Some(&path), &out)), 0);
    let second: RunManifest = serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST)).unwrap()).unwrap();
    let cells: Vec<_> = second.stages.iter().filter(|s| s.name.starts_with("cell ")).collect();
    assert_eq!(cells.len(), 2);
    assert!(cells.iter().all(|s| s.status == "resumed"), "{cells:?}");
    assert_eq!(stamp(&second), before);
    assert_eq!(first.artifacts, second.artifacts);
}

#[test]
fn orbit_json_is_reproducible_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "linear.json", &example_config("linear_orbit.json"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&run(&["solve-periodic", "--workers", "1"], Some(&path), &a)), 0);
    assert_eq!(code(&run(&["solve-periodic", "--workers", "3"], Some(&path), &b)), 0);
    assert_eq!(std::fs::read(a.join(ORBIT)).unwrap(), std::fs::read(b.join(ORBIT)).unwrap());
    assert_eq!(std::fs::read(a.join(TRAJECTORY)).unwrap(), std::fs::read(b.join(TRAJECTORY)).unwrap());
}
