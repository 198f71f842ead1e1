use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hillkg"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, config: &str, args: &[&str]) {
    let o = run(dir, config, args);
    assert!(
        o.status.success(),
        "{args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

const COSINE: &str = "schema_version = 1\npotential = \"cosine\"\nq = 1.0\nn_max = 8\n";
const FREE: &str = "schema_version = 1\npotential = \"free\"\nn_max = 8\n";

#[test]
fn bands_csv_layout() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), COSINE, &["bands"]);
    let csv = read(d.path(), "bands.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "n,ell_n,A_plus,A_minus_next,gap_w,edge_offset_times_ell");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert_eq!(r.len(), 6);
        for cell in &r[2..] {
            let mantissa = cell.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17, "{cell}");
        }
    }
    assert_eq!(json(d.path(), "bands.json")["schema_version"], 1);
}

#[test]
fn free_gaps_vanish() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), FREE, &["bands"]);
    for line in read(d.path(), "bands.csv").lines().skip(1) {
        let gap: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(gap, 0.0, "{line}");
    }
}

#[test]
fn cosine_edges_pass_oracle() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), COSINE, &["bands", "--oracle"]);
    let err = json(d.path(), "bands.json")["oracle"]["max_abs_err"].as_f64().unwrap();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn lame_first_edges() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), "potential = \"lame\"\nkappa = 0.9\nn_max = 4\n", &["bands"]);
    let raw: Vec<f64> = json(d.path(), "bands.json")["raw_edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((raw[0] / raw[1] - 0.81).abs() < 1e-8, "{raw:?}");
}

#[test]
fn deterministic_outputs() {
    let cfg = format!("{COSINE}t_list = [2.0, 4.0]\nr_max = 6.0\nr_step = 0.5\nx_offsets = 2\nvdc_instances = 12\n");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        for cmd in [&["bands"][..], &["decay"], &["vdc-suite", "--seed", "7"], &["kernel", "--t", "3", "--x", "0.2", "--y", "-0.4"]] {
            ok(d.path(), &cfg, cmd);
        }
    }
    for f in ["bands.csv", "bands.json", "decay.csv", "decay.json", "vdc-suite.csv", "vdc-suite.json", "kernel.json"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs between identical runs");
    }
}

#[test]
fn seed_changes_the_sweep() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "vdc_instances = 6\n";
    ok(d.path(), cfg, &["vdc-suite", "--seed", "1"]);
    let first = read(d.path(), "vdc-suite.csv");
    ok(d.path(), cfg, &["vdc-suite", "--seed", "2"]);
    assert_ne!(first, read(d.path(), "vdc-suite.csv"));
    assert_eq!(json(d.path(), "vdc-suite.json")["seed"], 2);
}

#[test]
fn cache_gives_identical_columns() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), COSINE, &["bands", "--no-cache"]);
    let fresh = read(d.path(), "bands.csv");
    ok(d.path(), COSINE, &["bands"]);
    let cache_dir = d.path().join("out/cache");
    assert_eq!(std::fs::read_dir(&cache_dir).unwrap().count(), 1);
    assert_eq!(fresh, read(d.path(), "bands.csv"));
    // second run reads the table back from disk
    ok(d.path(), COSINE, &["bands"]);
    assert_eq!(fresh, read(d.path(), "bands.csv"));
    ok(d.path(), COSINE, &["kernel", "--t", "2", "--x", "0.1", "--y", "0.3"]);
    let cached = json(d.path(), "kernel.json")["result"].clone();
    ok(d.path(), COSINE, &["kernel", "--no-cache", "--t", "2", "--x", "0.1", "--y", "0.3"]);
    assert_eq!(cached, json(d.path(), "kernel.json")["result"]);
}

#[test]
fn free_dset_is_empty() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), FREE, &["dset"]);
    let v = json(d.path(), "dset.json");
    assert_eq!(v["candidates"].as_array().unwrap().len(), 0);
}

#[test]
fn kernel_zero_time_and_symmetry() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), COSINE, &["kernel", "--t", "0", "--x", "0.3", "--y", "0.1"]);
    let v = json(d.path(), "kernel.json");
    assert!(v["result"]["value"][0].as_f64().unwrap().abs() < 1e-12);
    ok(d.path(), COSINE, &["kernel", "--t", "4", "--x", "0.3", "--y", "-0.6"]);
    let a = json(d.path(), "kernel.json")["result"]["value"][0].as_f64().unwrap();
    ok(d.path(), COSINE, &["kernel", "--t", "4", "--x", "-0.6", "--y", "0.3"]);
    let b = json(d.path(), "kernel.json")["result"]["value"][0].as_f64().unwrap();
    assert!((a - b).abs() < 1e-9 * a.abs().max(1e-3), "{a} {b}");
}

#[test]
fn free_kernel_oracle_mode() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), FREE, &["kernel", "--oracle", "--t", "10", "--x", "9.25", "--y", "0.25"]);
    let rel = json(d.path(), "kernel.json")["oracle"]["rel_err"].as_f64().unwrap();
    assert!(rel < 1e-4, "{rel}");
}

#[test]
fn decay_report_fields() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &format!("{FREE}t_list = [1.0, 3.0, 10.0, 30.0]\nx_offsets = 1\n"), &["decay"]);
    let v = json(d.path(), "decay.json");
    assert!(v["fit"]["slope"].as_f64().is_some());
    assert_eq!(v["degenerate_mass"], false);
    let csv = read(d.path(), "decay.csv");
    assert_eq!(csv.lines().next().unwrap(), "t,sup_abs_K,sup_abs_K_times_t_cbrt");
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn bad_configs_fail_cleanly() {
    let d = tempfile::tempdir().unwrap();
    for bad in ["schema_version = 9\n", "mu = -1.0\n", "unknown_key = 1\n", "t_list = [3.0, 1.0]\n"] {
        let o = run(d.path(), bad, &["bands"]);
        assert_eq!(o.status.code(), Some(1), "{bad}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
}

#[test]
fn vdc_suite_has_no_violations() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), "vdc_instances = 60\n", &["vdc-suite", "--oracle", "--seed", "11"]);
    let v = json(d.path(), "vdc-suite.json");
    assert_eq!(v["violations"], 0);
}
